# expect: mode=gpu dl_import=0 gpu_explicit=1 big_ops=0 small_ops=1
import numpy


def handler(x, w):
    x = x.to("cuda")
    return numpy.matmul(x, w)
