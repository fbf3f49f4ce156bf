# expect: mode=gpu dl_import=0 gpu_explicit=1 big_ops=1 small_ops=1
import numpy


def handler(w):
    a = numpy.rand(2000, 2000)
    a = a.to("cuda:1") if True else a
    b = numpy.zeros(2000, 2000)
    return numpy.mm(b, b), numpy.mm(b, w)
