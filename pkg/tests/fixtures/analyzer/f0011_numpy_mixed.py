# expect: mode=cpu dl_import=0 gpu_explicit=0 big_ops=1 small_ops=1
import numpy as np


def handler():
    a = np.ones((4096, 4096))
    b = np.ones((8, 8))
    return np.matmul(a, a), np.matmul(b, b)
