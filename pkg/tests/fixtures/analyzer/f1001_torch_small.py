# expect: mode=cpu_preferred dl_import=1 gpu_explicit=0 big_ops=0 small_ops=1
import torch


def handler():
    a = torch.zeros(10, 10)
    return torch.matmul(a, a)
