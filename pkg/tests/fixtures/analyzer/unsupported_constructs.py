# expect: mode=gpu_preferred dl_import=1 gpu_explicit=0 big_ops=1 small_ops=0
import torch


def handler(items):
    a = torch.zeros(2000, 2000)
    try:
        while items:
            items.pop()
    except IndexError:
        pass
    with torch.no_grad():
        out = [torch.matmul(a, a) for _ in range(2)]
    return out
