# expect: mode=gpu dl_import=1 gpu_explicit=1 big_ops=1 small_ops=1
import torch


def handler(q, k):
    a = torch.rand(3000, 3000)
    scores = torch.einsum("ij,jk->ik", q, k)
    return torch.matmul(a, a).cuda(), scores
