import torch


def handle(n):
    a = torch.rand(n, n)
    b = torch.rand(n, n)
    c = torch.matmul(a, b)
    return float(c.sum())
