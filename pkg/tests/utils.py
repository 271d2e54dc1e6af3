import torch

from nisd.numerics import largest_angle


def check_ratio(vref, v2, eps=1e-3):
    if vref == 0:
        ratio = v2
    else:
        ratio = (v2 - vref) / vref
    assert abs(ratio) < eps


def check_tensors(tref, t2, eps=1e-3, only_print_diff=False):
    if torch.linalg.vector_norm(tref) == 0:
        relative_diff = torch.linalg.vector_norm(t2 - tref)
    else:
        relative_diff = torch.linalg.vector_norm(t2 - tref) / torch.linalg.vector_norm(tref)
    if only_print_diff:
        print(relative_diff)
    else:
        assert relative_diff < eps
    return relative_diff


def check_subspaces(A, B, eps=1e-7):
    """Same dimension and largest principal angle below ``eps``."""
    assert A.dim == B.dim
    assert largest_angle(A, B) <= eps


def matched_roots(found, expected, eps=1e-8):
    """True when the two lists of complex numbers agree as multisets."""
    found = list(found)
    if len(found) != len(expected):
        return False
    for z in expected:
        dist = [abs(z - w) for w in found]
        i = min(range(len(found)), key=dist.__getitem__)
        if dist[i] > eps:
            return False
        found.pop(i)
    return True
