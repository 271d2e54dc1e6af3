import torch

CDTYPE = torch.complex128


def kronecker(A, B):
    sA = A.size()
    sB = B.size()
    return (
        (A.view(sA[0], 1, sA[1], 1) * B.view(1, sB[0], 1, sB[1]))
        .contiguous()
        .view(sA[0] * sB[0], sA[1] * sB[1])
    )


def shift_matrix(n_in, n_out, k=1, m=1):
    """
    Matrix of :math:`z^k` acting on coefficient vectors of :math:`\\mathbb C^m`
    valued polynomials, from degree budget ``n_in - 1`` to ``n_out - 1``.
    Coefficients are interleaved by degree, so the scalar matrix is lifted
    with a Kronecker product by the identity of :math:`\\mathbb C^m`.
    """
    S = torch.zeros(n_out, n_in, dtype=CDTYPE)
    for j in range(n_in):
        if 0 <= j + k < n_out:
            S[j + k, j] = 1.0
    if m == 1:
        return S
    return kronecker(S, torch.eye(m, dtype=CDTYPE))


def convolve(a, b, n_out=None):
    """
    Cauchy product of two coefficient sequences, truncated to ``n_out``
    coefficients (full length when None).
    """
    n_full = a.size(0) + b.size(0) - 1
    if n_out is None:
        n_out = n_full
    out = torch.zeros(n_out, dtype=torch.promote_types(a.dtype, b.dtype))
    for i in range(min(a.size(0), n_out)):
        length = min(b.size(0), n_out - i)
        out[i : i + length] += a[i] * b[:length]
    return out


def horner(coeffs, z):
    """
    Evaluates :math:`\\sum_n A_n z^n` for coefficients stacked along the first
    dimension, at every point of the 1d tensor ``z``.

    :return: a tensor of shape ``(len(z),) + coeffs.shape[1:]``
    """
    z = torch.as_tensor(z, dtype=CDTYPE).reshape(-1)
    shape = (z.size(0),) + tuple(coeffs.shape[1:])
    acc = torch.zeros(shape, dtype=CDTYPE)
    z_b = z.view((-1,) + (1,) * (coeffs.dim() - 1))
    for n in range(coeffs.size(0) - 1, -1, -1):
        acc = acc * z_b + coeffs[n]
    return acc


def geometric(w, n):
    """
    Powers :math:`w^0,\\ldots,w^{n-1}` of a scalar or of every entry of a
    tensor, along a new last dimension. Built with running products, so
    :math:`0^0=1`.
    """
    w = torch.as_tensor(w, dtype=CDTYPE)
    out = torch.ones(tuple(w.shape) + (n,), dtype=CDTYPE)
    if n > 1:
        steps = w.unsqueeze(-1).expand(tuple(w.shape) + (n - 1,))
        out[..., 1:] = torch.cumprod(steps, dim=-1)
    return out
