"""
Truncated vector valued Hardy spaces :math:`H^2(\\mathbb C^m)`.

Functions are :class:`nisd.object.vector.CoeffFn` objects. Operators that
raise the degree (the shift, analytic Toeplitz operators) map a budget
:math:`N` space into a budget :math:`N+d` space, so nothing is silently
truncated; callers decide where to project.
"""
import logging

import torch

from .errors import DomainError, ShapeError
from .maths import CDTYPE, horner, shift_matrix
from .object.operator import OperatorMatrix
from .object.vector import CoeffFn, HardySpec

logger = logging.getLogger(__name__)


class LaurentSymbol:
    """
    A Toeplitz symbol :math:`\\Phi(z)=\\sum_{k=-K}^{K'}\\Phi_k z^k` with finite
    support, each :math:`\\Phi_k` an operator block :math:`\\mathbb C^r\\to
    \\mathbb C^m`.

    :param blocks: dict mapping the integer index ``k`` to a tensor of shape
        ``(m, r)`` (or a scalar for ``m = r = 1``)
    """

    def __init__(self, blocks):
        if len(blocks) == 0:
            raise ShapeError("a symbol needs at least one coefficient")
        self.blocks = {}
        shape = None
        for k, b in blocks.items():
            b = torch.as_tensor(b).to(CDTYPE)
            if b.dim() == 0:
                b = b.view(1, 1)
            if shape is not None and tuple(b.shape) != shape:
                raise ShapeError("symbol blocks have different shapes")
            if not torch.isfinite(torch.view_as_real(b)).all():
                raise ShapeError("symbol block %d has non-finite entries" % k)
            shape = tuple(b.shape)
            self.blocks[int(k)] = b
        self.m, self.r = shape

    @staticmethod
    def from_coeffs(coeffs, low=0):
        """Scalar symbol with coefficients ``coeffs[i]`` at index ``low + i``."""
        return LaurentSymbol({low + i: c for i, c in enumerate(coeffs)})

    @property
    def support(self):
        return min(self.blocks), max(self.blocks)

    def is_analytic(self):
        return self.support[0] >= 0


def inner_product(f, g):
    """:math:`\\langle f,g\\rangle=\\sum_n\\langle A_n,B_n\\rangle`, linear in
    ``f``."""
    if f.spec != g.spec:
        raise ShapeError("%s and %s differ" % (f.spec, g.spec))
    return torch.vdot(g.get_flat_representation(), f.get_flat_representation()).item()


def shift(f):
    """:math:`Sf(z)=zf(z)`, into the budget :math:`N+1` space."""
    coeffs = torch.zeros(f.spec.degree + 2, f.spec.m, dtype=CDTYPE)
    coeffs[1:] = f.coeffs
    return CoeffFn(f.spec.padded(1), coeffs, f.tail_bound)


def backward_shift(f):
    """:math:`S^*f(z)=(f(z)-f(0))/z`, at the same budget."""
    coeffs = torch.zeros_like(f.coeffs)
    coeffs[:-1] = f.coeffs[1:]
    return CoeffFn(f.spec, coeffs, f.tail_bound)


def shift_operator(spec, k=1):
    """Matrix of :math:`S^k` from ``spec`` into ``spec.padded(k)``."""
    codomain = spec.padded(k)
    data = shift_matrix(spec.degree + 1, codomain.degree + 1, k, spec.m)
    return OperatorMatrix(data, spec, codomain)


def backward_shift_operator(spec):
    """Matrix of :math:`S^*` on ``spec``."""
    data = shift_matrix(spec.degree + 1, spec.degree + 1, -1, spec.m)
    return OperatorMatrix(data, spec, spec)


def toeplitz_matrix(sym, domain, codomain):
    """
    Matrix of :math:`T_\\Phi F=P_+(\\Phi F)` between truncated spaces: block
    :math:`(i,j)` is :math:`\\Phi_{i-j}`. Exact on polynomials of degree at
    most ``domain.degree`` whenever ``codomain.degree`` is at least that plus
    the largest index of the symbol.
    """
    if sym.r != domain.m or sym.m != codomain.m:
        raise ShapeError(
            "symbol blocks %dx%d cannot map %s to %s"
            % (sym.m, sym.r, domain, codomain)
        )
    n_out, n_in = codomain.degree + 1, domain.degree + 1
    data = torch.zeros(n_out, sym.m, n_in, sym.r, dtype=CDTYPE)
    for k, block in sym.blocks.items():
        for j in range(n_in):
            i = j + k
            if 0 <= i < n_out:
                data[i, :, j, :] = block
    return OperatorMatrix(data.reshape(codomain.dim, domain.dim), domain, codomain)


def apply_symbol(sym, f, codomain=None):
    """:math:`T_\\Phi f` as a :class:`CoeffFn`; padded by the symbol's largest
    index when ``codomain`` is None."""
    if codomain is None:
        codomain = HardySpec(sym.m, f.spec.degree + max(sym.support[1], 0))
    op = toeplitz_matrix(sym, f.spec, codomain)
    out = op.mv(f)
    norm_sym = sum(torch.linalg.matrix_norm(b, ord=2).item() for b in sym.blocks.values())
    return CoeffFn(codomain, out.coeffs, norm_sym * f.tail_bound)


def riesz_projection(laurent, low):
    """
    Analytic part :math:`P_+` of a scalar Laurent series given by its
    coefficients from index ``low`` upwards.
    """
    laurent = torch.as_tensor(laurent).to(CDTYPE)
    start = max(0, -low)
    coeffs = laurent[start:]
    return CoeffFn(HardySpec(1, coeffs.size(0) - 1), coeffs)


def evaluate(f, z):
    """
    Horner evaluation of the truncated series at ``z`` with :math:`|z|<1`.

    :return: ``(value, error)`` where ``value`` is a tensor of shape ``(m,)``
        and ``error`` bounds the contribution of the discarded tail by
        ``tail_bound * |z|^(N+1) / (1-|z|)``
    """
    z = complex(z)
    if abs(z) >= 1:
        raise DomainError("evaluation point %s is not in the open unit disc" % z)
    value = horner(f.coeffs, torch.tensor([z], dtype=CDTYPE))[0]
    error = f.tail_bound * abs(z) ** (f.spec.degree + 1) / (1 - abs(z))
    return value, error


def evaluate_many(f, points):
    """Values at several points, shape ``(len(points), m)``; no domain check."""
    return horner(f.coeffs, points)


def pointwise_product(f, h, degree=None):
    """
    Product of a :math:`\\mathbb C^m` valued function with a scalar function,
    computed by Cauchy products component by component.

    The tail bound of the result covers the coefficients cut off above
    ``degree`` and the tails :math:`t_f, t_h` of the operands:
    :math:`\\|f\\|_1t_h+\\|h\\|_1t_f+t_ft_h`, where :math:`\\|\\cdot\\|_1`
    sums the norms of the stored coefficients. The last term counts the
    product of the two tails at the product of their norms.
    """
    if h.spec.m != 1:
        raise ShapeError("the multiplier must be scalar valued")
    full = f.spec.degree + h.spec.degree
    if degree is None:
        degree = full
    n_out = max(degree, full) + 1
    out = torch.zeros(n_out, f.spec.m, dtype=CDTYPE)
    hc = h.coeffs[:, 0]
    for i in range(hc.size(0)):
        out[i : i + f.spec.degree + 1] += hc[i] * f.coeffs
    dropped = torch.linalg.vector_norm(out[degree + 1 :]).item()
    l1_f = torch.linalg.vector_norm(f.coeffs, dim=1).sum().item()
    l1_h = hc.abs().sum().item()
    tail = dropped + l1_f * h.tail_bound + l1_h * f.tail_bound + f.tail_bound * h.tail_bound
    return CoeffFn(HardySpec(f.spec.m, degree), out[: degree + 1], tail)
