import logging
import math
from typing import List, NamedTuple

import torch

from .errors import BudgetError, DomainError, InvalidInput, NumericalFailure, ShapeError
from .hardy import LaurentSymbol, toeplitz_matrix
from .maths import CDTYPE, convolve, geometric
from .numerics import fix_phases, pinv_apply
from .object.operator import OperatorMatrix
from .object.vector import CoeffFn, HardySpec

logger = logging.getLogger(__name__)

EPS = 1e-16


class BlaschkeProduct:
    """
    Finite Blaschke product
    :math:`B(z)=e^{i\\theta}\\prod_k\\frac{z-z_k}{1-\\bar z_k z}`.

    :param zeros: zeros :math:`z_k` in the open unit disc, repeated according
        to multiplicity
    :param phase: unimodular constant :math:`e^{i\\theta}`
    """

    def __init__(self, zeros, phase=1.0):
        zeros = tuple(complex(z) for z in zeros)
        if len(zeros) == 0:
            raise InvalidInput("a Blaschke product needs at least one zero")
        for z in zeros:
            if abs(z) >= 1:
                raise DomainError("zero %s is not in the open unit disc" % z)
        phase = complex(phase)
        if abs(abs(phase) - 1) > 1e-14:
            raise InvalidInput("phase %s is not unimodular" % phase)
        self.zeros = zeros
        self.phase = phase

    @property
    def degree(self):
        return len(self.zeros)

    @property
    def rho(self):
        """Largest modulus of a zero."""
        return max(abs(z) for z in self.zeros)

    def is_monomial(self):
        return all(z == 0 for z in self.zeros)

    def __call__(self, z):
        return evaluate(self, z)

    def __eq__(self, other):
        return (
            isinstance(other, BlaschkeProduct)
            and self.zeros == other.zeros
            and self.phase == other.phase
        )

    def __repr__(self):
        return "BlaschkeProduct(zeros=%s, phase=%s)" % (list(self.zeros), self.phase)


class ModelSpaceBasis(NamedTuple):
    blaschke: BlaschkeProduct
    functions: List[CoeffFn]
    construction: str

    def matrix(self):
        """Basis functions as the columns of a ``(N+1) x degree`` tensor."""
        return torch.stack([f.coeffs[:, 0] for f in self.functions], dim=1)


class WoldCoefficients(NamedTuple):
    layers: List[CoeffFn]
    residual: float
    remainder: float


class SupNorm(NamedTuple):
    value: float
    delta: float
    grid: int


def evaluate(B, z):
    """
    Value of ``B`` at ``z`` from the product formula; ``z`` may be a scalar
    or a tensor of points.
    """
    scalar = not torch.is_tensor(z)
    z = torch.as_tensor(z).to(CDTYPE)
    value = torch.full_like(z, B.phase)
    for zk in B.zeros:
        value = value * (z - zk) / (1 - zk.conjugate() * z)
    if scalar:
        return complex(value.item())
    return value


def _tail_estimate(rho, d, n):
    """
    Upper bound on the norm of the Taylor coefficients of degree above ``n``
    of a product of ``d`` Blaschke factors with zeros of modulus at most
    ``rho``.
    """
    if rho == 0:
        return 0.0 if n >= d else 1.0
    if n < d:
        return 1.0
    return math.comb(n + d, d - 1) * rho ** (n + 1 - d) / (1 - rho) ** d


def taylor_budget(B, eps=EPS):
    """
    Smallest degree :math:`N\\ge\\deg B` after which the Taylor tail of ``B``
    is certified below ``eps``.
    """
    n = B.degree
    while _tail_estimate(B.rho, B.degree, n) > eps:
        n += 1
    return n


def _factor_coeffs(zk, n_out):
    # (z - zk)/(1 - conj(zk) z) = -zk + sum_{n>=1} conj(zk)^(n-1) (1 - |zk|^2) z^n
    c = torch.zeros(n_out, dtype=CDTYPE)
    c[0] = -zk
    if n_out > 1:
        c[1:] = (1 - abs(zk) ** 2) * geometric(zk.conjugate(), n_out - 1)
    return c


def _kernel_coeffs(zk, n_out):
    # 1/(1 - conj(zk) z)
    return geometric(zk.conjugate(), n_out)


def taylor(B, N):
    """
    Taylor coefficients of ``B`` through degree ``N``, obtained by multiplying
    the geometric series of the factors.
    """
    if N < B.degree:
        raise BudgetError("budget %d below the degree %d of B" % (N, B.degree))
    coeffs = torch.zeros(N + 1, dtype=CDTYPE)
    coeffs[0] = B.phase
    for zk in B.zeros:
        coeffs = convolve(coeffs, _factor_coeffs(zk, N + 1), N + 1)
    return CoeffFn(HardySpec(1, N), coeffs, _tail_estimate(B.rho, B.degree, N))


def mult_operator(B, domain, taylor_degree=None):
    """
    Matrix of :math:`f\\mapsto Bf` from ``domain`` into
    ``domain.padded(taylor_degree)``. The default Taylor length makes the
    matrix exact up to :data:`EPS`.
    """
    if taylor_degree is None:
        taylor_degree = taylor_budget(B)
    t = taylor(B, taylor_degree)
    eye = torch.eye(domain.m, dtype=CDTYPE)
    sym = LaurentSymbol({k: t.coeffs[k, 0] * eye for k in range(taylor_degree + 1)})
    op = toeplitz_matrix(sym, domain, domain.padded(taylor_degree))
    logger.debug("mult_operator: degree %d B, taylor length %d", B.degree, taylor_degree)
    return op


def _takenaka_malmquist(B, N):
    functions = []
    partial = torch.zeros(N + 1, dtype=CDTYPE)
    partial[0] = 1.0
    for zk in B.zeros:
        v = math.sqrt(1 - abs(zk) ** 2) * convolve(partial, _kernel_coeffs(zk, N + 1), N + 1)
        functions.append(v)
        partial = convolve(partial, _factor_coeffs(zk, N + 1), N + 1)
    return functions


def _complement_basis(B, N):
    # K_B is the part of H^2 orthogonal to B H^2 that lives in low degrees:
    # keep the degree(B) directions of the complement with most mass in H_N
    op = mult_operator(B, HardySpec(1, N))
    U, S, _ = torch.linalg.svd(op.data, full_matrices=True)
    rank = int((S > 0.5).sum().item())
    C = U[:, rank:]
    _, sw, Vh = torch.linalg.svd(C[: N + 1], full_matrices=False)
    logger.debug(
        "model space complement: window masses %s", sw[: B.degree + 1].tolist()
    )
    V = C @ Vh.conj().transpose(0, 1)[:, : B.degree]
    V = fix_phases(V[: N + 1])
    return [V[:, i] for i in range(B.degree)]


def model_space(B, spec, construction="takenaka"):
    """
    Orthonormal basis of the model space :math:`K_B=H^2\\ominus BH^2`.

    :param construction: ``"takenaka"`` for the closed form
        Takenaka-Malmquist functions
        :math:`\\frac{\\sqrt{1-|z_k|^2}}{1-\\bar z_k z}\\prod_{i<k}
        \\frac{z-z_i}{1-\\bar z_i z}`, or ``"complement"`` for the numerical
        orthogonal complement of :math:`B\\,H^2` (a cross-check)
    :raises BudgetError: when the budget is below ``4 * degree(B)`` or too
        small for the basis to be orthonormal within 1e-10
    """
    if spec.m != 1:
        raise ShapeError("model spaces are built in the scalar Hardy space")
    if spec.degree < 4 * B.degree:
        raise BudgetError(
            "budget %d below the accuracy floor 4*deg(B)=%d" % (spec.degree, 4 * B.degree)
        )
    N = spec.degree
    if construction == "takenaka":
        vectors = _takenaka_malmquist(B, N)
    elif construction == "complement":
        vectors = _complement_basis(B, N)
    else:
        raise InvalidInput("unknown model space construction %r" % (construction,))
    V = torch.stack(vectors, dim=1)
    gram_error = torch.linalg.matrix_norm(
        V.conj().transpose(0, 1) @ V - torch.eye(B.degree, dtype=CDTYPE)
    ).item()
    if gram_error > 1e-10:
        raise BudgetError(
            "model space basis not orthonormal at budget %d (Gram error %.2e)"
            % (N, gram_error)
        )
    tail = _tail_estimate(B.rho, B.degree, N)
    functions = [CoeffFn(spec, v, tail) for v in vectors]
    return ModelSpaceBasis(B, functions, construction)


def wold_analysis(B, budget, layers=None, eps=1e-15):
    """
    Matrix of inner products with the orthonormal system :math:`B^n v_j`,
    :math:`v_j` the Takenaka-Malmquist basis of :math:`K_B`. It maps the
    Taylor coefficients (through ``budget``) of a function to its Wold layer
    coordinates, stored as a :math:`\\mathbb C^{\\deg B}` valued function
    whose degree is the layer index.

    :param layers: index of the last layer; when None, layers are added until
        every :math:`B^n v_j` has less than ``eps`` mass below ``budget``
    """
    if layers is not None and layers < 1:
        raise InvalidInput("the last layer index must be at least 1, got %d" % layers)
    spec = HardySpec(1, budget)
    t = taylor(B, budget)
    mult = toeplitz_matrix(LaurentSymbol.from_coeffs(t.coeffs[:, 0]), spec, spec).data
    cap = layers if layers is not None else 64 * (budget + 1)
    current = torch.stack(_takenaka_malmquist(B, budget), dim=1)
    cols = [current]
    while len(cols) <= cap:
        current = mult @ current
        if layers is None and torch.linalg.vector_norm(current, dim=0).max() < eps:
            break
        cols.append(current)
    synthesis = torch.cat(cols, dim=1)
    logger.debug("wold_analysis: %d layers at budget %d", len(cols), budget)
    return OperatorMatrix(
        synthesis.conj().transpose(0, 1),
        spec,
        HardySpec(B.degree, len(cols) - 1),
    )


def wold_decompose(f, B, depth=None, tol=1e-12, max_depth=None):
    """
    Wold-type decomposition :math:`f=\\sum_n B^n h_n` with layers
    :math:`h_n\\in K_B`.

    The layers are peeled off one at a time: :math:`h_n=P_{K_B}f_n` and
    :math:`f_{n+1}=(f_n-h_n)/B`, the division being a least squares solve
    against the multiplication matrix of ``B``.

    :param depth: index of the last layer; when None, layers are taken until
        the remainder :math:`\\|f_{n+1}\\|` drops below ``tol * ||f||``
    :param max_depth: cap used when ``depth`` is None
    :return: :class:`WoldCoefficients` with the layers stored at a padded
        budget, the reconstruction residual
        :math:`\\|f-\\sum_{n\\le depth}B^nh_n\\|` and the remainder norm
    :raises NumericalFailure: when the remainder grows, or when no depth below
        the cap reaches ``tol``
    """
    if f.spec.m != 1:
        raise ShapeError("wold_decompose works on scalar functions")
    pad = taylor_budget(B)
    L = f.spec.degree + 2 * pad
    L = max(L, 4 * B.degree)
    spec = HardySpec(1, L)
    V = model_space(B, spec).matrix()
    mop = mult_operator(B, spec, pad)
    f0 = f.resize(L).coeffs[:, 0]
    f_norm = max(torch.linalg.vector_norm(f0).item(), 1e-300)
    if depth is None:
        cap = max_depth if max_depth is not None else 64 * (f.spec.degree + 1) + 64
    else:
        cap = depth

    layers = []
    fn = f0
    remainder = 0.0
    converged = False
    for n in range(cap + 1):
        h = V @ (V.conj().transpose(0, 1) @ fn)
        layers.append(h)
        y = torch.zeros(mop.codomain.dim, dtype=CDTYPE)
        y[: L + 1] = fn - h
        nxt = pinv_apply(mop, y)
        remainder = torch.linalg.vector_norm(nxt).item()
        if remainder > torch.linalg.vector_norm(fn).item() + 1e-8 * f_norm:
            raise NumericalFailure(
                "Wold remainder grew from %.3e to %.3e at layer %d"
                % (torch.linalg.vector_norm(fn).item(), remainder, n)
            )
        fn = nxt
        if depth is None and remainder <= tol * f_norm:
            converged = True
            break
    if depth is None and not converged:
        raise NumericalFailure(
            "Wold decomposition did not reach %.1e within %d layers (remainder %.3e)"
            % (tol, cap, remainder)
        )

    acc = layers[-1]
    for h in reversed(layers[:-1]):
        acc = h + (mop.data @ acc)[: L + 1]
    residual = torch.linalg.vector_norm(f0 - acc).item()
    logger.debug(
        "wold_decompose: %d layers, residual %.2e, remainder %.2e",
        len(layers),
        residual,
        remainder,
    )
    tail = _tail_estimate(B.rho, B.degree, L)
    return WoldCoefficients(
        [CoeffFn(spec, h, tail) for h in layers], residual, remainder
    )


def hinf_norm_on_disc(B, s, grid=4096, refine=True, delta_tol=1e-8, max_grid=2**20):
    """
    :math:`\\sup_{|z|\\le s}|B(z)|`, sampled on the circle :math:`|z|=s`
    (maximum modulus principle). With ``refine`` the grid is doubled until two
    successive values differ by less than ``delta_tol``.

    :return: :class:`SupNorm` ``(value, delta, grid)``
    """
    if not 0 < s < 1:
        raise DomainError("radius %s is not in (0, 1)" % s)
    if grid < 256:
        raise InvalidInput("grid must have at least 256 points")

    def sample(n):
        theta = torch.arange(n, dtype=torch.float64) * (2 * math.pi / n)
        z = s * torch.exp(1j * theta.to(CDTYPE))
        return evaluate(B, z).abs().max().item()

    value = sample(grid)
    delta = float("inf")
    while refine and grid < max_grid:
        finer = sample(2 * grid)
        delta = abs(finer - value)
        value, grid = finer, 2 * grid
        if delta < delta_tol:
            break
    if refine and delta >= delta_tol:
        logger.warning("hinf_norm_on_disc: grid cap reached with delta %.2e", delta)
    return SupNorm(value, delta, grid)


def enclosing_radius(B, margin=None):
    """
    Radius :math:`s=\\max_k|z_k|+\\text{margin}` of a disc containing all the
    zeros; the default margin is ``0.1 * (1 - max|z_k|)``.
    """
    rho = B.rho
    if margin is None:
        margin = 0.1 * (1 - rho)
    if not 0 < margin < 1 - rho:
        raise DomainError(
            "margin %s not in (0, %s) for zeros of modulus up to %s" % (margin, 1 - rho, rho)
        )
    return rho + margin


def multiply(B, f):
    """:math:`Bf` at the budget of ``f`` plus the Taylor length of ``B``."""
    return mult_operator(B, f.spec).mv(f)
