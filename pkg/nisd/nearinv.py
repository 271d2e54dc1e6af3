"""
Nearly :math:`T^{-1}` invariant subspaces of a shift operator :math:`T`.

Every computation happens in a truncated ambient space :math:`H_L` on which
:math:`T` is a padded matrix :math:`H_D\\to H_L`. When the ambient space
carries a weighted norm :math:`\\|x\\|^2=\\sum_n w_n\\|x_n\\|^2` all vectors are
kept in whitened coordinates :math:`W^{1/2}x`, so that the Euclidean inner
product of the coordinates is the inner product of the space. Subspaces are
:class:`nisd.object.operator.SubspaceBasis` objects in these coordinates.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, List, NamedTuple, Optional

import torch

from .blaschke import (
    BlaschkeProduct,
    enclosing_radius,
    evaluate as evaluate_blaschke,
    taylor,
    taylor_budget,
    wold_analysis,
)
from .dirichlet import choose_params, norm1_weights, norm2_weights
from .errors import (
    BudgetError,
    DomainError,
    InconclusiveAtBudget,
    InvalidInput,
    InvalidShift,
    NotBoundedBelow,
    NotModelSpace,
    NotSimilar,
    NumericalFailure,
    ShapeError,
)
from .hardy import LaurentSymbol, backward_shift_operator, pointwise_product, toeplitz_matrix
from .maths import CDTYPE, geometric, horner, kronecker, shift_matrix
from .numerics import (
    DEFAULT_TOL,
    RankTolerance,
    complement,
    eigenpairs,
    intersect,
    orthonormalize,
    pinv_apply,
)
from .object.operator import OperatorMatrix, SubspaceBasis
from .object.vector import CoeffFn, HardySpec

logger = logging.getLogger(__name__)

LEAK_TOL = 1e-8
CHECK_TOL = 1e-8
ISOMETRY_TOL = 1e-10


@dataclass
class ShiftModel:
    """
    A shift operator on a truncated ambient space.

    :param operator: the whitened matrix :math:`W_L^{1/2}TW_D^{-1/2}` from
        :math:`H_D` to :math:`H_L`
    :param kernel_basis: orthonormal basis :math:`e_1,\\ldots,e_m` of
        :math:`\\ker T^*`
    :param multiplicity: :math:`m=\\dim\\ker T^*`
    :param weight: per degree weights of the ambient norm, None for
        :math:`H^2`
    :param synthesis: matrix mapping (unwhitened) ambient coordinates to
        Taylor coefficients, None when the ambient coordinates already are
        Taylor coefficients
    """

    operator: OperatorMatrix
    kernel_basis: SubspaceBasis
    multiplicity: int
    weight: Optional[torch.Tensor]
    range_basis: SubspaceBasis
    isometry: bool
    lower_bound: float
    pure_residual: float
    synthesis: Optional[torch.Tensor] = None
    function_spec: Optional[HardySpec] = None

    @property
    def ambient(self):
        return self.operator.codomain

    @property
    def n_ambient(self):
        return self.operator.codomain.dim

    @property
    def n_domain(self):
        return self.operator.domain.dim

    @property
    def gap(self):
        return self.operator.codomain.degree - self.operator.domain.degree

    def _coordinate_weights(self):
        return self.weight.repeat_interleave(self.ambient.m).to(CDTYPE)

    def whiten(self, X):
        X = torch.as_tensor(X).to(CDTYPE)
        if self.weight is None:
            return X
        w = self._coordinate_weights().sqrt()
        return w.view(-1, *([1] * (X.dim() - 1))) * X

    def unwhiten(self, X):
        X = torch.as_tensor(X).to(CDTYPE)
        if self.weight is None:
            return X
        w = self._coordinate_weights().sqrt()
        return X / w.view(-1, *([1] * (X.dim() - 1)))

    def apply(self, X):
        """:math:`T` on whitened ambient vectors; coordinates above the
        domain are dropped."""
        return self.operator.data @ X[: self.n_domain]

    def to_taylor(self, X):
        """Taylor coefficients (flattened, interleaved by degree) of whitened
        ambient vectors."""
        X = self.unwhiten(X)
        if self.synthesis is None:
            return X
        return self.synthesis @ X

    def taylor_spec(self):
        return self.function_spec if self.function_spec is not None else self.ambient


@dataclass
class NearInvReport:
    r: int
    p: int
    G0: SubspaceBasis
    F1: SubspaceBasis
    contained_in_TH: bool
    residuals: dict
    norm_slack: float
    minimality: List[float] = field(default_factory=list)


class ExpansionOperators(NamedTuple):
    R: OperatorMatrix
    Q: OperatorMatrix
    S: OperatorMatrix


@dataclass
class ExpansionRecord:
    q_terms: torch.Tensor
    s_terms: torch.Tensor
    residual_norm: float
    bessel_sum: float
    identity_residuals: List[float]
    remainder: torch.Tensor = None


@dataclass
class FactorizationRecord:
    c: torch.Tensor
    b: torch.Tensor
    gamma: float
    series_budget: int
    bessel_sum: float
    h_norm: float
    pointwise: List[tuple] = field(default_factory=list)


@dataclass
class TransferPair:
    U: Optional[OperatorMatrix]
    K0: Optional[CoeffFn]
    K1: Optional[CoeffFn]
    c: torch.Tensor
    b: torch.Tensor
    isometry_defect: float


@dataclass
class TransferResult:
    pairs: List[TransferPair]
    K: SubspaceBasis
    case: str
    invariance_residual: float
    G0: SubspaceBasis
    F1: SubspaceBasis
    U: Optional[OperatorMatrix]
    steps: int = 0
    remainder: float = 0.0


@dataclass
class DAlphaTerm:
    q: Optional[CoeffFn]
    h: Optional[CoeffFn]
    c: torch.Tensor
    b: torch.Tensor
    norm_f: float
    norm_q: float
    norm_h: float
    bound_check: dict
    factorization: FactorizationRecord


@dataclass
class DAlphaResult:
    terms: List[DAlphaTerm]
    report: NearInvReport
    shift: ShiftModel
    gamma: float
    s: float
    certificate: Any = None
    ts_invariance: Optional[dict] = None
    layers: int = 0


def _matrix_norm(A):
    if A.numel() == 0:
        return 0.0
    return torch.linalg.matrix_norm(A, ord=2).item()


def _embed(X, n):
    out = torch.zeros((n,) + tuple(X.shape[1:]), dtype=CDTYPE)
    out[: X.size(0)] = X
    return out


def _canonical(space, seeds, tol):
    """
    Re-expresses a basis of ``space`` by Gram-Schmidt on the projections of
    ``seeds`` (in order). Falls back to the given basis when the seeds do not
    span the space.
    """
    if space.dim == 0:
        return space
    proj = space.project(seeds)
    keep = torch.linalg.vector_norm(proj, dim=0) > tol.sine_threshold()
    if int(keep.sum().item()) < space.dim:
        return space
    basis, rank = orthonormalize(proj[:, keep], tol, space.spec)
    if rank != space.dim:
        return space
    return basis


def _check_subspace(M, shift, allow_empty=True):
    if M.ambient_dim != shift.n_ambient:
        raise ShapeError(
            "subspace lives in dimension %d, the ambient space has %d"
            % (M.ambient_dim, shift.n_ambient)
        )
    if not allow_empty and M.dim == 0:
        raise InvalidInput("the subspace must be nonzero")


def build_shift(T, weight=None, tol=DEFAULT_TOL, synthesis=None, function_spec=None):
    """
    Validates a shift operator and computes its wandering subspace.

    :param T: :class:`OperatorMatrix` from :math:`H_D` to :math:`H_L`,
        :math:`L\\ge D`
    :param weight: per degree weights (length at least :math:`L+1`) of the
        ambient norm, None for :math:`H^2`
    :return: :class:`ShiftModel`
    :raises InvalidShift: when :math:`T` is not injective or has a trivial
        wandering subspace
    """
    domain, codomain = T.domain, T.codomain
    if domain.m != codomain.m or domain.degree > codomain.degree:
        raise ShapeError("a shift maps %s into a padded copy, got %s" % (domain, codomain))
    n_D, n_L = domain.dim, codomain.dim
    data = T.data
    w = None
    if weight is not None:
        w = torch.as_tensor(weight, dtype=torch.float64)
        if w.numel() < codomain.degree + 1:
            raise ShapeError("%d weights for %s" % (w.numel(), codomain))
        w = w[: codomain.degree + 1]
        if (w <= 0).any():
            raise InvalidInput("weights must be positive")
        wc = w.repeat_interleave(codomain.m).to(CDTYPE).sqrt()
        data = wc[:, None] * data / wc[:n_D][None, :]
    op = OperatorMatrix(
        data, domain, codomain, None if w is None else w[: domain.degree + 1], w
    )
    svals = op.singular_values()
    if svals.numel() == 0 or svals[-1].item() <= tol.threshold(svals[0].item()):
        raise InvalidShift(
            "operator is not injective (smallest singular value %.3e)"
            % (svals[-1].item() if svals.numel() else 0.0)
        )
    lower = svals[-1].item()
    gram_error = _matrix_norm(data.conj().transpose(0, 1) @ data - torch.eye(n_D, dtype=CDTYPE))
    isometry = gram_error <= ISOMETRY_TOL

    rng, _ = orthonormalize(data, tol)
    ambient = SubspaceBasis(torch.eye(n_L, dtype=CDTYPE), tol)
    coker = complement(ambient, rng, tol)
    window = SubspaceBasis.coordinates(n_L, range(n_D), tol)
    kernel = intersect(coker, window, tol)
    kernel = _canonical(kernel, torch.eye(n_L, dtype=CDTYPE)[:, :n_D], tol)
    if kernel.dim == 0:
        raise InvalidShift("ker T* meets the window trivially: no wandering subspace")

    # pureness surrogate: T*^n on the window, n the ambient budget
    adj = data.conj().transpose(0, 1)[:, :n_D]
    pure = _matrix_norm(torch.linalg.matrix_power(adj, codomain.degree + 1))
    if pure > 1e-6:
        logger.warning("build_shift: ||T*^n|| = %.2e at n = %d", pure, codomain.degree + 1)
    logger.debug(
        "build_shift: %s -> %s, multiplicity %d, isometry error %.2e, lower bound %.6f",
        domain,
        codomain,
        kernel.dim,
        gram_error,
        lower,
    )
    return ShiftModel(
        operator=op,
        kernel_basis=kernel,
        multiplicity=kernel.dim,
        weight=w,
        range_basis=rng,
        isometry=isometry,
        lower_bound=lower,
        pure_residual=pure,
        synthesis=None if synthesis is None else torch.as_tensor(synthesis).to(CDTYPE),
        function_spec=function_spec,
    )


def wandering(M, shift, tol=DEFAULT_TOL):
    """
    The wandering part :math:`G_0=M\\ominus(M\\cap TH)`.

    :return: ``(G0, r)``; ``r = 0`` with an empty basis when :math:`M\\subset
        TH`
    """
    _check_subspace(M, shift, allow_empty=False)
    MTH = intersect(M, shift.range_basis, tol)
    G0 = complement(M, MTH, tol)
    G0 = _canonical(G0, M.data, tol)
    if G0.dim > shift.multiplicity:
        logger.warning(
            "wandering: r = %d exceeds the multiplicity %d, mass reaches the "
            "top of the ambient space",
            G0.dim,
            shift.multiplicity,
        )
    logger.debug("wandering: dim M %d, dim M cap TH %d, r %d", M.dim, MTH.dim, G0.dim)
    return G0, G0.dim


def _preimage(M, shift, tol):
    """
    Orthonormal basis (in domain coordinates) of :math:`\\{g: Tg\\in M\\}`
    and the mass of that basis in the top ``gap`` degrees of the domain.
    """
    T = shift.operator.data
    A = T - M.project(T) if M.dim > 0 else T
    _, sv, Vh = torch.linalg.svd(A, full_matrices=True)
    n_D = shift.n_domain
    all_sv = torch.zeros(n_D, dtype=torch.float64)
    all_sv[: sv.numel()] = sv
    keep = all_sv <= tol.sine_threshold() * shift.operator.norm()
    P = Vh.conj().transpose(0, 1)[:, keep]
    leak = _matrix_norm(P[_band_start(shift) :]) if P.size(1) > 0 else 0.0
    logger.debug("preimage: dim %d, leakage %.2e", P.size(1), leak)
    return P, leak


def _band_start(shift):
    """First coordinate of the top ``gap`` degrees of the domain."""
    return shift.n_domain - shift.gap * shift.ambient.m


def _budget_margins(M, shift):
    """
    Mass of ``M`` above the domain, and the mass a true preimage may carry
    in the top band of the domain. The latter holds exactly for isometric
    shifts that do not lower degrees, since then :math:`g=T^*Tg` and
    :math:`T^*` does not raise them.
    """
    if M.dim == 0:
        return 0.0, 0.0
    beyond = _matrix_norm(M.data[shift.n_domain :])
    band = _matrix_norm(M.data[_band_start(shift) :])
    return beyond, band * shift.operator.norm() / shift.lower_bound


def _defect_tol(tol):
    return RankTolerance(absolute=tol.sine_threshold(), relative=tol.relative)


def minimal_defect(M, shift, tol=DEFAULT_TOL, leak_tol=LEAK_TOL):
    """
    Smallest defect space :math:`F\\perp M` with :math:`T^{-1}M\\subset
    M\\oplus F`: the part of the preimage :math:`\\{g:Tg\\in M\\}` orthogonal
    to :math:`M`.

    :return: ``(F, p)``
    :raises InconclusiveAtBudget: when :math:`M` reaches above the domain, or the
        preimage carries more mass in the top degrees of the domain than
        :math:`M` accounts for
    """
    _check_subspace(M, shift)
    beyond, allowed = _budget_margins(M, shift)
    if beyond > leak_tol:
        raise InconclusiveAtBudget(
            "M carries mass %.3e above the domain of T (tolerance %.1e)" % (beyond, leak_tol)
        )
    P, leak = _preimage(M, shift, tol)
    if leak > leak_tol + allowed:
        raise InconclusiveAtBudget(
            "preimage carries mass %.3e in the top %d degrees, M only accounts for %.3e "
            "(tolerance %.1e)" % (leak, shift.gap, allowed, leak_tol)
        )
    if P.size(1) == 0:
        return SubspaceBasis.empty(shift.n_ambient, tol), 0
    X = _embed(P, shift.n_ambient)
    Y = X - M.project(X) if M.dim > 0 else X
    F, p = orthonormalize(Y, _defect_tol(tol))
    logger.debug("minimal_defect: preimage dim %d, p %d", P.size(1), p)
    return F, p


def _join(M, F):
    if F.dim == 0:
        return M.data
    return torch.cat([M.data, F.data], dim=1)


def check_nearly_invariant(M, F, shift, tol=DEFAULT_TOL, check_tol=CHECK_TOL):
    """
    Whether every :math:`g` with :math:`Tg\\in M` lies in :math:`M\\oplus F`.

    :return: ``(flag, residual)`` where the residual is the largest relative
        distance :math:`\\|g-P_{M\\oplus F}g\\|/\\|g\\|` over the preimage
    """
    _check_subspace(M, shift)
    _check_subspace(F, shift)
    if F.dim > 0 and M.dim > 0:
        overlap = _matrix_norm(M.data.conj().transpose(0, 1) @ F.data)
        if overlap > check_tol:
            logger.warning("check_nearly_invariant: F is not orthogonal to M (%.2e)", overlap)
            F, _ = orthonormalize(F.data - M.project(F.data), _defect_tol(tol))
    P, _ = _preimage(M, shift, tol)
    if P.size(1) == 0:
        return True, 0.0
    X = _embed(P, shift.n_ambient)
    J = _join(M, F)
    residual = _matrix_norm(X - J @ (J.conj().transpose(0, 1) @ X))
    return residual <= check_tol, residual


def detect(M, shift, tol=DEFAULT_TOL, leak_tol=LEAK_TOL, check_tol=CHECK_TOL):
    """
    Runs :func:`wandering`, :func:`minimal_defect` and
    :func:`check_nearly_invariant` and collects a :class:`NearInvReport`.
    The report also records, for each defect direction, the residual left
    when that direction is dropped.
    """
    G0, r = wandering(M, shift, tol)
    F, p = minimal_defect(M, shift, tol, leak_tol)
    ok, residual = check_nearly_invariant(M, F, shift, tol, check_tol)
    if not ok:
        raise NumericalFailure(
            "minimal defect does not pass the near invariance check (%.3e)" % residual
        )
    _, leak = _preimage(M, shift, tol)
    _, allowed = _budget_margins(M, shift)
    minimality = []
    for j in range(p):
        others = SubspaceBasis(
            torch.cat([F.data[:, :j], F.data[:, j + 1 :]], dim=1), tol
        )
        minimality.append(check_nearly_invariant(M, others, shift, tol, check_tol)[1])
    orth = _matrix_norm(G0.data.conj().transpose(0, 1) @ F.data) if r and p else 0.0
    return NearInvReport(
        r=r,
        p=p,
        G0=G0,
        F1=F,
        contained_in_TH=(r == 0),
        residuals={
            "near_invariance": residual,
            "leakage": leak,
            "leakage_allowed": allowed,
            "g0_f_overlap": orth,
        },
        norm_slack=shift.lower_bound - 1.0,
        minimality=minimality,
    )


def similarity_transport(
    M, F, V, T1, T2, tol=DEFAULT_TOL, check_tol=CHECK_TOL, sim_tol=1e-10
):
    """
    Moves a nearly :math:`T_1^{-1}` invariant pair :math:`(M, F)` to
    :math:`(VM, F')` for :math:`T_2=VT_1V^{-1}`, :math:`F'` being the part
    of :math:`VF` orthogonal to :math:`VM`.

    :param V: :class:`OperatorMatrix` on the ambient space of ``T1`` mapping
        the domain window into itself
    :return: ``(VM, F', report)``
    :raises NotSimilar: when :math:`V` is singular, does not preserve the
        window, or :math:`T_2V\\ne VT_1`
    """
    n_L, n_D = T1.n_ambient, T1.n_domain
    Vd = V.data
    if tuple(Vd.shape) != (n_L, n_L) or T2.n_ambient != n_L or T2.n_domain != n_D:
        raise ShapeError("V and the two shifts must share the ambient space")
    sv = torch.linalg.svdvals(Vd)
    if sv[-1].item() <= tol.threshold(sv[0].item()):
        raise NotSimilar("V is singular (smallest singular value %.3e)" % sv[-1].item())
    scale = sv[0].item()
    spill = _matrix_norm(Vd[n_D:, :n_D])
    if spill > sim_tol * scale:
        raise NotSimilar("V moves the window out of the domain (%.3e)" % spill)
    sim = _matrix_norm(T2.operator.data @ Vd[:n_D, :n_D] - Vd @ T1.operator.data)
    if sim > sim_tol * scale * max(T1.operator.norm(), 1.0):
        raise NotSimilar("||T2 V - V T1|| = %.3e" % sim)

    VM, _ = orthonormalize(Vd @ M.data, tol)
    VF = Vd @ F.data
    if F.dim > 0:
        Fp, _ = orthonormalize(VF - VM.project(VF), _defect_tol(tol))
    else:
        Fp = SubspaceBasis.empty(n_L, tol)
    ok, residual = check_nearly_invariant(VM, Fp, T2, tol, check_tol)
    _, p_new = minimal_defect(VM, T2, tol)
    report = {
        "p": F.dim,
        "p_transported": Fp.dim,
        "p_rederived": p_new,
        "near_invariance": residual,
        "similarity_residual": sim,
    }
    if not ok or p_new != F.dim or Fp.dim != F.dim:
        raise NumericalFailure("similarity transport changed the defect: %s" % report)
    return VM, Fp, report


def rqs_operators(M, F, shift, tol=DEFAULT_TOL, bound_tol=1e-10):
    """
    The operators :math:`R=(T^*T)^{-1}T^*P_{M\\cap TH}`,
    :math:`Q=P_{M\\ominus(M\\cap TH)}` and :math:`S=P_F`, as square matrices
    on the ambient space.

    :raises NotBoundedBelow: when :math:`\\|Th\\|\\ge\\|h\\|` fails
    """
    if shift.lower_bound < 1 - bound_tol:
        raise NotBoundedBelow(
            "smallest singular value of T is %.12f < 1" % shift.lower_bound
        )
    G0, _ = wandering(M, shift, tol)
    MTH = intersect(M, shift.range_basis, tol)
    spec = shift.ambient
    n_L, n_D = shift.n_ambient, shift.n_domain
    R = torch.zeros(n_L, n_L, dtype=CDTYPE)
    if MTH.dim > 0:
        R[:n_D] = pinv_apply(shift.operator, MTH.projector(), tol)
    S = F.projector() if F.dim > 0 else torch.zeros(n_L, n_L, dtype=CDTYPE)
    ops = ExpansionOperators(
        OperatorMatrix(R, spec, spec),
        OperatorMatrix(G0.projector(), spec, spec),
        OperatorMatrix(S, spec, spec),
    )
    if ops.R.norm() > 1 + 1e-12:
        raise NumericalFailure("||R|| = %.15f exceeds 1" % ops.R.norm())
    logger.debug("rqs_operators: ||R|| = %.6f, rank Q %d, rank S %d", ops.R.norm(), G0.dim, F.dim)
    return ops


def _as_vector(h, shift):
    if isinstance(h, CoeffFn):
        h = h.get_flat_representation()
    h = torch.as_tensor(h).to(CDTYPE).reshape(-1)
    if h.numel() != shift.n_ambient:
        raise ShapeError("vector of length %d, ambient dimension %d" % (h.numel(), shift.n_ambient))
    return h


def approx_expand(h, ops, shift, steps, tol=1e-10, all_steps=True):
    """
    The expansion
    :math:`h=\\sum_{k\\le m}T^kQR^kh+\\sum_{1\\le k\\le m}T^kSR^kh+T^{m+1}R^{m+1}h`.

    The right hand side is rebuilt by a Horner recursion and compared with
    ``h`` for every :math:`m\\le` ``steps`` (only ``steps`` itself when
    ``all_steps`` is False).

    :return: :class:`ExpansionRecord`
    :raises NumericalFailure: when an identity residual exceeds
        ``tol * ||h||`` or Bessel's inequality fails
    """
    x = _as_vector(h, shift)
    nh = torch.linalg.vector_norm(x).item()
    scale = max(nh, 1e-300)
    in_M = ops.Q.data @ x + shift.apply(ops.R.data @ x)
    if torch.linalg.vector_norm(x - in_M).item() > 1e-8 * scale:
        raise InvalidInput("h does not lie in M")

    ys = [x]
    for _ in range(steps + 1):
        ys.append(ops.R.data @ ys[-1])
    q_terms = torch.stack([ops.Q.data @ ys[k] for k in range(steps + 1)])
    if steps > 0:
        s_terms = torch.stack([ops.S.data @ ys[k] for k in range(1, steps + 1)])
    else:
        s_terms = torch.zeros(0, shift.n_ambient, dtype=CDTYPE)

    residuals = []
    for m in range(steps + 1) if all_steps else [steps]:
        z = ys[m + 1]
        for k in range(m, -1, -1):
            z = q_terms[k] + shift.apply(z)
            if k >= 1:
                z = z + s_terms[k - 1]
        residuals.append(torch.linalg.vector_norm(x - z).item())

    tail = ys[steps + 1]
    for _ in range(steps + 1):
        tail = shift.apply(tail)
    bessel = (q_terms.abs() ** 2).sum().item() + (s_terms.abs() ** 2).sum().item()

    worst = max(residuals)
    if worst > tol * scale:
        raise NumericalFailure(
            "expansion identity residual %.3e exceeds %.1e * ||h||" % (worst, tol)
        )
    if bessel > nh**2 + tol * max(nh**2, 1.0):
        raise NumericalFailure("Bessel sum %.15f exceeds ||h||^2 = %.15f" % (bessel, nh**2))
    logger.debug(
        "approx_expand: %d steps, worst residual %.2e, bessel %.6f of %.6f",
        steps,
        worst,
        bessel,
        nh**2,
    )
    return ExpansionRecord(
        q_terms=q_terms,
        s_terms=s_terms,
        residual_norm=torch.linalg.vector_norm(tail).item(),
        bessel_sum=bessel,
        identity_residuals=residuals,
        remainder=ys[steps + 1],
    )


def series_depth(beta, tol=1e-12, cap=500):
    """Number of terms after which a geometric series of ratio ``beta`` is
    below ``tol``."""
    if beta <= 0:
        return 1
    return int(min(cap, max(1, math.ceil(math.log(tol) / math.log(beta)))))


def _evaluate_functions(shift, X, points):
    """Values at ``points`` of the functions whose whitened ambient
    coordinates are the columns of ``X``; shape ``(points, columns, m)``."""
    spec = shift.taylor_spec()
    coeffs = shift.to_taylor(X)
    coeffs = coeffs.reshape(spec.degree + 1, spec.m, X.size(1))
    return horner(coeffs.permute(0, 2, 1), points)


def factorization(
    h,
    ops,
    shift,
    G0,
    F1,
    gamma=1.0,
    depth=None,
    u=None,
    points=None,
    tol=1e-10,
):
    """
    Coefficients :math:`c_{ki}=\\langle QR^kh,g_i\\rangle` and
    :math:`b_{kj}=\\langle SR^kh,e_j\\rangle` of the factorization
    :math:`h=\\sum_ig_iq_i+\\gamma^{-1}u\\sum_je_jh_j` with
    :math:`q_i=\\sum_kc_{ki}(u/\\gamma)^k` and
    :math:`h_j=\\sum_{k\\ge1}b_{kj}(u/\\gamma)^{k-1}`, where the shift is
    :math:`T=\\gamma^{-1}M_u`.

    :param u: callable giving :math:`u(w)`, needed with ``points``
    :param points: sample points where both sides are compared against the
        geometric tail bound
    :return: :class:`FactorizationRecord` (``b`` row ``k-1`` holds
        :math:`b_k`)
    :raises DomainError: at a sample point with :math:`|u(w)|\\ge\\gamma`
    """
    x = _as_vector(h, shift)
    pts = None
    betas = []
    if points is not None:
        if u is None:
            raise InvalidInput("pointwise checks need the multiplier u")
        pts = torch.as_tensor(points).to(CDTYPE).reshape(-1)
        for w in pts.tolist():
            beta = abs(complex(u(w))) / gamma
            if beta >= 1:
                raise DomainError("|u(%s)|/gamma = %.6f is not below 1" % (w, beta))
            betas.append(beta)
    if depth is None:
        depth = series_depth(max(betas)) if betas else 50
    rec = approx_expand(x, ops, shift, depth, tol, all_steps=False)
    c = rec.q_terms @ G0.data.conj()
    b = rec.s_terms @ F1.data.conj()
    nh = torch.linalg.vector_norm(x).item()
    coeff_sum = (c.abs() ** 2).sum().item() + (b.abs() ** 2).sum().item()
    if coeff_sum > nh**2 + tol * max(nh**2, 1.0):
        raise NumericalFailure(
            "sum of squared coefficients %.15f exceeds ||h||^2 = %.15f" % (coeff_sum, nh**2)
        )

    pointwise = []
    if pts is not None:
        X = torch.cat([x.view(-1, 1), G0.data, F1.data, rec.remainder.view(-1, 1)], dim=1)
        values = _evaluate_functions(shift, X, pts)
        r, p = G0.dim, F1.dim
        for idx, w in enumerate(pts.tolist()):
            ratio = complex(u(w)) / gamma
            beta = betas[idx]
            vals = values[idx]
            powers = geometric(ratio, depth + 1)
            qv = powers @ c
            hv = powers[:depth] @ b
            approx = vals[1 : 1 + r].transpose(0, 1) @ qv
            approx = approx + ratio * (vals[1 + r : 1 + r + p].transpose(0, 1) @ hv)
            err = torch.linalg.vector_norm(vals[0] - approx).item()
            C = nh * (
                torch.linalg.vector_norm(vals[1 : 1 + r + p], dim=1).sum().item()
            )
            remainder = abs(ratio) ** (depth + 1) * torch.linalg.vector_norm(vals[-1]).item()
            bound = C * beta ** (depth + 1) / (1 - beta) + remainder + 1e-12 * (1 + C)
            pointwise.append((complex(w), err, bound))
            if err > bound:
                raise NumericalFailure(
                    "factorization error %.3e at %s exceeds the tail bound %.3e"
                    % (err, w, bound)
                )
    return FactorizationRecord(
        c=c,
        b=b,
        gamma=gamma,
        series_budget=depth,
        bessel_sum=coeff_sum,
        h_norm=nh,
        pointwise=pointwise,
    )


def intertwining_residual(shift, U):
    """:math:`\\|SUx-UTx\\|` over the columns :math:`T^ie_j`, :math:`i<I`."""
    m = U.codomain.m
    I = U.codomain.degree
    Y = U.data.conj().transpose(0, 1)[:, : I * m]
    S = shift_matrix(I + 1, I + 1, 1, m)
    return _matrix_norm(S @ (U.data @ Y) - U.data @ shift.apply(Y))


def build_unitary_U(shift, budget=None, tol=ISOMETRY_TOL):
    """
    The unitary :math:`U:H\\to H^2(\\mathbb C^m)` with
    :math:`U(T^ie_j)=z^i\\delta_j`, truncated to the powers :math:`T^ie_j`
    that fit in the ambient space (or to ``budget`` powers).

    :return: :class:`OperatorMatrix` from the ambient space to
        ``HardySpec(m, I)``
    :raises InvalidShift: when the shift is not an isometry or the system
        :math:`\\{T^ie_j\\}` is degenerate
    :raises BudgetError: when fewer than ``budget`` powers fit
    """
    if not shift.isometry:
        raise InvalidShift("U is defined for isometric shifts only")
    m = shift.multiplicity
    n_D = shift.n_domain
    cur = shift.kernel_basis.data
    cols = [cur]
    limit = budget if budget is not None else shift.n_ambient
    while len(cols) - 1 < limit:
        if torch.linalg.vector_norm(cur[n_D:]).item() > 1e-12:
            break
        cur = shift.apply(cur)
        cols.append(cur)
    I = len(cols) - 1
    if budget is not None and I < budget:
        raise BudgetError("only %d powers of T fit in the ambient space, %d requested" % (I, budget))
    if I == 0:
        raise BudgetError("ker T* reaches the top of the ambient space")
    Y = torch.stack(cols, dim=1).reshape(shift.n_ambient, (I + 1) * m)
    gram = Y.conj().transpose(0, 1) @ Y
    if torch.linalg.eigvalsh(gram)[0].item() < 0.5:
        raise InvalidShift("the system T^i e_j is degenerate")
    err = _matrix_norm(gram - torch.eye((I + 1) * m, dtype=CDTYPE))
    if err > tol:
        raise InvalidShift("the system T^i e_j is not orthonormal (%.3e)" % err)
    U = OperatorMatrix(Y.conj().transpose(0, 1), shift.ambient, HardySpec(m, I))
    res = intertwining_residual(shift, U)
    if res > tol:
        raise InvalidShift("||SU - UT|| = %.3e" % res)
    logger.debug("build_unitary_U: %d powers, Gram error %.2e, intertwining %.2e", I, err, res)
    return U


def calc_hT_g(h, g, shift, U, tol=1e-12):
    """
    :math:`h(T)g=U^*[(Ug)h]` for a scalar polynomial ``h``, without forming
    powers of :math:`T`.

    :raises BudgetError: when :math:`(Ug)h` does not fit in the range of
        ``U``
    """
    if h.spec.m != 1:
        raise ShapeError("h must be scalar valued")
    x = _as_vector(g, shift)
    Ug = CoeffFn.from_flat(U.codomain, U.data @ x)
    prod = pointwise_product(Ug, h)
    I = U.codomain.degree
    over = torch.linalg.vector_norm(prod.coeffs[I + 1 :]).item()
    scale = max(Ug.norm() * torch.linalg.vector_norm(h.coeffs, ord=1).item(), 1e-300)
    if over > tol * scale:
        raise BudgetError(
            "h(T)g leaves the %d powers covered by U (%.3e)" % (I, over)
        )
    return U.data.conj().transpose(0, 1) @ prod.coeffs[: I + 1].reshape(-1)


def _expansion_steps(X, ops, start, cap, tail_tol):
    """
    Smallest number of expansion steps, at least ``start``, after which
    :math:`\\|R^{steps+1}f\\|\\le` ``tail_tol`` :math:`\\|f\\|` for every
    column :math:`f` of ``X``; ``cap`` when none below it does.
    """
    norms = torch.linalg.vector_norm(X, dim=0).clamp(min=1e-300)
    Y = X
    for k in range(cap + 1):
        Y = ops.R.data @ Y
        if k >= start and (torch.linalg.vector_norm(Y, dim=0) / norms).max().item() <= tail_tol:
            return k
    logger.warning(
        "transfer_decompose: R^k f is still above %.1e of ||f|| after %d steps", tail_tol, cap
    )
    return cap


def transfer_decompose(
    M,
    F,
    shift,
    steps=None,
    U=None,
    tol=DEFAULT_TOL,
    iso_tol=1e-10,
    inv_tol=1e-10,
    functions=None,
    tail_tol=1e-14,
    max_steps=None,
):
    """
    Transfers each basis vector :math:`f` of :math:`M` to
    :math:`(K_0,K_1)\\in H^2(\\mathbb C^r)\\oplus H^2(\\mathbb C^p)` with
    :math:`f=K_0(T)G_0+TK_1(T)F_1` and collects
    :math:`K=\\text{span}\\{(K_0,K_1)\\}`, which is invariant under the
    componentwise backward shift.

    :math:`K_0` and :math:`K_1` are power series that need not terminate;
    they are cut after ``steps`` terms. The invariance check allows for the
    cut: its tolerance is ``inv_tol`` plus the dropped remainder
    :math:`\\|R^{steps+1}f\\|` scaled by the conditioning of the transferred
    vectors.

    :param steps: number of expansion steps; by default the ambient budget
        plus one, extended until the remainder drops below ``tail_tol``
        :math:`\\|f\\|` (at most ``max_steps``, by default the larger of 2000
        and 40 times the ambient budget)
    :param functions: columns of M to transfer instead of its orthonormal
        basis
    :return: :class:`TransferResult`; ``case`` is ``"ii"`` when
        :math:`M\\subset TH`
    :raises NumericalFailure: when :math:`\\|f\\|^2\\ne\\|K_0\\|^2+\\|K_1\\|^2`
        or :math:`K` is not backward shift invariant
    """
    ok, residual = check_nearly_invariant(M, F, shift, tol)
    if not ok:
        raise NumericalFailure("(M, F) is not nearly invariant (residual %.3e)" % residual)
    ops = rqs_operators(M, F, shift, tol)
    G0, r = wandering(M, shift, tol)
    p = F.dim
    if r + p == 0:
        raise NumericalFailure("M lies in TH and has no defect")
    X = M.data if functions is None else torch.as_tensor(functions).to(CDTYPE)
    if X.dim() == 1:
        X = X.view(-1, 1)
    if steps is None:
        start = shift.ambient.degree + 1
        cap = max_steps if max_steps is not None else max(2000, 40 * start)
        steps = _expansion_steps(X, ops, start, max(cap, start), tail_tol)
    elif steps < 2:
        raise InvalidInput("transfer_decompose needs at least 2 steps, got %d" % steps)
    if U is None and shift.isometry:
        U = build_unitary_U(shift)
    if not shift.isometry:
        logger.warning("transfer_decompose: the shift is not an isometry")

    pairs = []
    joint = []
    remainder = 0.0
    for i in range(X.size(1)):
        f = X[:, i]
        rec = approx_expand(f, ops, shift, steps, all_steps=False)
        remainder = max(remainder, torch.linalg.vector_norm(rec.remainder).item())
        c = rec.q_terms @ G0.data.conj()
        b = rec.s_terms @ F.data.conj()
        defect = abs(
            torch.linalg.vector_norm(f).item() ** 2
            - (c.abs() ** 2).sum().item()
            - (b.abs() ** 2).sum().item()
        )
        if shift.isometry and defect > iso_tol * max(1.0, torch.linalg.vector_norm(f).item() ** 2):
            raise NumericalFailure("transfer isometry defect %.3e" % defect)
        K0 = CoeffFn(HardySpec(r, steps), c) if r > 0 else None
        K1 = CoeffFn(HardySpec(p, steps - 1), b) if p > 0 else None
        pairs.append(TransferPair(U, K0, K1, c, b, defect))
        stacked = torch.zeros(steps + 1, r + p, dtype=CDTYPE)
        stacked[:, :r] = c
        stacked[:steps, r:] = b
        joint.append(stacked.reshape(-1))

    J = torch.stack(joint, dim=1)
    K, dim = orthonormalize(J, tol, HardySpec(r + p, steps))
    # componentwise backward shift: drop the first coefficient block
    d = r + p
    Y = torch.zeros_like(K.data)
    Y[:-d] = K.data[d:]
    inv = _matrix_norm(Y - K.project(Y))
    smallest = torch.linalg.svdvals(J)[dim - 1].item()
    allowed = inv_tol + 2 * remainder / smallest
    if inv > allowed:
        raise NumericalFailure("K is not backward shift invariant (%.3e, allowed %.3e)" % (inv, allowed))
    logger.debug(
        "transfer_decompose: r %d, p %d, dim K %d, %d steps, remainder %.2e, invariance %.2e",
        r,
        p,
        K.dim,
        steps,
        remainder,
        inv,
    )
    return TransferResult(
        pairs=pairs,
        K=K,
        case="i" if r > 0 else "ii",
        invariance_residual=inv,
        G0=G0,
        F1=F,
        U=U,
        steps=steps,
        remainder=remainder,
    )


def reconstruct(pair, G0, F1, shift, U, tol=1e-10):
    """
    Rebuilds :math:`K_0(T)G_0+TK_1(T)F_1`. The sum is formed in the
    coordinates of ``U``, where :math:`T` acts as :math:`z`: single terms may
    run past the powers ``U`` covers, their sum may not.

    :raises BudgetError: when the sum leaves the range of ``U``
    """
    m = U.codomain.m
    I = U.codomain.degree
    parts = []
    if pair.K0 is not None:
        for i in range(G0.dim):
            Ug = CoeffFn.from_flat(U.codomain, U.data @ G0.data[:, i])
            parts.append(pointwise_product(Ug, pair.K0.component(i)).coeffs)
    if pair.K1 is not None:
        for j in range(F1.dim):
            Uf = CoeffFn.from_flat(U.codomain, U.data @ F1.data[:, j])
            prod = pointwise_product(Uf, pair.K1.component(j)).coeffs
            parts.append(torch.cat([torch.zeros(1, m, dtype=CDTYPE), prod]))
    n = max([I + 1] + [part.size(0) for part in parts])
    total = torch.zeros(n, m, dtype=CDTYPE)
    for part in parts:
        total[: part.size(0)] += part
    over = torch.linalg.vector_norm(total[I + 1 :]).item()
    scale = max(torch.linalg.vector_norm(total).item(), 1e-300)
    if over > tol * scale:
        raise BudgetError("K0(T)G0 + T K1(T)F1 leaves the %d powers covered by U (%.3e)" % (I, over))
    return U.data.conj().transpose(0, 1) @ total[: I + 1].reshape(-1)


def recover_scalar_inner(K, tol=1e-8, inv_tol=1e-8):
    """
    The Blaschke product :math:`B` with :math:`K=K_B`, for a finite
    dimensional backward shift invariant subspace of scalar :math:`H^2`. The
    zeros are the conjugated eigenvalues of the compression of :math:`S^*`
    to :math:`K`.

    :raises NotModelSpace: when :math:`K` is not backward shift invariant,
        an eigenvalue is not inside the disc of radius ``1 - tol``, or
        :math:`K` is not orthogonal to :math:`BH^2`
    """
    spec = K.spec if K.spec is not None else HardySpec(1, K.ambient_dim - 1)
    if spec.m != 1:
        raise ShapeError("recover_scalar_inner works in scalar H^2")
    if K.dim == 0:
        raise InvalidInput("K must be nonzero")
    Q = K.data
    X = backward_shift_operator(spec).data @ Q
    inv = _matrix_norm(X - K.project(X))
    if inv > inv_tol:
        raise NotModelSpace("K is not backward shift invariant (%.3e)" % inv)
    A = Q.conj().transpose(0, 1) @ X
    zeros = []
    for lam, _ in eigenpairs(A):
        if abs(lam) >= 1 - tol:
            raise NotModelSpace("eigenvalue %s of the compression is not inside the disc" % lam)
        zeros.append(0j if abs(lam) < 1e-14 else lam.conjugate())
    B = BlaschkeProduct(zeros)
    N = spec.degree
    t = taylor(B, N).coeffs[:, 0]
    n_cols = N // 2 + 1
    mult = toeplitz_matrix(
        LaurentSymbol.from_coeffs(t), HardySpec(1, n_cols - 1), spec
    ).data
    ortho = _matrix_norm(Q.conj().transpose(0, 1) @ mult)
    if ortho > inv_tol:
        raise NotModelSpace("K is not orthogonal to B H^2 (%.3e)" % ortho)
    logger.debug("recover_scalar_inner: zeros %s", zeros)
    return B


def _grid(n):
    size = 1024
    while size < 4 * n:
        size *= 2
    return size


def scaling_matrix(s, spec):
    """Matrix of :math:`U_sf(z)=f(sz)`: diagonal with entries :math:`s^n`."""
    d = torch.tensor([s**n for n in range(spec.degree + 1)], dtype=CDTYPE)
    return kronecker(torch.diag(d), torch.eye(spec.m, dtype=CDTYPE))


def ts_star_matrix(B, s, spec, grid=None):
    """
    Matrix of :math:`T_s^*=U_sT_{B^{-1}}U_s^{-1}`, the Toeplitz operator with
    the co-analytic symbol :math:`\\overline{B(z/s)}` on the unit circle. The
    symbol's Laurent coefficients come from an FFT; the matrix is upper
    triangular and exact on ``spec``.

    :raises DomainError: when a zero of ``B`` is not inside the disc of
        radius ``s``
    """
    if not 0 < s < 1:
        raise DomainError("radius %s is not in (0, 1)" % s)
    if B.rho >= s:
        raise DomainError("zero of modulus %s outside the disc of radius %s" % (B.rho, s))
    n = spec.degree + 1
    grid = grid or _grid(n)
    w = torch.exp(2j * math.pi * torch.arange(grid, dtype=torch.float64) / grid)
    vals = evaluate_blaschke(B, w / s).conj()
    coeffs = torch.fft.fft(vals) / grid
    analytic = coeffs[1 : grid // 2].abs().max().item()
    if analytic > 1e-12:
        logger.warning("ts_star_matrix: analytic part of the symbol %.2e", analytic)
    eye = torch.eye(spec.m, dtype=CDTYPE)
    sym = LaurentSymbol({-k: coeffs[(-k) % grid] * eye for k in range(n)})
    return toeplitz_matrix(sym, spec, spec)


def inverse_symbol_matrix(B, s, spec, grid=None):
    """
    Toeplitz matrix of :math:`1/B` in monomial coordinates, from the Laurent
    coefficients of :math:`1/B` on the circle of radius ``s``.
    """
    n = spec.degree + 1
    grid = grid or _grid(n)
    w = torch.exp(2j * math.pi * torch.arange(grid, dtype=torch.float64) / grid)
    vals = 1 / evaluate_blaschke(B, s * w)
    coeffs = torch.fft.fft(vals) / grid
    eye = torch.eye(spec.m, dtype=CDTYPE)
    sym = LaurentSymbol(
        {-k: coeffs[(-k) % grid] * s**k * eye for k in range(n)}
    )
    return toeplitz_matrix(sym, spec, spec)


def ts_star_intertwining_residual(B, s, spec, grid=None):
    """:math:`\\|U_sT_{B^{-1}}-T_s^*U_s\\|` relative to :math:`\\|T_s^*\\|`."""
    Us = scaling_matrix(s, spec)
    Ts = ts_star_matrix(B, s, spec, grid)
    Tinv = inverse_symbol_matrix(B, s, spec, grid)
    res = _matrix_norm(Us @ Tinv.data - Ts.data @ Us)
    return res / max(Ts.norm(), 1.0)


def _series_in_B(coeffs, B, gamma, radius, grid):
    """
    Samples :math:`\\sum_kc_k(B/\\gamma)^k` (row ``k`` of ``coeffs``) on the
    circle of the given radius and returns the Taylor coefficients of the
    rescaled function :math:`z\\mapsto q(\\text{radius}\\cdot z)` and its
    :math:`H^2` norm.
    """
    if coeffs.size(1) == 0:
        return torch.zeros(grid // 2, 0, dtype=CDTYPE), 0.0
    w = torch.exp(2j * math.pi * torch.arange(grid, dtype=torch.float64) / grid)
    ratio = evaluate_blaschke(B, radius * w) / gamma
    vals = geometric(ratio, coeffs.size(0)) @ coeffs
    taylor_coeffs = torch.fft.fft(vals, dim=0) / grid
    norm = math.sqrt((vals.abs() ** 2).sum().item() / grid)
    return taylor_coeffs[: grid // 2], norm


def dalpha_decompose(
    M,
    B,
    alpha,
    F=None,
    params=None,
    tol=DEFAULT_TOL,
    depth=None,
    n_points=16,
    margin=None,
    grid=1024,
    bound_tol=1e-10,
):
    """
    Decomposition of a nearly :math:`T_B^{-1}` invariant subspace of
    :math:`D_\\alpha`: every :math:`f\\in M` is written
    :math:`f=F_0q+\\gamma^{-1}T_BE_0h`.

    The subspace is moved to Wold layer coordinates, where :math:`T_B` is a
    block shift and the norms :math:`\\|\\cdot\\|_1` (for
    :math:`\\alpha<0`, with :math:`T=\\gamma_1^{-1}T_B`) and
    :math:`\\|\\cdot\\|_2` (for :math:`\\alpha\\ge0`, :math:`\\gamma=1`) are
    diagonal, and the Hardy space machinery runs unchanged.

    For :math:`\\alpha<0`, :math:`q` and :math:`h` are measured in
    :math:`H^2(sD)` and the bound checked is
    :math:`(1-\\|\\gamma_1^{-1}B\\|^2_{H^\\infty(sD)})^{1/2}
    (\\|q\\|^2+\\|h\\|^2)^{1/2}\\le\\|f\\|_1`; for :math:`\\alpha\\ge0` it is
    :math:`\\sum|c|^2+\\sum|b|^2\\le\\|f\\|_2^2`.

    :param M: :class:`SubspaceBasis` (or matrix) of Taylor coefficient
        columns; the columns are the functions decomposed
    :param F: optional defect space in Taylor coordinates; the minimal defect
        is computed when None
    :param params: a :class:`nisd.dirichlet.ParamsCertificate`, computed with
        :func:`nisd.dirichlet.choose_params` when None and :math:`\\alpha<0`
    :return: :class:`DAlphaResult`
    """
    if not -1 <= alpha <= 1:
        raise DomainError("alpha=%s outside [-1, 1]" % alpha)
    Mt = M.data if isinstance(M, SubspaceBasis) else torch.as_tensor(M).to(CDTYPE)
    if Mt.dim() == 1:
        Mt = Mt.view(-1, 1)
    N = Mt.size(0) - 1
    if alpha < 0:
        cert = params if params is not None else choose_params(B, alpha, margin)[3]
        gamma, s = cert.gamma1, cert.s

        def weight_fn(n):
            return norm1_weights(n, cert.G, alpha)

    else:
        cert = None
        gamma, s = 1.0, enclosing_radius(B, margin)

        def weight_fn(n):
            return norm2_weights(n, alpha)

    d = B.degree
    Ls = max(N + 2 * taylor_budget(B), 4 * d)
    analysis = wold_analysis(B, Ls)
    n_layers = analysis.codomain.degree + 1
    coords = analysis.data @ _embed(Mt, Ls + 1)
    parseval = (
        torch.linalg.vector_norm(coords, dim=0) - torch.linalg.vector_norm(Mt, dim=0)
    ).abs().max().item()
    if parseval > 1e-10 * max(torch.linalg.vector_norm(Mt).item(), 1.0):
        raise BudgetError("Wold coordinates lose %.3e of the norm at budget %d" % (parseval, Ls))

    energy = (coords.abs() ** 2).reshape(n_layers, d, -1).sum(dim=(1, 2))
    significant = (energy > 1e-28 * energy.max()).nonzero()
    last = int(significant.max().item())
    n_dom = last + 2
    n_amb = n_dom + 1
    amb_spec = HardySpec(d, n_amb)
    X = torch.zeros(amb_spec.dim, Mt.size(1), dtype=CDTYPE)
    rows = min(amb_spec.dim, coords.size(0))
    X[:rows] = coords[:rows]
    synthesis = torch.zeros(Ls + 1, amb_spec.dim, dtype=CDTYPE)
    synthesis[:, :rows] = analysis.data.conj().transpose(0, 1)[:, :rows]

    T = OperatorMatrix(
        shift_matrix(n_dom + 1, n_amb + 1, 1, d) / gamma, HardySpec(d, n_dom), amb_spec
    )
    shift = build_shift(
        T,
        weight=weight_fn(n_amb + 1),
        tol=tol,
        synthesis=synthesis,
        function_spec=HardySpec(1, Ls),
    )
    Xw = shift.whiten(X)
    Mb, _ = orthonormalize(Xw, tol)
    if F is None:
        report = detect(Mb, shift, tol)
        Fb = report.F1
    else:
        Ft = F.data if isinstance(F, SubspaceBasis) else torch.as_tensor(F).to(CDTYPE)
        Fw = shift.whiten((analysis.data @ _embed(Ft, Ls + 1))[: amb_spec.dim])
        Fb, _ = orthonormalize(Fw - Mb.project(Fw), _defect_tol(tol))
        G0, r = wandering(Mb, shift, tol)
        ok, residual = check_nearly_invariant(Mb, Fb, shift, tol)
        if not ok:
            raise NumericalFailure("M is not nearly invariant with the given defect (%.3e)" % residual)
        report = NearInvReport(
            r, Fb.dim, G0, Fb, r == 0, {"near_invariance": residual}, shift.lower_bound - 1
        )
    G0, r, p = report.G0, report.r, Fb.dim
    ops = rqs_operators(Mb, Fb, shift, tol)

    radius = 0.9 * s
    pts = radius * torch.exp(
        2j * math.pi * (torch.arange(n_points, dtype=torch.float64) + 0.5) / n_points
    )
    beta_s = cert.sup_norm / gamma if cert is not None else None
    sample_radius = s if alpha < 0 else 1.0

    terms = []
    joint = []
    for i in range(Xw.size(1)):
        frec = factorization(
            Xw[:, i],
            ops,
            shift,
            G0,
            Fb,
            gamma,
            depth,
            lambda w: evaluate_blaschke(B, w),
            pts,
        )
        norm_f = torch.linalg.vector_norm(Xw[:, i]).item()
        q_coeffs, norm_q = _series_in_B(frec.c, B, gamma, sample_radius, grid)
        h_coeffs, norm_h = _series_in_B(frec.b, B, gamma, sample_radius, grid)
        if alpha < 0:
            lhs = math.sqrt(1 - beta_s**2) * math.sqrt(norm_q**2 + norm_h**2)
        else:
            lhs = math.sqrt(frec.bessel_sum)
        slack = norm_f - lhs
        check = {"lhs": lhs, "rhs": norm_f, "slack": slack, "holds": slack >= -bound_tol * max(norm_f, 1.0)}
        if not check["holds"]:
            raise NumericalFailure("norm inequality fails: %.15f > %.15f" % (lhs, norm_f))
        q = CoeffFn(HardySpec(r, grid // 2 - 1), q_coeffs) if r > 0 else None
        h = CoeffFn(HardySpec(p, grid // 2 - 1), h_coeffs) if p > 0 else None
        terms.append(DAlphaTerm(q, h, frec.c, frec.b, norm_f, norm_q, norm_h, check, frec))
        if r + p > 0:
            joint.append(torch.cat([q_coeffs, h_coeffs], dim=1).reshape(-1))

    ts_invariance = None
    if alpha < 0 and joint:
        spec = HardySpec(r + p, grid // 2 - 1)
        Nq, dim = orthonormalize(torch.stack(joint, dim=1), tol, spec)
        Ts = kronecker(ts_star_matrix(B, s, HardySpec(1, spec.degree)).data, torch.eye(r + p, dtype=CDTYPE))
        Y = Ts @ Nq.data
        ts_invariance = {"dim": dim, "residual": _matrix_norm(Y - Nq.project(Y))}
        logger.info("dalpha_decompose: T_s* invariance residual %.3e", ts_invariance["residual"])
    return DAlphaResult(
        terms=terms,
        report=report,
        shift=shift,
        gamma=gamma,
        s=s,
        certificate=cert,
        ts_invariance=ts_invariance,
        layers=n_layers,
    )
