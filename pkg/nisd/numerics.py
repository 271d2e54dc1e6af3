import logging
import math
from dataclasses import dataclass

import torch

from .errors import (
    InvalidInput,
    NotContained,
    NumericalFailure,
    ShapeError,
    SingularOperator,
)
from .maths import CDTYPE
from .object.operator import OperatorMatrix, SubspaceBasis

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankTolerance:
    """
    Threshold for numerical rank decisions. A singular value counts when it
    exceeds :math:`\\max(\\text{absolute}, \\text{relative}\\cdot\\sigma_{max})`.

    Subspace decisions (intersection, containment) accept a direction when
    the cosine of its principal angle is at least :math:`1-\\tau` with
    :math:`\\tau=\\max(\\text{absolute}, \\text{relative})`.
    """

    absolute: float = 0.0
    relative: float = 1e-10

    def __post_init__(self):
        if self.absolute < 0 or self.relative < 0:
            raise InvalidInput("tolerances must be nonnegative")
        if self.absolute == 0 and self.relative == 0:
            raise InvalidInput("at least one of absolute/relative must be positive")

    def threshold(self, sigma_max):
        return max(self.absolute, self.relative * float(sigma_max))

    def sine_threshold(self):
        tau = min(max(self.absolute, self.relative), 1.0)
        return math.sqrt(1.0 - (1.0 - tau) ** 2)


DEFAULT_TOL = RankTolerance()


def _as_matrix(A):
    if isinstance(A, (OperatorMatrix, SubspaceBasis)):
        A = A.data
    A = torch.as_tensor(A).to(CDTYPE)
    if A.dim() == 1:
        A = A.view(-1, 1)
    return A


def _check_finite(A):
    if not torch.isfinite(torch.view_as_real(A)).all():
        raise InvalidInput("matrix contains NaN or Inf entries")


def fix_phases(Q):
    """
    Rotates every column by a unimodular scalar so that its entry of largest
    modulus is real and positive. Makes bases reproducible across runs.
    """
    if Q.size(1) == 0:
        return Q
    idx = torch.argmax(Q.abs(), dim=0)
    pivots = Q[idx, torch.arange(Q.size(1))]
    phases = torch.where(pivots.abs() > 0, pivots / pivots.abs(), torch.ones_like(pivots))
    return Q / phases.unsqueeze(0)


def _mgs(A, drop, reorthos=1):
    """
    Modified Gram-Schmidt with reorthogonalization; columns whose residual
    norm falls below ``drop`` are discarded.
    """
    cols = []
    for i in range(A.size(1)):
        v = A[:, i].clone()
        for _ in range(reorthos + 1):
            for q in cols:
                v = v - torch.vdot(q, v) * q
        nv = torch.linalg.vector_norm(v)
        if nv > drop:
            cols.append(v / nv)
    if not cols:
        return torch.zeros(A.size(0), 0, dtype=CDTYPE)
    return torch.stack(cols, dim=1)


def orthonormalize(A, tol=DEFAULT_TOL, spec=None):
    """
    Orthonormal basis of the numerical column space of ``A``.

    The rank is the number of singular values above ``tol``. When a
    Gram-Schmidt pass over the columns (in their given order) finds the same
    rank, its basis is returned, so that the first basis vectors span the
    first generators; otherwise the leading left singular vectors are used.

    :param A: matrix whose columns span the subspace
    :param tol: :class:`RankTolerance`
    :param spec: optional :class:`HardySpec` attached to the result
    :return: ``(SubspaceBasis, rank)``
    """
    A = _as_matrix(A)
    if A.size(1) == 0:
        raise InvalidInput("cannot orthonormalize a matrix without columns")
    _check_finite(A)
    U, S, _ = torch.linalg.svd(A, full_matrices=False)
    sigma_max = S[0].item() if S.numel() > 0 else 0.0
    thr = tol.threshold(sigma_max)
    rank = int((S > thr).sum().item())
    Q = _mgs(A, thr)
    if Q.size(1) != rank:
        Q = fix_phases(U[:, :rank])
    logger.debug(
        "orthonormalize: %d columns, rank %d (threshold %.2e, next sigma %.2e)",
        A.size(1),
        rank,
        thr,
        S[rank].item() if rank < S.numel() else 0.0,
    )
    return SubspaceBasis(Q, tol, spec), rank


def _check_same_ambient(A, B):
    if A.ambient_dim != B.ambient_dim:
        raise ShapeError(
            "ambient dimensions differ: %d and %d" % (A.ambient_dim, B.ambient_dim)
        )


def principal_angles(A, B):
    """
    Principal angles between the column spans of two orthonormal bases, in
    increasing order, ``min(dim A, dim B)`` of them. Small angles come from
    sines and large ones from cosines, which keeps both ends accurate.
    """
    QA = _as_matrix(A)
    QB = _as_matrix(B)
    if QA.size(1) < QB.size(1):
        QA, QB = QB, QA
    if QB.size(1) == 0:
        return torch.zeros(0, dtype=torch.float64)
    cos = torch.linalg.svdvals(QA.conj().transpose(0, 1) @ QB).clamp(max=1.0)
    n_small = int((cos**2 >= 0.5).sum().item())
    large = torch.arccos(cos[n_small:])
    if n_small > 0:
        residual = QB - QA @ (QA.conj().transpose(0, 1) @ QB)
        sines = torch.linalg.svdvals(residual).flip(0)[:n_small].clamp(max=1.0)
        small = torch.arcsin(sines)
    else:
        small = torch.zeros(0, dtype=torch.float64)
    return torch.cat([small, large])


def largest_angle(A, B):
    """
    Largest principal angle between two subspaces; :math:`\\pi/2` when the
    dimensions differ.
    """
    if _as_matrix(A).size(1) != _as_matrix(B).size(1):
        return math.pi / 2
    angles = principal_angles(A, B)
    return angles.max().item() if angles.numel() > 0 else 0.0


def intersect(A, B, tol=DEFAULT_TOL):
    """
    Orthonormal basis of :math:`A\\cap B`: the principal vectors of ``A``
    whose principal angle with ``B`` has cosine at least :math:`1-\\tau`.
    """
    _check_same_ambient(A, B)
    if A.dim == 0 or B.dim == 0:
        return SubspaceBasis.empty(A.ambient_dim, tol, A.spec)
    QA, QB = A.data, B.data
    residual = QA - QB @ (QB.conj().transpose(0, 1) @ QA)
    _, sines, Vh = torch.linalg.svd(residual, full_matrices=True)
    # full_matrices gives all dim(A) right singular vectors, singular values
    # past min(n, dim A) are zero
    all_sines = torch.zeros(QA.size(1), dtype=torch.float64)
    all_sines[: sines.numel()] = sines
    keep = all_sines <= tol.sine_threshold()
    V = Vh.conj().transpose(0, 1)[:, keep]
    result = fix_phases(QA @ V)
    logger.debug("intersect: dims %d and %d -> %d", A.dim, B.dim, result.size(1))
    return SubspaceBasis(result, tol, A.spec)


def complement(outer, inner, tol=DEFAULT_TOL):
    """
    Orthonormal basis of :math:`\\text{outer}\\ominus\\text{inner}`.

    :raises NotContained: when ``inner`` is not inside ``outer`` within the
        angle tolerance
    """
    _check_same_ambient(outer, inner)
    if inner.dim > 0:
        leak = inner.data - outer.project(inner.data)
        leak_norm = torch.linalg.matrix_norm(leak, ord=2).item()
        if leak_norm > tol.sine_threshold():
            raise NotContained(
                "inner subspace leaves outer by %.3e (threshold %.3e)"
                % (leak_norm, tol.sine_threshold())
            )
    k = outer.dim - inner.dim
    if k <= 0:
        return SubspaceBasis.empty(outer.ambient_dim, tol, outer.spec)
    C = outer.data - inner.project(outer.data)
    U, _, _ = torch.linalg.svd(C, full_matrices=False)
    return SubspaceBasis(fix_phases(U[:, :k]), tol, outer.spec)


def pinv_apply(T, y, tol=DEFAULT_TOL):
    """
    Least squares solution :math:`x` of :math:`Tx=y`, that is
    :math:`(T^*T)^{-1}T^*y` for an injective ``T``.

    :param T: :class:`OperatorMatrix` (its pseudo-inverse is computed once and
        cached on the object)
    :param y: vector or matrix of right hand sides
    :raises SingularOperator: when the smallest singular value is below
        ``tol``
    """
    if T.pinv is None:
        T.compute_pseudo_inverse()
    S = T.svals
    if S.numel() == 0 or T.data.size(1) > T.data.size(0):
        raise SingularOperator("operator with more columns than rows is not injective")
    if S[-1].item() <= tol.threshold(S[0].item()):
        raise SingularOperator(
            "smallest singular value %.3e below threshold %.3e"
            % (S[-1].item(), tol.threshold(S[0].item()))
        )
    y = torch.as_tensor(y).to(CDTYPE)
    return T.pinv @ y


def eigenpairs(A, tol=1e-8):
    """
    Eigenvalues and unit eigenvectors of a square matrix, sorted by real then
    imaginary part.

    :raises ShapeError: when ``A`` is not square
    :raises NumericalFailure: when a residual :math:`\\|Av-\\lambda v\\|`
        exceeds ``tol * ||A||``
    """
    A = _as_matrix(A)
    if A.size(0) != A.size(1):
        raise ShapeError("eigenpairs needs a square matrix, got %s" % (tuple(A.shape),))
    _check_finite(A)
    if A.size(0) == 0:
        return []
    evals, evecs = torch.linalg.eig(A)
    evecs = evecs / torch.linalg.vector_norm(evecs, dim=0, keepdim=True)
    scale = max(torch.linalg.matrix_norm(A, ord=2).item(), 1e-300)
    pairs = []
    for i in range(evals.numel()):
        lam, v = evals[i], evecs[:, i]
        res = torch.linalg.vector_norm(A @ v - lam * v).item()
        if res > tol * scale:
            raise NumericalFailure(
                "eigenpair residual %.3e exceeds %.3e" % (res, tol * scale)
            )
        pairs.append((complex(lam.item()), v))
    pairs.sort(key=lambda p: (round(p[0].real, 12), round(p[0].imag, 12)))
    return pairs
