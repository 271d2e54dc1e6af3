"""
Dirichlet type spaces :math:`D_\\alpha` of analytic functions with
:math:`\\sum_n(n+1)^\\alpha|a_n|^2<\\infty`, and the two norms built on Wold
layers that make :math:`T_B` (up to a constant) bounded below.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import torch

from .blaschke import (
    BlaschkeProduct,
    enclosing_radius,
    hinf_norm_on_disc,
    multiply,
    wold_decompose,
)
from .errors import DomainError, NumericalFailure, ParameterFailure, ShapeError
from .object.vector import HardySpec, random_coeff_fn

logger = logging.getLogger(__name__)

ETA = 0.01
G_CAP = 10**6


@dataclass(frozen=True)
class DAlphaSpec:
    alpha: float
    budget: int

    def __post_init__(self):
        if not -1 <= self.alpha <= 1:
            raise DomainError("alpha=%s outside [-1, 1]" % self.alpha)
        if self.budget < 0:
            raise ShapeError("negative budget %d" % self.budget)

    def weights(self, n=None):
        """Standard weights :math:`(k+1)^\\alpha`, ``k <= budget``."""
        n = self.budget + 1 if n is None else n
        return (torch.arange(n, dtype=torch.float64) + 1) ** self.alpha


@dataclass(frozen=True)
class Norm1Params:
    G: int
    alpha: float
    blaschke: BlaschkeProduct = field(compare=False)

    def __post_init__(self):
        if self.G < 1:
            raise DomainError("G must be a positive integer, got %s" % self.G)
        if not -1 <= self.alpha < 0:
            raise DomainError("the first norm needs alpha in [-1, 0), got %s" % self.alpha)


class NormEstimate(NamedTuple):
    value: float
    error: float


def _check_alpha(alpha, low, high, high_open=False):
    ok = low <= alpha < high if high_open else low <= alpha <= high
    if not ok:
        raise DomainError(
            "alpha=%s outside [%s, %s%s" % (alpha, low, high, ")" if high_open else "]")
        )


def norm_alpha(f, alpha):
    """:math:`\\|f\\|_\\alpha=(\\sum_n(n+1)^\\alpha|a_n|^2)^{1/2}` over the
    stored coefficients."""
    if f.spec.m != 1:
        raise ShapeError("norm_alpha takes a scalar function")
    w = DAlphaSpec(alpha, f.spec.degree).weights()
    return math.sqrt((w * f.coeffs[:, 0].abs() ** 2).sum().item())


def norm1_weights(n, G, alpha):
    """:math:`G^\\alpha` on the first ``G`` layers, :math:`(k+1)^\\alpha` after."""
    k = torch.arange(n, dtype=torch.float64)
    return torch.where(k < G, torch.full_like(k, float(G)) ** alpha, (k + 1) ** alpha)


def norm2_weights(n, alpha):
    return (torch.arange(n, dtype=torch.float64) + 1) ** alpha


def _layer_norm(f, B, weight_fn, depth, tol):
    wold = wold_decompose(f, B, depth=depth)
    scale = max(f.norm(), 1e-300)
    if wold.residual > tol * scale:
        raise NumericalFailure(
            "Wold residual %.3e above %.1e relative to ||f|| = %.3e"
            % (wold.residual, tol, scale)
        )
    sq = torch.tensor([h.norm() ** 2 for h in wold.layers], dtype=torch.float64)
    w = weight_fn(len(wold.layers) + 1)
    value = math.sqrt((w[:-1] * sq).sum().item())
    # the truncated remainder and the reconstruction residual both feed the
    # error bar, at the largest weight they could carry
    error = math.sqrt(w.max().item()) * (wold.residual + wold.remainder)
    return NormEstimate(value, error)


def norm1(f, params, depth=None, tol=1e-10):
    """
    :math:`\\|f\\|_1^2=\\sum_{n<G}G^\\alpha\\|f_n\\|^2+\\sum_{n\\ge G}
    (n+1)^\\alpha\\|f_n\\|^2` with :math:`f=\\sum B^nf_n` the Wold
    decomposition against ``params.blaschke``.

    :return: :class:`NormEstimate` ``(value, error)``
    """
    return _layer_norm(
        f,
        params.blaschke,
        lambda n: norm1_weights(n, params.G, params.alpha),
        depth,
        tol,
    )


def norm2(f, alpha, B, depth=None, tol=1e-10):
    """
    :math:`\\|f\\|_2^2=\\sum_n(n+1)^\\alpha\\|g_n\\|^2` for
    :math:`\\alpha\\in[0,1]`, :math:`g_n` the Wold layers of ``f``.
    """
    _check_alpha(alpha, 0, 1)
    return _layer_norm(f, B, lambda n: norm2_weights(n, alpha), depth, tol)


def gamma1(alpha, G):
    """
    Lower bound :math:`\\gamma_1=(1-1/(G+1))^{-\\alpha/2}` of :math:`T_B` for
    :math:`\\|\\cdot\\|_1`; it lies in :math:`(0,1]` and increases to 1 with
    ``G``.
    """
    _check_alpha(alpha, -1, 0, high_open=True)
    if G < 1:
        raise DomainError("G must be a positive integer, got %s" % G)
    return (1 - 1 / (G + 1)) ** (-alpha / 2)


def lower_bound_gamma2():
    """Lower bound of :math:`T_B` for :math:`\\|\\cdot\\|_2`."""
    return 1.0


def empirical_lower_bound(B, alpha, trials=100, degree=16, params=None, generator=None):
    """
    Smallest ratio :math:`\\|Bf\\|/\\|f\\|` over random polynomials, for
    :math:`\\|\\cdot\\|_2` (or :math:`\\|\\cdot\\|_1` when ``params`` is
    given). Used to check :func:`gamma1` and :func:`lower_bound_gamma2`.
    """
    spec = HardySpec(1, degree)
    ratio = float("inf")
    for _ in range(trials):
        f = random_coeff_fn(spec, generator=generator)
        Bf = multiply(B, f)
        if params is None:
            num, den = norm2(Bf, alpha, B).value, norm2(f, alpha, B).value
        else:
            num, den = norm1(Bf, params).value, norm1(f, params).value
        ratio = min(ratio, num / den)
    logger.debug("empirical lower bound over %d trials: %.12f", trials, ratio)
    return ratio


@dataclass(frozen=True)
class ParamsCertificate:
    """
    Result of :func:`choose_params`: the inequality
    :math:`\\sup_{sD}|B|/\\gamma_1(\\alpha,G)<1-\\eta`, with the values it was
    checked with.
    """

    blaschke: BlaschkeProduct = field(compare=False)
    alpha: float
    G: int
    s: float
    gamma1: float
    sup_norm: float
    ratio: float
    eta: float
    grid: int

    def replay(self):
        """
        Recomputes the supremum and :math:`\\gamma_1` from the stored
        ``(G, s)`` and returns the ratio.

        :raises ParameterFailure: when the replayed ratio is not below
            :math:`1-\\eta`
        """
        sup = hinf_norm_on_disc(self.blaschke, self.s, grid=self.grid, refine=False)
        ratio = sup.value / gamma1(self.alpha, self.G)
        if not ratio < 1 - self.eta:
            raise ParameterFailure(
                "replayed ratio %.6f is not below %.2f" % (ratio, 1 - self.eta)
            )
        return ratio

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "G": self.G,
            "s": self.s,
            "gamma1": self.gamma1,
            "sup_norm": self.sup_norm,
            "ratio": self.ratio,
            "eta": self.eta,
            "grid": self.grid,
        }


def choose_params(B, alpha, margin=None, eta=ETA, cap=G_CAP):
    """
    Picks the disc radius ``s`` enclosing the zeros and the smallest ``G``
    with :math:`\\|\\gamma_1^{-1}B\\|_{H^\\infty(sD)}<1-\\eta`.

    Since :math:`\\gamma_1\\le1` this needs :math:`\\sup_{sD}|B|<1-\\eta`;
    the scan over ``G`` starts at the closed form solution of the inequality.

    :return: ``(G, s, gamma1, certificate)``
    :raises ParameterFailure: when no ``G`` up to ``cap`` satisfies the
        inequality
    """
    _check_alpha(alpha, -1, 0, high_open=True)
    s = enclosing_radius(B, margin)
    sup = hinf_norm_on_disc(B, s)
    target = sup.value / (1 - eta)
    if target >= 1:
        raise ParameterFailure(
            "sup |B| = %.6f on the disc of radius %.4f is not below 1 - eta = %.2f"
            % (sup.value, s, 1 - eta)
        )
    # gamma1 > target  <=>  1 - 1/(G+1) > target^(-2/alpha)
    x = target ** (-2 / alpha)
    G = max(1, int(math.floor(1 / (1 - x))) - 2) if x < 1 else 1
    while G <= cap:
        g1 = gamma1(alpha, G)
        ratio = sup.value / g1
        if ratio < 1 - eta:
            break
        G += 1
    else:
        raise ParameterFailure("no admissible G below %d" % cap)
    logger.info(
        "choose_params: s=%.4f sup=%.6f G=%d gamma1=%.6f ratio=%.6f", s, sup.value, G, g1, ratio
    )
    cert = ParamsCertificate(B, alpha, G, s, g1, sup.value, ratio, eta, sup.grid)
    return G, s, g1, cert
