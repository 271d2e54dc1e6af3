from dataclasses import dataclass

import torch

from ..errors import InvalidInput, ShapeError
from ..maths import CDTYPE


@dataclass(frozen=True)
class HardySpec:
    """
    A truncated vector valued Hardy space :math:`H^2(\\mathbb C^m)`: functions
    :math:`F(z)=\\sum_{n\\le N} A_n z^n` with :math:`A_n\\in\\mathbb C^m`.

    :param m: number of components
    :param degree: truncation budget :math:`N`
    """

    m: int
    degree: int

    def __post_init__(self):
        if self.m < 1 or self.degree < 1:
            raise ShapeError(
                "HardySpec needs m >= 1 and degree >= 1, got m=%d degree=%d"
                % (self.m, self.degree)
            )

    @property
    def dim(self):
        return self.m * (self.degree + 1)

    def padded(self, d):
        return HardySpec(self.m, self.degree + d)


def random_coeff_fn(spec, degree=None, generator=None):
    """
    Returns a random :class:`CoeffFn` whose coefficients up to ``degree``
    (the whole budget when None) have independent standard complex normal
    real and imaginary parts.
    """
    if degree is None:
        degree = spec.degree
    coeffs = torch.zeros(spec.degree + 1, spec.m, dtype=CDTYPE)
    shape = (degree + 1, spec.m)
    re = torch.randn(shape, generator=generator, dtype=torch.float64)
    im = torch.randn(shape, generator=generator, dtype=torch.float64)
    coeffs[: degree + 1] = torch.complex(re, im)
    return CoeffFn(spec, coeffs)


class CoeffFn:
    """
    A truncated analytic :math:`\\mathbb C^m` valued function stored as its
    Taylor coefficients :math:`A_0, \\ldots, A_N`.

    :param spec: the :class:`HardySpec` the function lives in
    :param coeffs: tensor of shape ``(N+1, m)``; a 1d tensor is accepted for
        scalar functions
    :param tail_bound: certified bound on the norm of the discarded
        coefficients :math:`\\left(\\sum_{n>N}\\|A_n\\|^2\\right)^{1/2}`
    """

    def __init__(self, spec, coeffs, tail_bound=0.0):
        coeffs = torch.as_tensor(coeffs).to(CDTYPE)
        if coeffs.dim() == 1 and spec.m == 1:
            coeffs = coeffs.view(-1, 1)
        if tuple(coeffs.shape) != (spec.degree + 1, spec.m):
            raise ShapeError(
                "coefficients of shape %s do not match %s"
                % (tuple(coeffs.shape), spec)
            )
        if not torch.isfinite(torch.view_as_real(coeffs)).all():
            raise InvalidInput("coefficients contain NaN or Inf")
        if tail_bound < 0:
            raise InvalidInput("tail_bound must be nonnegative")
        self.spec = spec
        self.coeffs = coeffs
        self.tail_bound = float(tail_bound)

    @staticmethod
    def from_flat(spec, flat, tail_bound=0.0):
        """
        Builds a function from a coefficient vector interleaved by degree
        (the block :math:`A_0` first). Short vectors are zero padded.
        """
        flat = torch.as_tensor(flat).to(CDTYPE).reshape(-1)
        if flat.size(0) > spec.dim:
            raise ShapeError(
                "vector of length %d exceeds dimension %d" % (flat.size(0), spec.dim)
            )
        full = torch.zeros(spec.dim, dtype=CDTYPE)
        full[: flat.size(0)] = flat
        return CoeffFn(spec, full.view(spec.degree + 1, spec.m), tail_bound)

    @staticmethod
    def monomial(spec, n, component=0, scale=1.0):
        coeffs = torch.zeros(spec.degree + 1, spec.m, dtype=CDTYPE)
        coeffs[n, component] = scale
        return CoeffFn(spec, coeffs)

    def get_flat_representation(self):
        return self.coeffs.reshape(-1)

    def norm(self):
        return torch.linalg.vector_norm(self.coeffs).item()

    def resize(self, degree):
        """
        Returns the same function stored at another budget; coefficients that
        are cut off are added to ``tail_bound``.
        """
        coeffs = torch.zeros(degree + 1, self.spec.m, dtype=CDTYPE)
        n = min(degree, self.spec.degree) + 1
        coeffs[:n] = self.coeffs[:n]
        dropped = torch.linalg.vector_norm(self.coeffs[n:]).item()
        return CoeffFn(
            HardySpec(self.spec.m, degree), coeffs, self.tail_bound + dropped
        )

    def component(self, j):
        return CoeffFn(HardySpec(1, self.spec.degree), self.coeffs[:, j], self.tail_bound)

    def _check_same_spec(self, other):
        if self.spec != other.spec:
            raise ShapeError("%s and %s differ" % (self.spec, other.spec))

    def __add__(self, other):
        self._check_same_spec(other)
        return CoeffFn(
            self.spec, self.coeffs + other.coeffs, self.tail_bound + other.tail_bound
        )

    def __sub__(self, other):
        self._check_same_spec(other)
        return CoeffFn(
            self.spec, self.coeffs - other.coeffs, self.tail_bound + other.tail_bound
        )

    def __neg__(self):
        return CoeffFn(self.spec, -self.coeffs, self.tail_bound)

    def __rmul__(self, x):
        x = complex(x)
        return CoeffFn(self.spec, x * self.coeffs, abs(x) * self.tail_bound)

    def __repr__(self):
        return "CoeffFn(m=%d, degree=%d, norm=%.3e, tail_bound=%.1e)" % (
            self.spec.m,
            self.spec.degree,
            self.norm(),
            self.tail_bound,
        )
