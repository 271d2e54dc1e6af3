import torch

from ..errors import ShapeError
from ..maths import CDTYPE
from .vector import CoeffFn


class OperatorMatrix:
    """
    A dense complex matrix representing an operator between two truncated
    coefficient spaces.

    :param data: tensor of shape ``(codomain.dim, domain.dim)``
    :param domain: :class:`nisd.object.vector.HardySpec` of the input
    :param codomain: :class:`nisd.object.vector.HardySpec` of the output
    :param domain_weight: per-degree weights of the input norm
        :math:`\\|x\\|^2=\\sum_n w_n\\|x_n\\|^2` (None for the unweighted
        :math:`H^2` norm)
    :param codomain_weight: same for the output
    """

    def __init__(
        self, data, domain, codomain, domain_weight=None, codomain_weight=None
    ):
        data = torch.as_tensor(data).to(CDTYPE)
        if tuple(data.shape) != (codomain.dim, domain.dim):
            raise ShapeError(
                "matrix of shape %s does not map %s to %s"
                % (tuple(data.shape), domain, codomain)
            )
        self.data = data
        self.domain = domain
        self.codomain = codomain
        self.domain_weight = domain_weight
        self.codomain_weight = codomain_weight
        self.pinv = None
        self.svals = None
        self._opnorm = None

    def mv(self, f):
        """
        Applies the matrix to a :class:`CoeffFn` living in ``domain``. The
        tail bound is multiplied by the operator norm.
        """
        if f.spec != self.domain:
            raise ShapeError("%s is not the domain %s" % (f.spec, self.domain))
        out = torch.mv(self.data, f.get_flat_representation())
        return CoeffFn.from_flat(self.codomain, out, self.norm() * f.tail_bound)

    def norm(self):
        """Largest singular value (unweighted)."""
        if self._opnorm is None:
            if self.data.numel() == 0:
                self._opnorm = 0.0
            else:
                self._opnorm = torch.linalg.matrix_norm(self.data, ord=2).item()
        return self._opnorm

    def singular_values(self):
        if self.svals is None:
            self.svals = torch.linalg.svdvals(self.data)
        return self.svals

    def compute_pseudo_inverse(self, rcond=1e-15):
        """
        Computes and stores the Moore-Penrose pseudo-inverse together with the
        singular values, so that repeated solves are matrix-vector products.
        """
        U, S, Vh = torch.linalg.svd(self.data, full_matrices=False)
        self.svals = S
        cutoff = S[0] * rcond if S.numel() > 0 else 0.0
        inv = torch.where(S > cutoff, 1.0 / S, torch.zeros_like(S))
        self.pinv = Vh.conj().transpose(0, 1) @ (inv.to(U.dtype)[:, None] * U.conj().transpose(0, 1))
        return self.pinv

    def adjoint(self):
        return OperatorMatrix(
            self.data.conj().transpose(0, 1),
            self.codomain,
            self.domain,
            self.codomain_weight,
            self.domain_weight,
        )

    def restrict(self, domain):
        """Keeps the columns of degree at most ``domain.degree``."""
        if domain.m != self.domain.m or domain.degree > self.domain.degree:
            raise ShapeError("%s is not a sub-budget of %s" % (domain, self.domain))
        return OperatorMatrix(
            self.data[:, : domain.dim],
            domain,
            self.codomain,
            None if self.domain_weight is None else self.domain_weight[: domain.degree + 1],
            self.codomain_weight,
        )

    def size(self, dim=None):
        s = tuple(self.data.shape)
        if dim is None:
            return s
        return s[dim]

    def __matmul__(self, other):
        if other.codomain != self.domain:
            raise ShapeError("%s does not feed %s" % (other.codomain, self.domain))
        return OperatorMatrix(
            self.data @ other.data,
            other.domain,
            self.codomain,
            other.domain_weight,
            self.codomain_weight,
        )


class SubspaceBasis:
    """
    A finite dimensional subspace of a truncated space, stored as a matrix with
    orthonormal columns.

    :param data: tensor of shape ``(ambient_dim, dim)``
    :param tol: the :class:`nisd.numerics.RankTolerance` used to produce it
    :param spec: optional :class:`HardySpec` giving a function meaning to the
        coordinates
    """

    def __init__(self, data, tol=None, spec=None):
        data = torch.as_tensor(data).to(CDTYPE)
        if data.dim() != 2:
            raise ShapeError("a basis is a 2d tensor, got %d dims" % data.dim())
        if spec is not None and spec.dim != data.size(0):
            raise ShapeError("basis rows %d do not match %s" % (data.size(0), spec))
        self.data = data
        self.tol = tol
        self.spec = spec

    @staticmethod
    def empty(ambient_dim, tol=None, spec=None):
        return SubspaceBasis(torch.zeros(ambient_dim, 0, dtype=CDTYPE), tol, spec)

    @staticmethod
    def coordinates(ambient_dim, indices, tol=None, spec=None):
        """The subspace spanned by the given canonical basis vectors."""
        data = torch.zeros(ambient_dim, len(indices), dtype=CDTYPE)
        for col, i in enumerate(indices):
            data[i, col] = 1.0
        return SubspaceBasis(data, tol, spec)

    @property
    def dim(self):
        return self.data.size(1)

    @property
    def ambient_dim(self):
        return self.data.size(0)

    def projector(self):
        return self.data @ self.data.conj().transpose(0, 1)

    def project(self, x):
        return self.data @ (self.data.conj().transpose(0, 1) @ x)

    def functions(self):
        """The basis vectors as :class:`CoeffFn` objects."""
        if self.spec is None:
            raise ShapeError("this basis carries no HardySpec")
        return [CoeffFn.from_flat(self.spec, self.data[:, i]) for i in range(self.dim)]

    def __repr__(self):
        return "SubspaceBasis(dim=%d, ambient_dim=%d)" % (self.dim, self.ambient_dim)
