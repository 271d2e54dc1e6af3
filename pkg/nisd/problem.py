"""
Problem files: the JSON description of an ambient space, a shift operator and
a subspace, and the builders that turn one into library objects.
"""
import copy
import json
import logging
import os
from dataclasses import dataclass
from typing import Optional

import torch

from .blaschke import BlaschkeProduct, mult_operator, taylor, taylor_budget, _takenaka_malmquist
from .errors import BudgetError, NisdError, SpecError
from .hardy import shift_operator
from .maths import CDTYPE, convolve
from .nearinv import ShiftModel, build_shift
from .numerics import RankTolerance, orthonormalize
from .object.operator import OperatorMatrix, SubspaceBasis
from .object.vector import HardySpec

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TOP_LEVEL_KEYS = {
    "schema_version",
    "space",
    "operator",
    "subspace",
    "defect_hint",
    "tolerances",
    "seed",
}
DEFAULT_TOLERANCES = {"rank": 1e-10, "check": 1e-8, "leak": 1e-8}


def parse_complex(x):
    """A JSON number or ``[re, im]`` pair as a Python complex."""
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    raise SpecError("cannot read %r as a complex number" % (x,))


def encode_complex(z):
    z = complex(z)
    return [z.real, z.imag]


def encode_tensor(t):
    """Nested lists of ``[re, im]`` pairs."""
    if t.dim() == 0:
        return encode_complex(t.item())
    return [encode_tensor(row) for row in t]


def parse_blaschke(d):
    if "zeros" not in d:
        raise SpecError("a Blaschke product needs 'zeros'")
    zeros = [parse_complex(z) for z in d["zeros"]]
    return BlaschkeProduct(zeros, parse_complex(d.get("phase", 1.0)))


def expand_monomials(entries, budget):
    """
    Degrees listed in a ``monomials`` generator; a trailing ``"..."`` continues
    the arithmetic progression of the last two entries up to ``budget``.
    """
    if not entries:
        raise SpecError("empty monomial list")
    if entries[-1] == "...":
        head = [int(k) for k in entries[:-1]]
        if len(head) < 2 or head[-1] <= head[-2]:
            raise SpecError("'...' needs two increasing degrees before it")
        step = head[-1] - head[-2]
        k = head[-1] + step
        while k <= budget:
            head.append(k)
            k += step
        degrees = head
    else:
        degrees = [int(k) for k in entries]
    for k in degrees:
        if k < 0 or k > budget:
            raise SpecError("degree %d outside the budget %d" % (k, budget))
    return degrees


@dataclass
class ProblemSpec:
    """
    A parsed problem file.

    :param space: ``{"kind": "hardy", "m": m, "budget": N}`` or
        ``{"kind": "dalpha", "alpha": a, "budget": N}``
    :param operator: ``{"kind": "shift"}``, ``{"kind": "blaschke", "zeros":
        [...], "phase": ...}`` or ``{"kind": "matrix", "file": PATH}``
    :param subspace: ``{"generators": [...]}``
    """

    space: dict
    operator: dict
    subspace: dict
    defect_hint: Optional[list] = None
    tolerances: Optional[dict] = None
    seed: int = 0
    schema_version: int = SCHEMA_VERSION
    base_dir: str = "."

    @staticmethod
    def from_dict(d, base_dir="."):
        if not isinstance(d, dict):
            raise SpecError("a problem file holds a JSON object")
        unknown = set(d) - TOP_LEVEL_KEYS
        if unknown:
            raise SpecError("unknown keys %s" % sorted(unknown))
        for key in ("space", "operator", "subspace"):
            if key not in d:
                raise SpecError("missing key '%s'" % key)
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise SpecError("schema_version %s, expected %d" % (version, SCHEMA_VERSION))
        tolerances = dict(DEFAULT_TOLERANCES)
        tolerances.update(d.get("tolerances") or {})
        for k, v in tolerances.items():
            if not isinstance(v, (int, float)) or v <= 0:
                raise SpecError("tolerance %s must be positive, got %r" % (k, v))
        spec = ProblemSpec(
            space=dict(d["space"]),
            operator=dict(d["operator"]),
            subspace=dict(d["subspace"]),
            defect_hint=d.get("defect_hint"),
            tolerances=tolerances,
            seed=int(d.get("seed", 0)),
            schema_version=version,
            base_dir=base_dir,
        )
        spec.validate()
        return spec

    @staticmethod
    def load(path):
        try:
            with open(path) as f:
                d = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise SpecError("cannot read problem file %s: %s" % (path, e))
        return ProblemSpec.from_dict(d, os.path.dirname(os.path.abspath(path)))

    def validate(self):
        kind = self.space.get("kind")
        if kind not in ("hardy", "dalpha"):
            raise SpecError("space kind must be 'hardy' or 'dalpha', got %r" % kind)
        if not isinstance(self.space.get("budget"), int) or self.space["budget"] < 1:
            raise SpecError("space budget must be a positive integer")
        if kind == "dalpha":
            alpha = self.space.get("alpha")
            if not isinstance(alpha, (int, float)) or not -1 <= alpha <= 1:
                raise SpecError("alpha must be a number in [-1, 1]")
            if self.operator.get("kind") != "blaschke":
                raise SpecError("D_alpha problems need a Blaschke operator")
        elif int(self.space.get("m", 1)) < 1:
            raise SpecError("m must be positive")
        op = self.operator.get("kind")
        if op not in ("shift", "blaschke", "matrix"):
            raise SpecError("operator kind %r" % op)
        if op == "matrix":
            path = self.operator.get("file")
            if not path or not os.path.exists(self.resolve(path)):
                raise SpecError("operator file %r not found" % path)
        gens = self.subspace.get("generators")
        if not isinstance(gens, list) or not gens:
            raise SpecError("subspace.generators must be a nonempty list")

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    @property
    def budget(self):
        return self.space["budget"]

    @property
    def m(self):
        return int(self.space.get("m", 1)) if self.space["kind"] == "hardy" else 1

    @property
    def rank_tol(self):
        return RankTolerance(relative=self.tolerances["rank"])

    def with_overrides(self, budget=None, tol=None, seed=None):
        spec = copy.deepcopy(self)
        if budget is not None:
            spec.space["budget"] = int(budget)
        if tol is not None:
            spec.tolerances["rank"] = float(tol)
        if seed is not None:
            spec.seed = int(seed)
        spec.validate()
        return spec

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "space": self.space,
            "operator": self.operator,
            "subspace": self.subspace,
            "defect_hint": self.defect_hint,
            "tolerances": self.tolerances,
            "seed": self.seed,
        }


@dataclass
class Problem:
    spec: ProblemSpec
    generators: torch.Tensor
    defect: Optional[torch.Tensor]
    M: Optional[SubspaceBasis] = None
    F: Optional[SubspaceBasis] = None
    shift: Optional[ShiftModel] = None
    blaschke: Optional[BlaschkeProduct] = None
    function_spec: Optional[HardySpec] = None


def _operator_blaschke(spec):
    if spec.operator["kind"] == "blaschke":
        return parse_blaschke(spec.operator)
    return None


def _times_pad(generators):
    pad = 0
    for g in generators or []:
        if isinstance(g, dict) and "times" in g:
            pad = max(pad, taylor_budget(parse_blaschke(g["times"])))
    return pad


def _load_matrix(spec):
    with open(spec.resolve(spec.operator["file"])) as f:
        d = json.load(f)
    try:
        m = int(d.get("m", 1))
        domain = HardySpec(m, int(d["domain_budget"]))
        codomain = HardySpec(m, int(d["codomain_budget"]))
        data = torch.tensor(
            [[encode_complex(parse_complex(x)) for x in row] for row in d["data"]],
            dtype=torch.float64,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SpecError("malformed operator file: %s" % e)
    data = torch.complex(data[..., 0], data[..., 1])
    return OperatorMatrix(data, domain, codomain)


def hardy_operator(spec):
    """
    The padded operator of a Hardy problem. The ambient budget is the
    generator budget plus the Taylor length of any generator factor plus the
    Taylor length of the operator (twice for a Blaschke product with nonzero
    zeros, so that preimages have an empty band below the top).
    """
    N, m = spec.budget, spec.m
    pad = _times_pad(spec.subspace["generators"]) + _times_pad(spec.defect_hint)
    kind = spec.operator["kind"]
    if kind == "shift":
        return shift_operator(HardySpec(m, N + pad))
    if kind == "blaschke":
        B = parse_blaschke(spec.operator)
        t = B.degree if B.is_monomial() else taylor_budget(B)
        extra = 0 if B.is_monomial() else t
        return mult_operator(B, HardySpec(m, N + pad + extra), t)
    return _load_matrix(spec)


def _monomial_columns(g, budget, spec_out):
    degrees = expand_monomials(g["monomials"], budget)
    j = int(g.get("component", 0))
    if not 0 <= j < spec_out.m:
        raise SpecError("component %d outside 0..%d" % (j, spec_out.m - 1))
    n = spec_out.degree + 1
    factor = None
    if "times" in g:
        factor = taylor(parse_blaschke(g["times"]), n - 1).coeffs[:, 0]
    cols = []
    for k in degrees:
        coeffs = torch.zeros(n, spec_out.m, dtype=CDTYPE)
        if factor is None:
            coeffs[k, j] = 1.0
        else:
            coeffs[k:, j] = factor[: n - k]
        cols.append(coeffs.reshape(-1))
    return cols


def _coeff_column(g, spec_out):
    values = [parse_complex(x) for x in g["coeffs"]]
    if len(values) > spec_out.dim:
        raise SpecError("%d coefficients exceed the ambient dimension %d" % (len(values), spec_out.dim))
    col = torch.zeros(spec_out.dim, dtype=CDTYPE)
    col[: len(values)] = torch.tensor(values, dtype=CDTYPE)
    return col


def _random_columns(g, budget, spec_out, generator):
    k = int(g["random"])
    degree = int(g.get("degree", budget))
    if degree > budget:
        raise SpecError("random degree %d above the budget %d" % (degree, budget))
    cols = []
    for _ in range(k):
        col = torch.zeros(spec_out.degree + 1, spec_out.m, dtype=CDTYPE)
        shape = (degree + 1, spec_out.m)
        re = torch.randn(shape, generator=generator, dtype=torch.float64)
        im = torch.randn(shape, generator=generator, dtype=torch.float64)
        col[: degree + 1] = torch.complex(re, im)
        cols.append(col.reshape(-1))
    return cols


def _power_columns_shift(g, shift):
    j = int(g.get("kernel", 0))
    if not 0 <= j < shift.multiplicity:
        raise SpecError("kernel index %d outside 0..%d" % (j, shift.multiplicity - 1))
    powers = [int(n) for n in g["powers"]]
    cols = []
    for n in powers:
        cur = shift.kernel_basis.data[:, j]
        dropped = 0.0
        for _ in range(n):
            dropped += torch.linalg.vector_norm(cur[shift.n_domain :]).item()
            cur = shift.apply(cur)
        if dropped > 1e-12:
            raise BudgetError("T^%d e_%d does not fit in the ambient space (%.2e)" % (n, j, dropped))
        cols.append(cur)
    return cols


def _power_columns_blaschke(g, B, n_out):
    j = int(g.get("kernel", 0))
    if not 0 <= j < B.degree:
        raise SpecError("kernel index %d outside 0..%d" % (j, B.degree - 1))
    v = _takenaka_malmquist(B, n_out - 1)[j]
    t = taylor(B, n_out - 1).coeffs[:, 0]
    cols = []
    for n in (int(k) for k in g["powers"]):
        cur = v
        for _ in range(n):
            cur = convolve(cur, t, n_out)
        lost = max(0.0, 1.0 - torch.linalg.vector_norm(cur).item() ** 2) ** 0.5
        if lost > 1e-7:
            raise BudgetError("B^%d v_%d leaves the budget (lost mass %.2e)" % (n, j, lost))
        cols.append(cur)
    return cols


def _build_columns(generators, spec, spec_out, shift=None, B=None, generator=None):
    cols = []
    for g in generators:
        if not isinstance(g, dict):
            raise SpecError("a generator is a JSON object, got %r" % (g,))
        if "coeffs" in g:
            cols.append(_coeff_column(g, spec_out))
        elif "monomials" in g:
            cols.extend(_monomial_columns(g, spec.budget, spec_out))
        elif "random" in g:
            cols.extend(_random_columns(g, spec.budget, spec_out, generator))
        elif "powers" in g:
            if shift is not None:
                cols.extend(_power_columns_shift(g, shift))
            else:
                cols.extend(_power_columns_blaschke(g, B, spec_out.degree + 1))
        else:
            raise SpecError("unknown generator %s" % sorted(g))
    for i, c in enumerate(cols):
        if torch.linalg.vector_norm(c).item() == 0:
            raise SpecError("generator %d is zero" % i)
    return torch.stack(cols, dim=1)


def build_problem(spec):
    """
    Builds the shift, the subspace and the optional defect hint of a problem.
    For ``dalpha`` problems no shift is built here: the generators are kept
    as Taylor coefficient columns for :func:`nisd.nearinv.dalpha_decompose`.
    """
    generator = torch.Generator().manual_seed(spec.seed)
    tol = spec.rank_tol
    if spec.space["kind"] == "dalpha":
        B = parse_blaschke(spec.operator)
        pad = _times_pad(spec.subspace["generators"]) + _times_pad(spec.defect_hint)
        fspec = HardySpec(1, spec.budget + pad)
        gens = _build_columns(spec.subspace["generators"], spec, fspec, B=B, generator=generator)
        defect = None
        if spec.defect_hint:
            defect = _build_columns(spec.defect_hint, spec, fspec, B=B, generator=generator)
        return Problem(spec, gens, defect, blaschke=B, function_spec=fspec)

    try:
        T = hardy_operator(spec)
        shift = build_shift(T, tol=tol)
    except NisdError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise SpecError("malformed operator: %s" % e)
    amb = shift.ambient
    gens = _build_columns(spec.subspace["generators"], spec, amb, shift=shift, generator=generator)
    M, rank = orthonormalize(gens, tol)
    if rank < gens.size(1):
        logger.info("generators span a subspace of dimension %d < %d", rank, gens.size(1))
    defect, F = None, None
    if spec.defect_hint:
        defect = _build_columns(spec.defect_hint, spec, amb, shift=shift, generator=generator)
        F, _ = orthonormalize(defect - M.project(defect), RankTolerance(absolute=tol.sine_threshold()))
    logger.debug("build_problem: ambient %s, dim M %d", amb, M.dim)
    return Problem(
        spec,
        gens,
        defect,
        M=M,
        F=F,
        shift=shift,
        blaschke=_operator_blaschke(spec),
        function_spec=amb,
    )
