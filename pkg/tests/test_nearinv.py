import math

import pytest
import torch
from tasks import (
    MULTIPLIERS,
    get_dalpha_plant_task,
    get_example_task,
    get_shift,
    planted_subspace,
    random_similarity,
    shift_powers,
)
from utils import check_ratio, check_subspaces, check_tensors, matched_roots

from nisd.blaschke import BlaschkeProduct, model_space, taylor
from nisd.errors import (
    BudgetError,
    DomainError,
    InconclusiveAtBudget,
    InvalidInput,
    InvalidShift,
    NotBoundedBelow,
    NotModelSpace,
    NotSimilar,
    ShapeError,
)
from nisd.hardy import shift_operator
from nisd.maths import CDTYPE
from nisd.nearinv import (
    approx_expand,
    build_shift,
    build_unitary_U,
    calc_hT_g,
    check_nearly_invariant,
    dalpha_decompose,
    detect,
    factorization,
    intertwining_residual,
    minimal_defect,
    reconstruct,
    recover_scalar_inner,
    rqs_operators,
    scaling_matrix,
    series_depth,
    similarity_transport,
    transfer_decompose,
    ts_star_intertwining_residual,
    ts_star_matrix,
    wandering,
)
from nisd.numerics import orthonormalize
from nisd.object.operator import OperatorMatrix, SubspaceBasis
from nisd.object.vector import CoeffFn, HardySpec, random_coeff_fn

KINDS = ["shift", "z2", "blaschke"]


@pytest.fixture(autouse=True)
def make_test_deterministic():
    torch.manual_seed(1234)
    yield


def span(*columns):
    return orthonormalize(torch.stack(columns, dim=1))[0]


def monomials(n, coeffs):
    """Vector of length n with the given {degree: coefficient}."""
    x = torch.zeros(n, dtype=CDTYPE)
    for k, c in coeffs.items():
        x[k] = c
    return x


def test_build_shift():
    S = get_shift("shift", budget=10)
    assert S.multiplicity == 1 and S.isometry
    check_ratio(1.0, S.lower_bound, eps=1e-12)
    check_subspaces(SubspaceBasis.coordinates(12, [0]), S.kernel_basis)
    assert S.gap == 1

    T2 = get_shift("z2", budget=10)
    assert T2.multiplicity == 2 and T2.isometry and T2.gap == 2
    check_subspaces(SubspaceBasis.coordinates(T2.n_ambient, [0, 1]), T2.kernel_basis)

    TB = get_shift("blaschke", budget=10)
    assert TB.multiplicity == 2 and TB.isometry
    # ker T_B^* is the model space
    V = model_space(BlaschkeProduct([0.4, -0.3 + 0.2j]), HardySpec(1, TB.n_ambient - 1)).matrix()
    check_subspaces(orthonormalize(V)[0], TB.kernel_basis, eps=1e-6)


def test_build_shift_vector_valued():
    S = get_shift("shift", budget=6, m=3)
    assert S.multiplicity == 3
    assert S.n_ambient == 3 * 8


def test_build_shift_failures():
    spec = HardySpec(1, 5)
    data = shift_operator(spec).data.clone()
    data[:, 2] = 0
    with pytest.raises(InvalidShift):
        build_shift(OperatorMatrix(data, spec, spec.padded(1)))
    with pytest.raises(InvalidShift):
        build_shift(OperatorMatrix(torch.eye(6, dtype=CDTYPE), spec, spec))
    with pytest.raises(ShapeError):
        build_shift(OperatorMatrix(torch.zeros(12, 6, dtype=CDTYPE), spec, HardySpec(2, 5)))
    with pytest.raises(InvalidInput):
        build_shift(shift_operator(spec), weight=-torch.ones(7))


def test_weighted_shift():
    spec = HardySpec(1, 8)
    weight = (torch.arange(10, dtype=torch.float64) + 1) ** 0.5
    S = build_shift(shift_operator(spec), weight=weight)
    assert not S.isometry
    # ||S z^n|| / ||z^n|| = ((n+2)/(n+1))^(alpha/2)
    check_ratio((10 / 9) ** 0.25, S.lower_bound, eps=1e-12)
    x = torch.randn(10, dtype=CDTYPE)
    check_tensors(x, S.unwhiten(S.whiten(x)), eps=1e-14)

    decreasing = build_shift(shift_operator(spec), weight=1 / weight)
    assert decreasing.lower_bound < 1
    M = SubspaceBasis.coordinates(10, [0, 1])
    F = SubspaceBasis.empty(10)
    with pytest.raises(NotBoundedBelow):
        rqs_operators(M, F, decreasing)


def test_detect_small_cases():
    S = get_shift("shift", budget=8)
    n = S.n_ambient

    # M = span{1 + z, z^2}: the defect is the part of z orthogonal to M
    M = span(monomials(n, {0: 1, 1: 1}), monomials(n, {2: 1}))
    report = detect(M, S)
    assert (report.r, report.p) == (1, 1)
    check_subspaces(span(monomials(n, {0: 1, 1: 1})), report.G0)
    check_subspaces(span(monomials(n, {0: -1, 1: 1})), report.F1)
    assert report.minimality[0] > 0.1

    # span{z} lies in zH^2 and its preimage is span{1}
    M = span(monomials(n, {1: 1}))
    report = detect(M, S)
    assert (report.r, report.p) == (0, 1)
    assert report.contained_in_TH
    check_subspaces(span(monomials(n, {0: 1})), report.F1)

    # span{1, z} is nearly invariant without defect
    M = span(monomials(n, {0: 1}), monomials(n, {1: 1}))
    report = detect(M, S)
    assert (report.r, report.p) == (1, 0)
    assert report.residuals["near_invariance"] < 1e-12
    assert report.minimality == []


def test_check_nearly_invariant():
    S = get_shift("shift", budget=8)
    n = S.n_ambient
    M = span(monomials(n, {1: 1}))
    ok, residual = check_nearly_invariant(M, SubspaceBasis.empty(n), S)
    assert not ok
    check_ratio(1.0, residual, eps=1e-12)
    ok, residual = check_nearly_invariant(M, span(monomials(n, {0: 1})), S)
    assert ok and residual < 1e-12


def test_inconclusive_at_budget():
    S = get_shift("shift", budget=8)
    n = S.n_ambient
    # z^8 is the top ambient degree, outside the domain of T
    M = span(monomials(n, {n - 1: 1}))
    with pytest.raises(InconclusiveAtBudget):
        minimal_defect(M, S)


def test_example():
    for budget in [32, 64]:
        problem = get_example_task(budget=budget)
        shift, M = problem.shift, problem.M
        report = detect(M, shift)
        assert (report.r, report.p) == (2, 1)

        t = taylor(BlaschkeProduct([0.5]), shift.ambient.degree).coeffs[:, 0]
        n = shift.n_ambient

        def times_z(k):
            x = torch.zeros(n, dtype=CDTYPE)
            x[k:] = t[: n - k]
            return x

        check_subspaces(span(times_z(0), times_z(1)), report.G0)
        check_subspaces(span(times_z(4)), report.F1)
        # G0 comes out in the order of the generators
        check_subspaces(span(times_z(0)), SubspaceBasis(report.G0.data[:, :1]))
        assert report.minimality[0] > 1e-3


def test_example_decomposition():
    problem = get_example_task()
    shift = problem.shift
    report = detect(problem.M, shift)
    result = transfer_decompose(problem.M, report.F1, shift, functions=problem.generators)
    assert result.case == "i"
    assert result.K.dim == 19
    assert result.invariance_residual < 1e-10
    steps = shift.ambient.degree + 1
    n = HardySpec(3, steps).dim
    # K = span{(1,0,0), (z,0,0), (0,z^k,0) for k <= 2, (0,0,z^j) for j <= 13}
    indices = [0, 3] + [3 * k + 1 for k in range(3)] + [3 * j + 2 for j in range(14)]
    expected = SubspaceBasis.coordinates(n, indices)
    check_subspaces(expected, result.K, eps=1e-7)
    for pair in result.pairs:
        assert pair.isometry_defect < 1e-10


@pytest.mark.parametrize("kind", KINDS)
def test_planted_transfer(kind):
    shift = get_shift(kind)
    generator = torch.Generator().manual_seed(0)
    for _ in range(7):
        M = planted_subspace(shift, dim=3, depth=4, generator=generator)
        G0, r = wandering(M, shift)
        F, p = minimal_defect(M, shift)
        assert r == min(3, shift.multiplicity)
        assert p == 3 - r
        result = transfer_decompose(M, F, shift)
        for pair in result.pairs:
            assert pair.isometry_defect <= 1e-10
        assert result.invariance_residual <= 1e-10


def test_transfer_series_length():
    # K0 and K1 are rational in general: the expansion runs past the ambient
    # budget until R^k f is negligible
    shift = get_shift("shift")
    generator = torch.Generator().manual_seed(6)
    M = planted_subspace(shift, dim=3, depth=4, generator=generator)
    F, _ = minimal_defect(M, shift)
    full = transfer_decompose(M, F, shift)
    assert full.steps >= shift.ambient.degree + 1
    assert full.remainder <= 1e-12
    assert full.invariance_residual <= 1e-10
    with pytest.raises(InvalidInput):
        transfer_decompose(M, F, shift, steps=1)


def test_leakage_within_model_tail():
    shift = get_shift("blaschke")
    generator = torch.Generator().manual_seed(0)
    for _ in range(3):
        M = planted_subspace(shift, dim=3, depth=4, generator=generator)
        report = detect(M, shift)
        assert (report.r, report.p) == (2, 1)
        residuals = report.residuals
        assert residuals["leakage"] <= 1e-8 + residuals["leakage_allowed"]


@pytest.mark.parametrize("kind", KINDS)
def test_expansion_identity(kind):
    shift = get_shift(kind)
    generator = torch.Generator().manual_seed(1)
    M = planted_subspace(shift, dim=3, depth=4, generator=generator)
    F, _ = minimal_defect(M, shift)
    ops = rqs_operators(M, F, shift)
    assert ops.R.norm() <= 1 + 1e-12
    for _ in range(34):
        h = M.data @ torch.randn(3, dtype=CDTYPE, generator=generator)
        rec = approx_expand(h, ops, shift, 50, tol=1e-12)
        nh = torch.linalg.vector_norm(h).item()
        assert len(rec.identity_residuals) == 51
        assert max(rec.identity_residuals) <= 1e-12 * nh
        assert rec.bessel_sum <= nh**2 + 1e-12
    with pytest.raises(InvalidInput):
        approx_expand(torch.randn(shift.n_ambient, dtype=CDTYPE), ops, shift, 5)
    with pytest.raises(ShapeError):
        approx_expand(torch.ones(3, dtype=CDTYPE), ops, shift, 5)


@pytest.mark.parametrize("kind,radius", [("shift", 0.9), ("z2", 0.9**0.5), ("blaschke", 0.5)])
def test_factorization_pointwise(kind, radius):
    shift = get_shift(kind)
    u = MULTIPLIERS[kind]
    generator = torch.Generator().manual_seed(2)
    M = planted_subspace(shift, dim=3, depth=4, generator=generator)
    F, _ = minimal_defect(M, shift)
    G0, r = wandering(M, shift)
    ops = rqs_operators(M, F, shift)
    points = radius * torch.exp(2j * math.pi * torch.arange(16, dtype=torch.float64) / 16)
    for i in range(M.dim):
        rec = factorization(M.data[:, i], ops, shift, G0, F, depth=50, u=u, points=points)
        assert rec.series_budget == 50
        assert len(rec.pointwise) == 16
        for w, err, bound in rec.pointwise:
            assert abs(u(w)) <= 0.9 + 1e-12
            assert err <= bound
        assert rec.bessel_sum <= rec.h_norm**2 + 1e-10
    with pytest.raises(DomainError):
        factorization(M.data[:, 0], ops, shift, G0, F, u=u, points=[1.0])
    with pytest.raises(InvalidInput):
        factorization(M.data[:, 0], ops, shift, G0, F, points=points)


def test_series_depth():
    assert series_depth(0.0) == 1
    assert series_depth(0.5) == 40
    assert series_depth(0.9999, cap=100) == 100


@pytest.mark.parametrize("kind", KINDS)
def test_unitary_U(kind):
    shift = get_shift(kind, budget=48 if kind == "blaschke" else 24)
    U = build_unitary_U(shift)
    assert U.codomain.m == shift.multiplicity
    assert intertwining_residual(shift, U) <= 1e-10
    generator = torch.Generator().manual_seed(3)
    Y = shift_powers(shift, 3)
    for _ in range(5):
        g = Y @ torch.randn(Y.size(1), dtype=CDTYPE, generator=generator)
        h = random_coeff_fn(HardySpec(1, 8), generator=generator)
        explicit = torch.zeros(shift.n_ambient, dtype=CDTYPE)
        power = g
        for k in range(9):
            explicit = explicit + h.coeffs[k, 0] * power
            power = shift.apply(power)
        assert torch.linalg.vector_norm(calc_hT_g(h, g, shift, U) - explicit).item() <= 1e-10 * max(
            1.0, torch.linalg.vector_norm(explicit).item()
        )
    with pytest.raises(BudgetError):
        build_unitary_U(shift, budget=10 * shift.n_ambient)
    with pytest.raises(ShapeError):
        calc_hT_g(random_coeff_fn(HardySpec(2, 3)), g, shift, U)


def test_unitary_U_needs_isometry():
    spec = HardySpec(1, 8)
    weight = (torch.arange(10, dtype=torch.float64) + 1) ** 0.5
    with pytest.raises(InvalidShift):
        build_unitary_U(build_shift(shift_operator(spec), weight=weight))


@pytest.mark.parametrize("kind", KINDS)
def test_reconstruct(kind):
    shift = get_shift(kind)
    generator = torch.Generator().manual_seed(4)
    for _ in range(4):
        M = planted_subspace(shift, dim=3, depth=3, generator=generator)
        F, _ = minimal_defect(M, shift)
        result = transfer_decompose(M, F, shift)
        for i, pair in enumerate(result.pairs):
            rebuilt = reconstruct(pair, result.G0, result.F1, shift, result.U)
            assert torch.linalg.vector_norm(rebuilt - M.data[:, i]).item() <= 1e-9


@pytest.mark.parametrize("kind", KINDS)
def test_similarity_transport(kind):
    T1 = get_shift(kind)
    n_L, n_D = T1.n_ambient, T1.n_domain
    generator = torch.Generator().manual_seed(5)
    for _ in range(4 if kind == "blaschke" else 10):
        M = planted_subspace(T1, dim=3, depth=4, generator=generator)
        F, p = minimal_defect(M, T1)
        V = random_similarity(n_L, generator=generator)
        data = V @ T1.operator.data @ torch.linalg.inv(V[:n_D, :n_D])
        T2 = build_shift(OperatorMatrix(data, T1.operator.domain, T1.ambient))
        VM, Fp, report = similarity_transport(M, F, OperatorMatrix(V, T1.ambient, T1.ambient), T1, T2)
        assert Fp.dim == p
        assert report["p_rederived"] == p
        assert VM.dim == M.dim
        report2 = detect(VM, T2)
        assert report2.p == p


def test_similarity_transport_failures():
    T1 = get_shift("shift")
    n_L, n_D = T1.n_ambient, T1.n_domain
    M = span(monomials(n_L, {1: 1}))
    F = span(monomials(n_L, {0: 1}))
    V = torch.eye(n_L, dtype=CDTYPE)
    V[n_D, 0] = 1.0
    with pytest.raises(NotSimilar):
        similarity_transport(M, F, OperatorMatrix(V, T1.ambient, T1.ambient), T1, T1)
    V = torch.eye(n_L, dtype=CDTYPE)
    V[3, 3] = 0.0
    with pytest.raises(NotSimilar):
        similarity_transport(M, F, OperatorMatrix(V, T1.ambient, T1.ambient), T1, T1)
    # a diagonal V that does not commute with S
    V = torch.diag(torch.arange(1, n_L + 1, dtype=torch.float64).to(CDTYPE))
    with pytest.raises(NotSimilar):
        similarity_transport(M, F, OperatorMatrix(V, T1.ambient, T1.ambient), T1, T1)


def test_recover_scalar_inner():
    for _ in range(10):
        d = int(torch.randint(1, 5, (1,)).item())
        r = 0.6 * torch.rand(d, dtype=torch.float64)
        theta = 2 * math.pi * torch.rand(d, dtype=torch.float64)
        zeros = [complex(r[i] * math.cos(theta[i]), r[i] * math.sin(theta[i])) for i in range(d)]
        B = BlaschkeProduct(zeros)
        spec = HardySpec(1, 120)
        K = SubspaceBasis(model_space(B, spec).matrix(), spec=spec)
        found = recover_scalar_inner(K)
        assert matched_roots(found.zeros, zeros, eps=1e-8)


def test_recover_scalar_inner_failures():
    spec = HardySpec(1, 20)
    with pytest.raises(NotModelSpace):
        recover_scalar_inner(SubspaceBasis.coordinates(21, [1], spec=spec))
    with pytest.raises(InvalidInput):
        recover_scalar_inner(SubspaceBasis.empty(21, spec=spec))
    # span{1, z} is the model space of z^2
    found = recover_scalar_inner(SubspaceBasis.coordinates(21, [0, 1], spec=spec))
    assert matched_roots(found.zeros, [0j, 0j], eps=1e-8)


def test_ts_star():
    B = BlaschkeProduct([0.5])
    spec = HardySpec(1, 20)
    assert ts_star_intertwining_residual(B, 0.6, spec) <= 1e-8
    B2 = BlaschkeProduct([0.3, -0.2 + 0.4j])
    assert ts_star_intertwining_residual(B2, 0.6, HardySpec(2, 12)) <= 1e-8
    Ts = ts_star_matrix(B, 0.6, spec).data
    # co-analytic symbol: upper triangular
    assert torch.linalg.matrix_norm(torch.tril(Ts, -1)).item() < 1e-12
    check_tensors(
        torch.tensor([0.6**n for n in range(21)], dtype=CDTYPE),
        torch.diagonal(scaling_matrix(0.6, spec)),
        eps=1e-14,
    )
    with pytest.raises(DomainError):
        ts_star_matrix(B, 0.4, spec)
    with pytest.raises(DomainError):
        ts_star_matrix(B, 1.0, spec)


def test_dalpha_plant():
    problem = get_dalpha_plant_task(alpha=-1.0)
    result = dalpha_decompose(problem.generators, problem.blaschke, -1.0)
    assert (result.report.r, result.report.p) == (1, 1)
    assert result.certificate is not None
    assert result.certificate.ratio < 0.99
    check_ratio(result.certificate.gamma1, result.gamma, eps=1e-14)
    for term in result.terms:
        assert term.bound_check["holds"]
        assert term.q is not None and term.h is not None
    assert result.ts_invariance["dim"] >= 1
    # whitened coordinates round trip
    x = torch.randn(result.shift.n_ambient, dtype=CDTYPE)
    check_tensors(x, result.shift.unwhiten(result.shift.whiten(x)), eps=1e-14)


def test_dalpha_positive_alpha():
    B = BlaschkeProduct([0, 0])
    fspec = HardySpec(1, 16)
    gens = torch.stack(
        [
            CoeffFn.monomial(fspec, 0).coeffs[:, 0] + CoeffFn.monomial(fspec, 1).coeffs[:, 0],
            CoeffFn.monomial(fspec, 4).coeffs[:, 0],
            CoeffFn.monomial(fspec, 5).coeffs[:, 0],
        ],
        dim=1,
    )
    result = dalpha_decompose(gens, B, 1.0)
    assert result.certificate is None and result.ts_invariance is None
    for term in result.terms:
        assert term.bound_check["holds"]
        assert term.bound_check["lhs"] <= term.norm_f + 1e-10


def test_dalpha_zero_matches_hardy():
    # alpha = 0 and B = z reduce to the Hardy space and the shift
    fspec = HardySpec(1, 16)
    gens = torch.stack(
        [CoeffFn.monomial(fspec, 1).coeffs[:, 0], CoeffFn.monomial(fspec, 3).coeffs[:, 0]], dim=1
    )
    result = dalpha_decompose(gens, BlaschkeProduct([0]), 0.0)
    S = get_shift("shift", budget=16)
    M = orthonormalize(torch.cat([gens, torch.zeros(S.n_ambient - 17, 2, dtype=CDTYPE)]))[0]
    report = detect(M, S)
    assert (result.report.r, result.report.p) == (report.r, report.p) == (0, 2)
    for term in result.terms:
        assert term.q is None
        assert term.bound_check["holds"]


def test_dalpha_domain():
    with pytest.raises(DomainError):
        dalpha_decompose(torch.ones(5, 1, dtype=CDTYPE), BlaschkeProduct([0.5]), 2.0)
