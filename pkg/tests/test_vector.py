import pytest
import torch
from utils import check_ratio, check_tensors

from nisd.errors import InvalidInput, ShapeError
from nisd.maths import CDTYPE
from nisd.object.operator import OperatorMatrix, SubspaceBasis
from nisd.object.vector import CoeffFn, HardySpec, random_coeff_fn


@pytest.fixture(autouse=True)
def make_test_deterministic():
    torch.manual_seed(1234)
    yield


def test_hardy_spec():
    spec = HardySpec(3, 4)
    assert spec.dim == 15
    assert spec.padded(2) == HardySpec(3, 6)
    with pytest.raises(ShapeError):
        HardySpec(0, 4)
    with pytest.raises(ShapeError):
        HardySpec(1, -1)
    # constants alone are not a Hardy space budget
    with pytest.raises(ShapeError):
        HardySpec(2, 0)


def test_coeff_fn_checks():
    spec = HardySpec(2, 3)
    with pytest.raises(ShapeError):
        CoeffFn(spec, torch.zeros(3, 2))
    bad = torch.zeros(4, 2, dtype=CDTYPE)
    bad[1, 0] = float("nan")
    with pytest.raises(InvalidInput):
        CoeffFn(spec, bad)
    with pytest.raises(InvalidInput):
        CoeffFn(spec, torch.zeros(4, 2), tail_bound=-1.0)
    # 1d coefficients are accepted for scalar functions
    f = CoeffFn(HardySpec(1, 2), torch.tensor([1.0, 2.0, 3.0]))
    assert f.coeffs.shape == (3, 1)


def test_coeff_fn_flat_layout():
    spec = HardySpec(2, 2)
    flat = torch.arange(6, dtype=torch.float64)
    f = CoeffFn.from_flat(spec, flat)
    # interleaved by degree: A_0 = (0, 1), A_1 = (2, 3), ...
    assert torch.equal(f.coeffs[1], torch.tensor([2.0, 3.0], dtype=CDTYPE))
    check_tensors(flat.to(CDTYPE), f.get_flat_representation())

    short = CoeffFn.from_flat(spec, torch.ones(2))
    assert short.coeffs[1:].abs().sum() == 0
    with pytest.raises(ShapeError):
        CoeffFn.from_flat(spec, torch.ones(7))


def test_coeff_fn_arithmetic():
    spec = HardySpec(2, 5)
    f = random_coeff_fn(spec)
    g = random_coeff_fn(spec)
    check_tensors((f + g).coeffs, f.coeffs + g.coeffs, eps=1e-14)
    check_tensors((f - g).coeffs, f.coeffs - g.coeffs, eps=1e-14)
    check_tensors((2j * f).coeffs, 2j * f.coeffs, eps=1e-14)
    check_ratio(f.norm(), (-f).norm())
    with pytest.raises(ShapeError):
        f + random_coeff_fn(HardySpec(2, 4))


def test_resize_tracks_the_tail():
    spec = HardySpec(1, 5)
    f = CoeffFn(spec, torch.tensor([1.0, 0, 0, 0, 3.0, 4.0]))
    g = f.resize(3)
    assert g.spec == HardySpec(1, 3)
    check_ratio(5.0, g.tail_bound, eps=1e-14)
    h = f.resize(8)
    assert h.tail_bound == 0
    check_ratio(f.norm(), h.norm(), eps=1e-14)


def test_random_coeff_fn_degree():
    generator = torch.Generator().manual_seed(0)
    f = random_coeff_fn(HardySpec(3, 10), degree=4, generator=generator)
    assert f.coeffs[5:].abs().sum() == 0
    assert (f.coeffs[:5].abs() > 0).all()
    generator = torch.Generator().manual_seed(0)
    g = random_coeff_fn(HardySpec(3, 10), degree=4, generator=generator)
    assert torch.equal(f.coeffs, g.coeffs)


def test_operator_matrix():
    domain, codomain = HardySpec(1, 2), HardySpec(1, 3)
    with pytest.raises(ShapeError):
        OperatorMatrix(torch.zeros(3, 3), domain, codomain)
    A = torch.randn(4, 3, dtype=CDTYPE)
    op = OperatorMatrix(A, domain, codomain)
    f = random_coeff_fn(domain)
    check_tensors(A @ f.get_flat_representation(), op.mv(f).get_flat_representation())
    check_ratio(torch.linalg.matrix_norm(A, ord=2).item(), op.norm())

    pinv = op.compute_pseudo_inverse()
    check_tensors(torch.eye(3, dtype=CDTYPE), pinv @ A, eps=1e-10)
    assert op.svals.shape == (3,)

    adj = op.adjoint()
    assert adj.domain == codomain and adj.codomain == domain
    check_tensors(A.conj().transpose(0, 1), adj.data)

    prod = adj @ op
    assert prod.domain == domain and prod.codomain == domain
    with pytest.raises(ShapeError):
        op @ op

    small = op.restrict(HardySpec(1, 1))
    assert small.size() == (4, 2)
    with pytest.raises(ShapeError):
        op.restrict(HardySpec(1, 3))


def test_subspace_basis():
    spec = HardySpec(1, 4)
    E = SubspaceBasis.coordinates(5, [0, 2], spec=spec)
    assert E.dim == 2 and E.ambient_dim == 5
    x = torch.arange(5, dtype=torch.float64).to(CDTYPE)
    assert torch.equal(E.project(x), torch.tensor([0, 0, 2.0, 0, 0], dtype=CDTYPE))
    check_tensors(E.projector() @ E.projector(), E.projector())

    fs = E.functions()
    assert len(fs) == 2 and fs[1].coeffs[2, 0] == 1

    empty = SubspaceBasis.empty(5)
    assert empty.dim == 0
    with pytest.raises(ShapeError):
        empty.functions()
    with pytest.raises(ShapeError):
        SubspaceBasis(torch.zeros(4, 2), spec=spec)
