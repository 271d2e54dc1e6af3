import json

import pytest
import torch
from tasks import dalpha_spec, example_spec, get_dalpha_plant_task, get_example_task
from utils import check_tensors

from nisd.blaschke import BlaschkeProduct, taylor_budget
from nisd.errors import BudgetError, SpecError
from nisd.maths import CDTYPE
from nisd.problem import (
    DEFAULT_TOLERANCES,
    ProblemSpec,
    build_problem,
    encode_tensor,
    expand_monomials,
    parse_complex,
)


def shift_spec(generators, budget=8, m=1, **kwargs):
    d = {
        "space": {"kind": "hardy", "m": m, "budget": budget},
        "operator": {"kind": "shift"},
        "subspace": {"generators": generators},
    }
    d.update(kwargs)
    return d


@pytest.fixture(autouse=True)
def make_test_deterministic():
    torch.manual_seed(1234)


def test_parse_complex():
    assert parse_complex(2) == 2 + 0j
    assert parse_complex(0.5) == 0.5 + 0j
    assert parse_complex([0.5, -1]) == 0.5 - 1j
    for bad in ["1+2j", [1, 2, 3], None]:
        with pytest.raises(SpecError):
            parse_complex(bad)


def test_encode_tensor():
    t = torch.tensor([[1 + 2j, 0], [0, -1j]], dtype=CDTYPE)
    assert encode_tensor(t) == [[[1.0, 2.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, -1.0]]]


def test_expand_monomials():
    assert expand_monomials([0, 2, 6, 8, "..."], 14) == [0, 2, 6, 8, 10, 12, 14]
    assert expand_monomials([0, 2, 6, 8, "..."], 9) == [0, 2, 6, 8]
    assert expand_monomials([3, 1], 4) == [3, 1]

    for entries in [[], ["..."], [1, "..."], [3, 1, "..."]]:
        with pytest.raises(SpecError):
            expand_monomials(entries, 10)
    with pytest.raises(SpecError):
        expand_monomials([0, 11], 10)
    with pytest.raises(SpecError):
        expand_monomials([-1], 10)


def test_from_dict_defaults():
    spec = ProblemSpec.from_dict(shift_spec([{"monomials": [1]}]))
    assert spec.seed == 0
    assert spec.tolerances == DEFAULT_TOLERANCES
    assert spec.budget == 8
    assert spec.m == 1
    assert spec.rank_tol.relative == DEFAULT_TOLERANCES["rank"]

    spec = ProblemSpec.from_dict(shift_spec([{"monomials": [1]}], tolerances={"check": 1e-6}))
    assert spec.tolerances["check"] == 1e-6
    assert spec.tolerances["rank"] == DEFAULT_TOLERANCES["rank"]

    d = dalpha_spec(-0.5, [[0.5, 0]], [{"monomials": [0]}])
    assert ProblemSpec.from_dict(d).m == 1


@pytest.mark.parametrize(
    "patch",
    [
        {"unknown": 1},
        {"schema_version": 2},
        {"tolerances": {"rank": 0}},
        {"tolerances": {"rank": "small"}},
        {"space": {"kind": "bergman", "budget": 8}},
        {"space": {"kind": "hardy", "budget": 0}},
        {"space": {"kind": "hardy", "budget": 8.5}},
        {"space": {"kind": "hardy", "m": 0, "budget": 8}},
        {"operator": {"kind": "toeplitz"}},
        {"operator": {"kind": "matrix", "file": "missing.json"}},
        {"subspace": {"generators": []}},
        {"subspace": {}},
    ],
)
def test_from_dict_rejects(patch):
    d = shift_spec([{"monomials": [1]}])
    d.update(patch)
    with pytest.raises(SpecError):
        ProblemSpec.from_dict(d)


def test_from_dict_rejects_missing_and_dalpha():
    d = shift_spec([{"monomials": [1]}])
    del d["operator"]
    with pytest.raises(SpecError):
        ProblemSpec.from_dict(d)
    with pytest.raises(SpecError):
        ProblemSpec.from_dict([1, 2])

    with pytest.raises(SpecError):
        ProblemSpec.from_dict(dalpha_spec(-1.5, [[0.5, 0]], [{"monomials": [0]}]))
    d = dalpha_spec(-0.5, [[0.5, 0]], [{"monomials": [0]}])
    d["operator"] = {"kind": "shift"}
    with pytest.raises(SpecError):
        ProblemSpec.from_dict(d)


def test_load(tmp_path):
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(example_spec()))
    spec = ProblemSpec.load(str(path))
    assert spec.base_dir == str(tmp_path)
    assert spec.budget == 32

    with pytest.raises(SpecError):
        ProblemSpec.load(str(tmp_path / "nothing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{\"space\": ")
    with pytest.raises(SpecError):
        ProblemSpec.load(str(bad))


def test_overrides_and_to_dict():
    spec = ProblemSpec.from_dict(example_spec())
    other = spec.with_overrides(budget=64, tol=1e-8, seed=3)
    assert other.budget == 64
    assert other.rank_tol.relative == 1e-8
    assert other.seed == 3
    # the original is untouched
    assert spec.budget == 32
    assert spec.tolerances["rank"] == DEFAULT_TOLERANCES["rank"]
    assert spec.seed == 0
    assert spec.with_overrides() == spec

    with pytest.raises(SpecError):
        spec.with_overrides(budget=0)

    d = spec.to_dict()
    json.dumps(d)
    assert ProblemSpec.from_dict(d) == spec


def test_example_problem():
    problem = get_example_task()
    pad = taylor_budget(BlaschkeProduct([0.5]))
    assert problem.generators.size(1) == 19
    assert problem.M.dim == 19
    assert problem.F is None and problem.defect is None
    assert problem.shift.multiplicity == 2
    assert problem.function_spec.degree == 32 + pad + 2
    assert problem.blaschke.degree == 2


def test_monomial_columns():
    problem = build_problem(
        ProblemSpec.from_dict(shift_spec([{"monomials": [0, 3]}, {"monomials": [1], "component": 1}], m=2))
    )
    amb = problem.shift.ambient
    assert amb.m == 2
    expected = torch.zeros(amb.dim, 3, dtype=CDTYPE)
    expected[0, 0] = 1
    expected[6, 1] = 1
    expected[3, 2] = 1
    check_tensors(expected, problem.generators)

    with pytest.raises(SpecError):
        build_problem(ProblemSpec.from_dict(shift_spec([{"monomials": [0], "component": 2}], m=2)))


def test_coeff_columns_and_defect_hint():
    spec = shift_spec(
        [{"coeffs": [1, [0, 1]]}, {"monomials": [2]}],
        defect_hint=[{"monomials": [1]}, {"coeffs": [1]}],
    )
    problem = build_problem(ProblemSpec.from_dict(spec))
    check_tensors(torch.tensor([1, 1j], dtype=CDTYPE), problem.generators[:2, 0])
    assert problem.defect.size(1) == 2
    # z projected off span{1 + iz, z^2} and 1 projected off the same
    # subspace span one direction together
    assert problem.F.dim == 1
    check_tensors(torch.zeros(problem.M.dim, 1, dtype=CDTYPE), problem.M.data.conj().T @ problem.F.data)


def test_generator_errors():
    for gen in [{"coeffs": [0, 0]}, {"unknown": [0]}, [0, 1], {"coeffs": [1] * 100}]:
        with pytest.raises(SpecError):
            build_problem(ProblemSpec.from_dict(shift_spec([gen])))
    with pytest.raises(SpecError):
        build_problem(ProblemSpec.from_dict(shift_spec([{"random": 1, "degree": 9}])))


def test_random_generators_follow_seed():
    def gens(seed):
        spec = shift_spec([{"random": 2, "degree": 4}], seed=seed)
        return build_problem(ProblemSpec.from_dict(spec)).generators

    a, b, c = gens(7), gens(7), gens(8)
    assert a.size(1) == 2
    check_tensors(a, b)
    assert torch.linalg.vector_norm(a - c) > 1e-3
    assert torch.linalg.vector_norm(a[5:]) == 0


def test_shift_powers():
    problem = build_problem(ProblemSpec.from_dict(shift_spec([{"powers": [0, 2, 5]}], budget=4)))
    expected = torch.zeros(problem.shift.n_ambient, 3, dtype=CDTYPE)
    expected[0, 0] = 1
    expected[2, 1] = 1
    expected[5, 2] = 1
    check_tensors(expected, problem.generators)

    with pytest.raises(BudgetError):
        build_problem(ProblemSpec.from_dict(shift_spec([{"powers": [6]}], budget=4)))
    with pytest.raises(SpecError):
        build_problem(ProblemSpec.from_dict(shift_spec([{"powers": [1], "kernel": 1}], budget=4)))


def test_blaschke_powers():
    problem = get_dalpha_plant_task()
    assert problem.M is None and problem.shift is None
    assert problem.function_spec.degree == 64
    G = problem.generators
    assert G.size(1) == 4
    # multiplication by an inner function is an isometry of H^2
    check_tensors(torch.ones(4, dtype=torch.float64), torch.linalg.vector_norm(G, dim=0))

    spec = dalpha_spec(-1.0, [[0.9, 0]], [{"powers": [10]}], budget=8)
    with pytest.raises(BudgetError):
        build_problem(ProblemSpec.from_dict(spec))
    spec = dalpha_spec(-1.0, [[0.5, 0]], [{"powers": [0], "kernel": 1}])
    with pytest.raises(SpecError):
        build_problem(ProblemSpec.from_dict(spec))


def test_matrix_operator(tmp_path):
    n = 5
    data = [[1 if i == j + 1 else 0 for j in range(n)] for i in range(n + 1)]
    (tmp_path / "shift.json").write_text(
        json.dumps({"m": 1, "domain_budget": n - 1, "codomain_budget": n, "data": data})
    )
    d = shift_spec([{"monomials": [1, 2]}], budget=4)
    d["operator"] = {"kind": "matrix", "file": "shift.json"}
    (tmp_path / "problem.json").write_text(json.dumps(d))
    problem = build_problem(ProblemSpec.load(str(tmp_path / "problem.json")))
    assert problem.shift.multiplicity == 1
    assert problem.shift.isometry
    assert problem.M.dim == 2
    assert problem.blaschke is None

    (tmp_path / "shift.json").write_text(json.dumps({"m": 1, "data": data}))
    with pytest.raises(SpecError):
        build_problem(ProblemSpec.load(str(tmp_path / "problem.json")))
