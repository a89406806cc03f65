import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wellposed import fixtures
from wellposed.errors import DimensionError, SchemaError, SpecIOError
from wellposed.model import (CoefficientFunction, GridFunction, SystemSpec, dumps_spec, emit_spec,
                             energy_norm, load_spec, parse_spec, spec_to_dict, validate)


def test_bundled_viscous_beam_matches_builder():
    spec = fixtures.load_fixture("beam_viscous")
    assert spec == fixtures.beam_viscous()
    assert (spec.n, spec.m) == (2, 1)
    np.testing.assert_array_equal(spec.P2, [[0, -1], [1, 0]])


def test_bundled_elastic_beam_matches_builder():
    spec = fixtures.load_fixture("beam_elastic")
    assert spec == fixtures.beam_elastic()
    assert (spec.n, spec.m) == (3, 1)
    assert spec.P2[2, 2] == 1j


@pytest.mark.parametrize("name", sorted(fixtures.BUILDERS))
def test_every_bundled_file_is_current(name):
    assert fixtures.load_fixture(name) == fixtures.BUILDERS[name]()


def test_wrong_width_is_dimension_error():
    d = spec_to_dict(fixtures.beam_viscous())
    d["WB1"] = [[0.0] * 7]
    with pytest.raises(DimensionError):
        parse_spec(json.dumps(d))


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("WC"),
    lambda d: d.update(extra=1),
    lambda d: d["P0"].update(degree=2),
    lambda d: d.update(n="2"),
])
def test_schema_errors(mutate):
    d = spec_to_dict(fixtures.beam_viscous())
    mutate(d)
    with pytest.raises(SchemaError):
        parse_spec(json.dumps(d))


def test_not_json_is_schema_error():
    with pytest.raises(SchemaError):
        parse_spec("{not json")


def test_complex_entries_and_plain_numbers():
    d = spec_to_dict(fixtures.schrodinger_derivative())
    d["P2"] = [[[0, 1]]]
    spec = parse_spec(d)
    assert spec.P2[0, 0] == 1j
    d["P1"] = [[2]]
    assert parse_spec(d).P1[0, 0] == 2


def test_malformed_entry_rejected():
    d = spec_to_dict(fixtures.schrodinger_derivative())
    d["P2"] = [[[0, 1, 2]]]
    with pytest.raises(SchemaError):
        parse_spec(d)


def test_empty_wb2_parses_to_zero_rows():
    spec = parse_spec(dumps_spec(fixtures.schrodinger_derivative()))
    assert spec.WB2.shape == (0, 4)


def test_m_out_of_range():
    d = spec_to_dict(fixtures.schrodinger_derivative())
    d["m"] = 3
    with pytest.raises(DimensionError):
        parse_spec(d)


def test_round_trip_elastic(tmp_path):
    path = tmp_path / "beam.spec"
    emit_spec(fixtures.beam_elastic(), path)
    assert load_spec(path) == fixtures.beam_elastic()


def test_round_trip_polynomial_and_piecewise(tmp_path):
    H = CoefficientFunction("piecewise-constant", [np.eye(2), 2 * np.eye(2)], [0.3])
    P0 = CoefficientFunction("polynomial", [np.zeros((2, 2)), np.array([[0, 1], [-1, 0]]) * 0.1 + 0j])
    spec = fixtures.beam_viscous().replace(H=H, P0=P0)
    path = tmp_path / "x.spec"
    emit_spec(spec, path)
    assert load_spec(path) == spec


@settings(max_examples=30, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False),
                min_size=4, max_size=4))
def test_round_trip_arbitrary_complex_entries(vals):
    WC = np.array([vals, vals[::-1]])
    spec = fixtures.schrodinger_derivative().replace(WC=WC)
    assert parse_spec(dumps_spec(spec)) == spec


def test_emit_to_unwritable_path(tmp_path):
    with pytest.raises(SpecIOError):
        emit_spec(fixtures.beam_viscous(), tmp_path / "missing-dir" / "x.spec")


def test_load_missing_file(tmp_path):
    with pytest.raises(SpecIOError):
        load_spec(tmp_path / "nope.spec")


def test_coefficient_evaluation():
    p = CoefficientFunction("polynomial", [np.eye(1), 2 * np.eye(1), 3 * np.eye(1)])
    assert p(0.5)[0, 0] == pytest.approx(1 + 1 + 0.75)
    pc = CoefficientFunction("piecewise-constant", [np.eye(1), 5 * np.eye(1)], [0.5])
    assert pc(0.49)[0, 0] == 1 and pc(0.5)[0, 0] == 5 and pc(1.0)[0, 0] == 5
    with pytest.raises(ValueError):
        pc(1.5)


def test_breakpoints_must_increase():
    with pytest.raises(SchemaError):
        CoefficientFunction("piecewise-constant", [np.eye(1)] * 3, [0.6, 0.4])
    with pytest.raises(SchemaError):
        CoefficientFunction("piecewise-constant", [np.eye(1)] * 2, [1.0])


# validation

def test_viscous_beam_passes_with_skew_p0():
    rep = validate(fixtures.beam_viscous(gamma=0.0))
    assert rep.ok and rep.p0_skew


def test_damped_beam_p0_not_skew():
    rep = validate(fixtures.beam_viscous(gamma=0.5))
    assert rep.ok and not rep.p0_skew


def test_p2_identity_fails_skew_with_defect_two():
    spec = fixtures.schrodinger_derivative().replace(P2=np.eye(1))
    rep = validate(spec)
    assert not rep.ok
    assert not rep["P2 skew-adjoint"].passed
    assert rep["P2 skew-adjoint"].defect == pytest.approx(2.0)


def test_elastic_beam_passes_but_p0_not_skew():
    rep = validate(fixtures.beam_elastic())
    assert rep.ok
    assert not rep.p0_skew


def test_indefinite_h_and_dependent_rows_fail():
    spec = fixtures.schrodinger_derivative()
    bad_H = spec.replace(H=CoefficientFunction("polynomial", [np.eye(1), -2 * np.eye(1)]))
    assert not validate(bad_H)["H coercive"].passed
    dup = spec.replace(WC=spec.WB1)
    assert not validate(dup)["W full row rank"].passed


def test_piecewise_h_warns():
    H = CoefficientFunction("piecewise-constant", [np.eye(1), 2 * np.eye(1)], [0.5])
    rep = validate(fixtures.schrodinger_derivative().replace(H=H))
    assert rep.ok and rep.warnings


def test_validate_is_deterministic():
    spec = fixtures.beam_elastic()
    assert validate(spec).render() == validate(spec).render()


# energy norm

def test_energy_norm_zero_and_constant():
    H2 = CoefficientFunction.constant(2 * np.eye(1))
    assert energy_norm(GridFunction(np.zeros(11)), H2) == 0.0
    assert energy_norm(GridFunction(np.ones(11)), H2) == pytest.approx(1.0, abs=1e-14)


def test_energy_norm_second_order():
    H = CoefficientFunction.constant(np.eye(1))
    exact = np.sqrt(1 / 6)
    errs = [abs(energy_norm(GridFunction.from_callable(lambda z: z, N), H) - exact) for N in (21, 41, 81)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(orders, 2.0, atol=0.1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_energy_norm_equivalence_bounds(seed):
    rng = np.random.default_rng(seed)
    H = CoefficientFunction("polynomial", [np.diag([1.0, 3.0]), np.array([[0.5, 0.2], [0.2, 0.0]])])
    rep = validate(fixtures.beam_viscous().replace(H=H))
    f = GridFunction(rng.standard_normal((17, 2)) + 1j * rng.standard_normal((17, 2)))
    w = np.full(17, 1 / 16)
    w[[0, -1]] /= 2
    plain = np.sqrt(w @ np.sum(np.abs(f.values) ** 2, axis=1))
    e = energy_norm(f, H)
    assert np.sqrt(rep.H_min_eig / 2) * plain * (1 - 1e-12) <= e <= np.sqrt(rep.H_max_eig / 2) * plain * (1 + 1e-12)
