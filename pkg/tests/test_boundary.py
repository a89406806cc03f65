import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wellposed import fixtures, linalg
from wellposed.boundary import (Criterion, Passivity, Verdict, decompose_boundary, decompose_sv,
                                dissipation_form, dual_system, extended_spec, passivity_check,
                                passivity_transform, q_submatrix, r_matrix, sigma_matrix, skew_part,
                                trace_transform, wellposedness_verdict)
from wellposed.errors import NotApplicableError, SingularSError
from wellposed.model import validate

from _factories import random_complex, random_spec

SQ2 = np.sqrt(2.0)
seeds = st.integers(0, 2**32 - 1)

# K1 stacked on B1 for the two beams, divided by the global sqrt(2) that the
# 1/sqrt(2) normalization of u_e, y_e introduces
REFERENCE_VISCOUS = np.array([[0, 0, 0, 1], [0, 1, 0, 0], [0, 0, -1, 0], [-1, 0, 0, 0]])
REFERENCE_ELASTIC = np.array([
    [0, 0, 0, 0, 0, -1j],
    [0, 0, 0, 0, 1, 0],
    [0, 0, 0, 1, 0, 0],
    [0, 1, 0, 0, 0, 0],
    [0, 0, -1j, 0, 0, 0],
    [1, 0, 0, 0, 0, 0],
])


# trace transform

def test_schrodinger_trace_rows_and_inverse():
    alg = trace_transform(fixtures.schrodinger_derivative())
    np.testing.assert_allclose(alg.T[0], [0, 1j / SQ2, 0, 0])
    np.testing.assert_allclose(alg.T[1], [0, 0, 0, 1j / SQ2])
    # h'(1) = -i sqrt(2) u_e1
    assert alg.Tinv[1, 0] == pytest.approx(-1j * SQ2)


def test_trace_inverse_viscous_beam():
    alg = trace_transform(fixtures.beam_viscous())
    np.testing.assert_allclose(alg.T @ alg.Tinv, np.eye(8), atol=1e-12)


def test_output_rows_are_position_selectors():
    spec = fixtures.beam_elastic()
    T = trace_transform(spec).T
    n = spec.n
    ye = T[2 * n:]
    nz = ye[np.abs(ye) > 0]
    np.testing.assert_allclose(np.abs(nz), 1 / SQ2)
    assert not np.any(ye[:, n:2 * n]) and not np.any(ye[:, 3 * n:])


# decomposition on the beams

def test_viscous_beam_matches_reference_matrix():
    alg = decompose_boundary(fixtures.beam_viscous())
    np.testing.assert_allclose(alg.K1B1 / SQ2, REFERENCE_VISCOUS, atol=1e-12)


def test_elastic_beam_matches_reference_pattern():
    KB = decompose_boundary(fixtures.beam_elastic()).K1B1 / SQ2
    np.testing.assert_array_equal(np.abs(KB) > 1e-12, np.abs(REFERENCE_ELASTIC) > 0)
    np.testing.assert_allclose(np.abs(KB), np.abs(REFERENCE_ELASTIC), atol=1e-12)
    # the -i k_r entries agree exactly
    assert KB[0, 5] == pytest.approx(-1j) and KB[4, 2] == pytest.approx(-1j)
    # the two shear-force rows carry the opposite sign of the reference
    flip = np.diag([1, 1, -1, 1, 1, -1])
    np.testing.assert_allclose(flip @ KB, REFERENCE_ELASTIC, atol=1e-12)


def test_elastic_rotational_stiffness_scales_entries():
    KB = decompose_boundary(fixtures.beam_elastic(k_r=2.5)).K1B1 / SQ2
    assert KB[0, 5] == pytest.approx(-2.5j) and KB[4, 2] == pytest.approx(-2.5j)


def test_schrodinger_blocks():
    spec = fixtures.schrodinger_derivative()
    alg = decompose_boundary(spec)
    np.testing.assert_allclose(alg.B1, -1j * SQ2 * np.eye(2), atol=1e-14)
    np.testing.assert_allclose(alg.B2, 0, atol=1e-14)
    np.testing.assert_allclose(alg.C1, 0, atol=1e-14)
    np.testing.assert_allclose(alg.C2, -1j / SQ2 * np.eye(2), atol=1e-14)
    # unscaled selector output (h(1), -h(0)) is sqrt(2) y_e
    plain = spec.replace(WC=np.array([[1, 0, 0, 0], [0, 0, -1, 0]]))
    np.testing.assert_allclose(decompose_boundary(plain).C2, SQ2 * np.eye(2), atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 3), st.data())
def test_reconstruction_identity(seed, n, data):
    m = data.draw(st.integers(1, 2 * n))
    spec = random_spec(np.random.default_rng(seed), n, m)
    alg = decompose_boundary(spec)
    assert alg.reconstruction_defect(spec) <= 1e-10 * max(1.0, np.abs(spec.W).max())


# verdicts

def test_viscous_beam_well_posed():
    rep = wellposedness_verdict(fixtures.beam_viscous())
    assert rep.verdict is Verdict.WELL_POSED
    assert rep.criterion is Criterion.K1B1_SUFFICIENT
    assert rep.regular
    np.testing.assert_allclose(rep.feedthrough, 0, atol=1e-14)
    assert rep.passivity.status is Passivity.NOT_APPLICABLE


def test_position_control_not_well_posed():
    rep = wellposedness_verdict(fixtures.schrodinger_position())
    np.testing.assert_allclose(rep.algebra.B1, 0, atol=1e-14)
    assert rep.verdict is Verdict.NOT_WELL_POSED
    assert rep.criterion is Criterion.B1_IFF
    assert rep.feedthrough is None


def test_derivative_control_well_posed_zero_feedthrough():
    rep = wellposedness_verdict(fixtures.schrodinger_derivative())
    assert rep.verdict is Verdict.WELL_POSED
    np.testing.assert_allclose(rep.feedthrough, 0, atol=1e-14)


def test_failed_sufficient_condition_for_m_below_2n():
    spec = fixtures.beam_viscous()
    W2 = np.zeros((3, 8))
    W2[0, 4] = W2[1, 0] = W2[2, 5] = 1  # position-only constraints
    rep = wellposedness_verdict(spec.replace(WB2=W2))
    assert rep.verdict is Verdict.SUFFICIENT_CONDITION_FAILS


def test_feedthrough_formula_m_equals_2n():
    rng = np.random.default_rng(4)
    spec = random_spec(rng, 2)
    alg = decompose_boundary(spec)
    D = wellposedness_verdict(spec).feedthrough
    np.testing.assert_allclose(D, alg.C1 @ np.linalg.inv(alg.B1), atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 3), st.booleans())
def test_q_submatrix_equivalence(seed, n, make_singular):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 2 * n + 1))
    W = random_complex(rng, 2 * n, 4 * n)
    if make_singular:
        # derivative columns of rank 2n - 1
        Q = random_complex(rng, 2 * n, 2 * n - 1) @ random_complex(rng, 2 * n - 1, 2 * n)
        W[:, n:2 * n], W[:, 3 * n:] = Q[:, :n], Q[:, n:]
    spec = random_spec(rng, n, m, W=W)
    KB = decompose_boundary(spec).K1B1
    assert linalg.is_invertible(KB) == linalg.is_invertible(q_submatrix(spec)) == (not make_singular)
    rep = wellposedness_verdict(spec)  # also runs the internal cross-check
    assert (rep.verdict is Verdict.WELL_POSED) == (not make_singular)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 3))
def test_verdict_invariant_under_row_recombination(seed, n):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 2 * n + 1))
    spec = random_spec(rng, n, m)
    L1 = random_complex(rng, m, m) + 3 * np.eye(m)
    L2 = random_complex(rng, 2 * n - m, 2 * n - m) + 3 * np.eye(2 * n - m)
    other = spec.replace(WB1=L1 @ spec.WB1, WB2=L2 @ spec.WB2)
    assert wellposedness_verdict(spec).verdict is wellposedness_verdict(other).verdict


# passivity

def test_dissipation_form_matches_trace_identity():
    for spec in (fixtures.beam_viscous(), fixtures.beam_elastic(), random_spec(np.random.default_rng(1), 2)):
        alg = trace_transform(spec)
        Psi = dissipation_form(spec)
        np.testing.assert_allclose(Psi, 0.5 * alg.T.conj().T @ sigma_matrix(2 * spec.n) @ alg.T, atol=1e-12)
        J = passivity_transform(r_matrix(spec))
        np.testing.assert_allclose(J @ sigma_matrix(2 * spec.n) @ J.conj().T, 0.5 * np.linalg.inv(Psi),
                                   atol=1e-10)


@pytest.mark.parametrize("builder", [fixtures.beam_viscous, fixtures.beam_elastic])
def test_extended_system_energy_preserving(builder):
    res = passivity_check(extended_spec(skew_part(builder())))
    assert res.status is Passivity.ENERGY_PRESERVING
    assert res.defect <= 1e-10


@pytest.mark.parametrize("builder", [fixtures.beam_viscous, fixtures.beam_elastic])
def test_negated_output_not_passive(builder):
    ext = extended_spec(skew_part(builder()))
    assert passivity_check(ext.replace(WC=-ext.WC)).status is Passivity.NOT_PASSIVE


def test_passivity_not_applicable_cases():
    assert passivity_check(fixtures.beam_viscous()).status is Passivity.NOT_APPLICABLE
    assert passivity_check(extended_spec(fixtures.beam_elastic())).status is Passivity.NOT_APPLICABLE


def test_strictly_passive_output():
    ext = extended_spec(fixtures.beam_viscous())
    k = 2 * ext.n
    dissipative = ext.replace(WC=ext.WC + 0.3 * ext.WB1)  # y = y_e + 0.3 u_e
    res = passivity_check(dissipative)
    assert res.status is Passivity.PASSIVE
    assert res.eigenvalues.max() > 1e-3 and res.eigenvalues.min() >= -1e-9
    assert k == res.eigenvalues.size // 2


def test_singular_form_reported_as_diagnostic():
    spec = fixtures.schrodinger_derivative()
    res = passivity_check(spec.replace(WC=spec.WB1))
    assert res.status is Passivity.NOT_PASSIVE
    assert "singular" in res.diagnostic


def test_schrodinger_fixtures_energy_preserving():
    assert passivity_check(fixtures.schrodinger_derivative()).status is Passivity.ENERGY_PRESERVING
    assert passivity_check(fixtures.schrodinger_position()).status is Passivity.ENERGY_PRESERVING


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 3), st.sampled_from(["preserving", "passive", "random"]))
def test_passivity_agrees_with_direct_form_comparison(seed, n, kind):
    """The inverse-form test classifies the same way as comparing Psi with Re<u, y>."""
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, n)
    T = trace_transform(spec).T
    k = 2 * n
    S = random_complex(rng, k, k) + 2 * np.eye(k)
    if kind == "random":
        WB1, WC = random_complex(rng, k, 4 * n), random_complex(rng, k, 4 * n)
    else:
        P = np.zeros((k, k)) if kind == "preserving" else (lambda X: X @ X.conj().T)(random_complex(rng, k, k))
        WB1 = S @ T[:k]
        WC = np.linalg.inv(S).conj().T @ (T[k:] + P @ T[:k])
    spec = spec.replace(WB1=WB1, WC=WC)
    W = np.vstack([WB1, WC])
    direct = 0.5 * W.conj().T @ sigma_matrix(k) @ W - dissipation_form(spec)
    ev = np.linalg.eigvalsh(0.5 * (direct + direct.conj().T))
    scale = max(1.0, np.abs(ev).max())
    res = passivity_check(spec)
    if kind == "preserving":
        assert res.status is Passivity.ENERGY_PRESERVING
    elif kind == "passive":
        assert res.status in (Passivity.PASSIVE, Passivity.ENERGY_PRESERVING)
        assert ev.min() >= -1e-9 * scale
    if res.status is Passivity.NOT_PASSIVE and not res.diagnostic:
        assert ev.min() < 0


# S-V decomposition

def test_sv_trivial_cases():
    I = np.eye(2)
    d = decompose_sv(np.hstack([I, I]))
    np.testing.assert_allclose(d.S, I)
    np.testing.assert_allclose(d.V, 0, atol=1e-15)
    d = decompose_sv(np.hstack([2 * I, 0 * I]))
    np.testing.assert_allclose(d.S, I)
    np.testing.assert_allclose(d.V, I)
    assert d.contractive and abs(d.min_eig) < 1e-12


def test_sv_singular_half_sum():
    with pytest.raises(SingularSError):
        decompose_sv(np.hstack([np.eye(2), -np.eye(2)]))


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 3))
def test_sv_round_trip_random(seed, n):
    rng = np.random.default_rng(seed)
    k = 2 * n
    W = random_complex(rng, k, 2 * k)
    d = decompose_sv(W)
    assert np.abs(d.reconstruct() - W).max() <= 1e-12


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 3))
def test_sv_contractive_when_form_nonnegative(seed, n):
    rng = np.random.default_rng(seed)
    k = 2 * n
    S0 = random_complex(rng, k, k) + 2 * np.eye(k)
    V0 = random_complex(rng, k, k)
    V0 *= rng.uniform(0.1, 1.0) / np.linalg.norm(V0, 2)
    W = S0 @ np.hstack([np.eye(k) + V0, np.eye(k) - V0])
    form = W @ sigma_matrix(k) @ W.conj().T
    assert np.linalg.eigvalsh(0.5 * (form + form.conj().T)).min() >= -1e-9 * np.abs(form).max()
    assert decompose_sv(W).min_eig >= -1e-9


# dual system

@pytest.mark.parametrize("builder", [fixtures.schrodinger_derivative, fixtures.schrodinger_position])
def test_dual_energy_preserving_and_valid(builder):
    dual = dual_system(builder())
    assert validate(dual).ok
    assert passivity_check(dual).status is Passivity.ENERGY_PRESERVING


def test_dual_of_extended_beam():
    dual = dual_system(extended_spec(fixtures.beam_viscous()))
    assert validate(dual).ok
    assert passivity_check(dual).status is Passivity.ENERGY_PRESERVING


def test_double_dual_restores_coefficients():
    spec = fixtures.schrodinger_derivative()
    dd = dual_system(dual_system(spec))
    np.testing.assert_array_equal(dd.P2, spec.P2)
    np.testing.assert_array_equal(dd.P1, spec.P1)
    assert dd.P0 == spec.P0 and dd.H == spec.H


def test_dual_coefficients_negated():
    spec = extended_spec(fixtures.beam_viscous())
    dual = dual_system(spec)
    np.testing.assert_array_equal(dual.P2, -spec.P2)
    np.testing.assert_array_equal(dual.P1, -spec.P1)


def test_dual_preconditions():
    with pytest.raises(NotApplicableError):
        dual_system(fixtures.beam_viscous())
    ext = extended_spec(fixtures.beam_viscous())
    with pytest.raises(NotApplicableError):
        dual_system(ext.replace(WC=-ext.WC))
