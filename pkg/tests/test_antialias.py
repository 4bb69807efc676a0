import numpy as np
import pytest
from hypothesis import given, strategies as st

from frdealias import antialias
from frdealias.antialias import (AntialiasConfig, EntropyTolerances, FilterBracketError,
                                 FilterLog, UnrecoverableElementError, compute_sigma_min,
                                 entropy_filter_element, entropy_filter_pass,
                                 exponential_kernel, modal_filter, modal_filter_matrix,
                                 oi_operators, oi_points, oi_project_flux, sigma_min_all)
from frdealias.basis import GAUSS_LOBATTO, modal_transform, reference_element
from frdealias.diagnostics import conserved_totals
from frdealias.mesh import build_cartesian
from frdealias.physics import GasModel, InadmissibleStateError, entropy, from_primitive, pressure

GAS = GasModel()
TOL = EntropyTolerances()


def element_state(el, rng, amp=0.05):
    rho = 1.0 + amp * rng.normal(size=el.n_sol)
    vel = 0.3 + amp * rng.normal(size=(el.n_sol, el.dim))
    p = 1.0 + amp * rng.normal(size=el.n_sol)
    return from_primitive(rho, vel, p, GAS)


# ---------------------------------------------------------------- over-integration
def test_oi_point_count():
    assert oi_points(13) == 7
    assert oi_points(9) == 5
    assert oi_points(12) == 7


def test_oi_rejects_weak_rule():
    with pytest.raises(ValueError):
        oi_operators(reference_element(4, 2), 7)


def test_oi_reproduces_polynomial_flux():
    # a flux already in the solution space is left unchanged
    el = reference_element(3, 2)
    u = np.random.default_rng(0).normal(size=(el.n_sol, 3))
    hook = lambda v: np.stack([v, -v], axis=-2)  # noqa: E731
    np.testing.assert_allclose(oi_project_flux(u, el, GAS, 9, flux=hook),
                               hook(u), atol=1e-12)


def test_oi_collocation_limit():
    # a rule on the solution nodes reduces to collocation
    el = reference_element(3, 2)
    u = element_state(el, np.random.default_rng(1), amp=0.2)
    from frdealias.physics import inviscid_flux
    np.testing.assert_allclose(oi_project_flux(u, el, GAS, 7), inviscid_flux(u, GAS),
                               atol=1e-12)


def test_oi_converges_with_degree():
    el = reference_element(3, 2)
    u = element_state(el, np.random.default_rng(2), amp=0.05)
    ref = oi_project_flux(u, el, GAS, 61)
    errs = [np.abs(oi_project_flux(u, el, GAS, q) - ref).max() for q in (9, 15, 21)]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 1e-6


def test_oi_batched_shape():
    el = reference_element(2, 2)
    u = np.stack([element_state(el, np.random.default_rng(s)) for s in range(3)])
    out = oi_project_flux(u, el, GAS, 7)
    assert out.shape == (3, el.n_sol, 2, 4)
    np.testing.assert_allclose(out[1], oi_project_flux(u[1], el, GAS, 7))


# ---------------------------------------------------------------- modal filter
def test_kernel_values():
    np.testing.assert_allclose(exponential_kernel([0, 1, 2, 3, 4], 32.0, 0.0, 4.0, 8),
                               np.exp(-32.0 * (np.arange(5) / 4.0) ** 8), rtol=1e-15)
    # unity at and below the cutoff
    np.testing.assert_array_equal(exponential_kernel([0, 1, 2], 32.0, 2.0, 5.0, 4), 1.0)


@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_modal_filter_keeps_mean(p, seed):
    el = reference_element(p, 2)
    u = np.random.default_rng(seed).normal(size=(el.n_sol, 4))
    out = modal_filter(u, el, 32.0, 0.0, 8)
    m0, m1 = modal_transform(u, el), modal_transform(out, el)
    assert m1[0] == pytest.approx(m0[0], abs=1e-13)
    assert el.weights @ out == pytest.approx(el.weights @ u, abs=1e-12)


def test_modal_filter_damps_modes():
    el = reference_element(3, 2)
    F = modal_filter_matrix(el, 32.0, 0.0, 8)
    eig = np.sort(np.linalg.eigvals(F).real)
    want = np.sort(exponential_kernel(el.mode_orders, 32.0, 0.0, 4.0, 8))
    np.testing.assert_allclose(eig, want, atol=1e-12)


def test_antialias_config_validation():
    with pytest.raises(ValueError):
        AntialiasConfig.modal_filter(s=3)
    with pytest.raises(ValueError):
        AntialiasConfig.modal_filter(kappa=0.0)
    with pytest.raises(ValueError):
        AntialiasConfig.entropy_filter(zeta_max=0.0)
    with pytest.raises(ValueError):
        AntialiasConfig(mode="spectral_vanishing_viscosity")


# ---------------------------------------------------------------- entropy bounds
def test_sigma_min_uses_face_neighbours():
    mesh = build_cartesian(2, [(0, 3), (0, 3)], [3, 3], [False, False])
    el = reference_element(1, 2, GAUSS_LOBATTO)
    u = np.broadcast_to(from_primitive(np.array(1.0), np.zeros(2), np.array(1.0), GAS),
                        (9, 4, 4)).copy()
    u[8] = from_primitive(np.array(1.0), np.zeros(2), np.array(0.5), GAS)  # corner
    smin = sigma_min_all(u, mesh, GAS)
    assert smin[8] == pytest.approx(0.5)
    assert smin[7] == pytest.approx(0.5) and smin[5] == pytest.approx(0.5)
    assert smin[4] == pytest.approx(1.0)  # diagonal neighbour only
    assert compute_sigma_min(7, u, mesh, GAS) == pytest.approx(0.5)


def test_sigma_min_strictness():
    mesh = build_cartesian(2, [(0, 1), (0, 1)], [2, 2], [True, True])
    el = reference_element(1, 2, GAUSS_LOBATTO)
    u = np.broadcast_to([1.0, 0.0, 0.0, 2.5], (4, 4, 4)).copy()
    u[0, 0, 0] = -0.1
    with pytest.raises(InadmissibleStateError):
        sigma_min_all(u, mesh, GAS)
    assert np.all(np.isfinite(sigma_min_all(u, mesh, GAS, strict=False)))
    with pytest.raises(InadmissibleStateError):
        compute_sigma_min(1, u, mesh, GAS)


# ---------------------------------------------------------------- entropy filter
def troubled(el, rng):
    u = element_state(el, rng, amp=0.02)
    modal = modal_transform(u, el)
    modal[el.mode_orders == el.p] += 0.3 * rng.normal(size=(np.sum(el.mode_orders == el.p), 4))
    return el.vandermonde @ modal


def test_admissible_element_untouched():
    el = reference_element(3, 2, GAUSS_LOBATTO)
    u = element_state(el, np.random.default_rng(3))
    smin = entropy(u, GAS).min()
    out, rep = entropy_filter_element(u, el, smin, TOL, GAS)
    assert rep.zeta == 0.0 and rep.iterations == 0
    np.testing.assert_array_equal(out, u)


@given(st.integers(0, 2 ** 31 - 1))
def test_filtered_element_feasible_and_minimal(seed):
    el = reference_element(3, 2, GAUSS_LOBATTO)
    rng = np.random.default_rng(seed)
    u = troubled(el, rng)
    mean = el.weights @ u / 4.0
    smin = entropy(mean, GAS) * 0.9
    if entropy_filter_element(u, el, smin, TOL, GAS)[1].zeta == 0.0:
        return
    out, rep = entropy_filter_element(u, el, smin, TOL, GAS)
    floor = smin - TOL.constraint_tolerance * abs(smin)
    assert np.all(out[:, 0] > 0) and np.all(pressure(out, GAS) > 0)
    assert np.all(entropy(out, GAS) >= floor)
    assert rep.min_slack >= 0
    # mean preserved
    np.testing.assert_allclose(el.weights @ out, el.weights @ u, atol=1e-12)
    # a slightly weaker filter violates a constraint
    weaker = rep.zeta - 2 * TOL.bisection_tolerance
    if weaker > 0:
        assert not _feasible_at(u, el, floor, weaker)


def _feasible_at(u, el, floor, z):
    damp = np.exp(-z * el.mode_orders ** 2)
    w = el.vandermonde @ (damp[:, None] * modal_transform(u, el))
    ok = (w[:, 0] > 0) & (pressure(w, GAS) > 0)
    ok &= np.where(w[:, 0] > 0, pressure(w, GAS) / np.abs(w[:, 0]) ** GAS.gamma, -1) >= floor
    return ok.all()


def test_scan_search_keeps_stronger_filters_feasible(monkeypatch):
    monkeypatch.setattr(antialias, "SCAN_POINTS", 128)
    el = reference_element(3, 2, GAUSS_LOBATTO)
    rng = np.random.default_rng(11)
    for _ in range(30):
        u = troubled(el, rng)
        smin = entropy(el.weights @ u / 4.0, GAS) * 0.9
        out, rep = entropy_filter_element(u, el, smin, TOL, GAS)
        floor = smin - TOL.constraint_tolerance * abs(smin)
        assert _feasible_at(u, el, floor, rep.zeta)
        assert rep.iterations >= 128 or rep.zeta == 0.0
        grid = np.geomspace(1e-4, TOL.zeta_max, 128)
        assert all(_feasible_at(u, el, floor, z) for z in grid[grid >= rep.zeta])


def test_entropy_filter_idempotent():
    el = reference_element(4, 2, GAUSS_LOBATTO)
    u = troubled(el, np.random.default_rng(11))
    smin = entropy(el.weights @ u / 4.0, GAS) * 0.9
    once, rep = entropy_filter_element(u, el, smin, TOL, GAS)
    assert rep.zeta > 0
    twice, rep2 = entropy_filter_element(once, el, smin, TOL, GAS)
    assert rep2.zeta == 0.0
    np.testing.assert_array_equal(twice, once)


def test_unrecoverable_mean():
    el = reference_element(2, 2, GAUSS_LOBATTO)
    u = np.broadcast_to([1.0, 0.0, 0.0, -1.0], (el.n_sol, 4)).copy()
    with pytest.raises(UnrecoverableElementError):
        entropy_filter_element(u, el, 1.0, TOL, GAS)


def test_unreachable_entropy_bound():
    el = reference_element(2, 2, GAUSS_LOBATTO)
    u = troubled(el, np.random.default_rng(5))
    smin = entropy(el.weights @ u / 4.0, GAS) * 1.5
    with pytest.raises(FilterBracketError):
        entropy_filter_element(u, el, smin, TOL, GAS)


def test_filter_pass_is_local_and_conservative():
    mesh = build_cartesian(2, [(0, 1), (0, 1)], [4, 4], [True, True])
    el = reference_element(3, 2, GAUSS_LOBATTO)
    rng = np.random.default_rng(8)
    u = np.stack([element_state(el, rng, amp=0.01) for _ in range(16)])
    u[6] = troubled(el, rng)
    out, rep = entropy_filter_pass(u, mesh, el, GAS, TOL)
    changed = np.flatnonzero(np.any(out != u, axis=(1, 2)))
    assert set(changed) <= set(np.flatnonzero(rep.zeta))
    assert 6 in changed
    np.testing.assert_allclose(conserved_totals(out, mesh, el), conserved_totals(u, mesh, el),
                               atol=1e-13)
    np.testing.assert_array_equal(rep.troubled, np.flatnonzero(rep.zeta))


def test_filter_log_rows(tmp_path):
    mesh = build_cartesian(2, [(0, 1), (0, 1)], [2, 2], [True, True])
    el = reference_element(3, 2, GAUSS_LOBATTO)
    rng = np.random.default_rng(9)
    u = np.stack([element_state(el, rng, amp=0.01) for _ in range(4)])
    u[1] = troubled(el, rng)
    _, rep = entropy_filter_pass(u, mesh, el, GAS, TOL)
    log = FilterLog(tmp_path / "f.csv")
    log.record(3, 2, rep)
    log.write()
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["step", "stage", "element"]
    assert len(lines) == 1 + len(rep.troubled)
