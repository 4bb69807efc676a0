"""Acceptance checks, one test per criterion.

Each ``criterion_N`` returns ``(passed, detail)``. The tests print one
``PASS``/``FAIL`` line per criterion and the lines are repeated in the pytest
terminal summary. Run ``python tests/test_acceptance.py`` for the lines alone.
"""

import functools
import math
import time

import numpy as np
import pytest

from frdealias.antialias import (AntialiasConfig, FilterLog, entropy_filter_elements,
                                 exponential_kernel, oi_project_flux)
from frdealias.basis import GAUSS_LEGENDRE, GAUSS_LOBATTO, reference_element
from frdealias.cases import cartesian_case
from frdealias.diagnostics import (TimeSeries, l2_error, peak_frequencies, relative_drift,
                                   welch_psd)
from frdealias.fr_core import FRDiscretization
from frdealias.mesh import build_cartesian
from frdealias.physics import GasModel, from_primitive, pressure
from frdealias.timeint import BlowupError, run

pytestmark = pytest.mark.acceptance

GAS = GasModel()
RESULTS = {}

# Kelvin-Helmholtz setup shared by criteria 3, 4 and 6
KH_P, KH_N, KH_DT, KH_T = 4, 8, 0.004, 10.0
KH_MODES = {
    "none": AntialiasConfig.none(),
    "oi": AntialiasConfig.over_integration(13),
    "mf": AntialiasConfig.modal_filter(kappa=32.0, eta_c=0.0, s=6, apply_every_n_steps=20),
    "ef": AntialiasConfig.entropy_filter(),
}


def _report(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2} {title}: {detail}"
    RESULTS[number] = line
    print(line)
    return line


def _ls_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@functools.lru_cache(maxsize=None)
def kh_run(mode):
    """KH run to t = 10 or blowup; per-step records and the filter log."""
    family = GAUSS_LOBATTO if mode == "ef" else GAUSS_LEGENDRE
    el = reference_element(KH_P, 2, family)
    case = cartesian_case("kelvin_helmholtz", el, GAS, KH_N)
    disc = FRDiscretization(case.mesh, el, GAS, antialias=KH_MODES[mode])
    flog = FilterLog() if mode == "ef" else None
    try:
        res = run(case.initial, disc, KH_DT, KH_T, filter_log=flog)
        return {"records": res.records, "state": res.state, "error": None, "log": flog}
    except BlowupError as exc:
        return {"records": exc.records, "state": exc.last_state, "error": exc, "log": flog}


# ---------------------------------------------------------------- criteria
def criterion_1():
    """Isentropic vortex, least-squares L2 density order over 8, 16, 32."""
    t_end = 1.0
    parts, ok = [], True
    for p, dt in ((3, 0.004), (4, 0.003)):
        el = reference_element(p, 2, GAUSS_LEGENDRE)
        errs, hs = [], []
        for n in (8, 16, 32):
            case = cartesian_case("isentropic_vortex", el, GAS, n)
            disc = FRDiscretization(case.mesh, el, GAS)
            res = run(case.initial, disc, dt, t_end, cadence=10 ** 6)
            err = l2_error(res.state, lambda x: case.exact(x, t_end), case.mesh, el)[0]
            errs.append(err)
            hs.append(10.0 / n)
        order = _ls_slope(hs, errs)
        ok &= order >= p + 0.5
        parts.append(f"p={p} order {order:.2f} (need {p + 0.5}), errors "
                     + ", ".join(f"{e:.2e}" for e in errs))
    return ok, "; ".join(parts)


def criterion_2():
    """Uniform flow on a skewed periodic mesh, 1000 steps, every mode."""
    mesh = build_cartesian(2, [(0.0, 1.0)] * 2, [4, 4], [True, True], skew=0.35)
    worst, ok, parts = 0.0, True, []
    for name, aa in (("none", AntialiasConfig.none()),
                     ("oi", AntialiasConfig.over_integration(9)),
                     ("mf", AntialiasConfig.modal_filter(32.0, 0.0, 8, 20)),
                     ("ef", AntialiasConfig.entropy_filter())):
        el = reference_element(3, 2, GAUSS_LOBATTO if name == "ef" else GAUSS_LEGENDRE)
        u0 = from_primitive(np.full((mesh.n_elements, el.n_sol), 1.2),
                            np.broadcast_to([0.7, -0.4], (mesh.n_elements, el.n_sol, 2)),
                            np.full((mesh.n_elements, el.n_sol), 0.9), GAS)
        disc = FRDiscretization(mesh, el, GAS, antialias=aa)
        res = run(u0, disc, 0.004, 4.0, cadence=10 ** 6)
        assert res.steps == 1000
        dev = float(np.abs(res.state.u - u0).max())
        worst = max(worst, dev)
        ok &= dev <= 1e-11
        parts.append(f"{name} {dev:.1e}")
    return ok, f"max deviation {worst:.1e} (limit 1e-11): " + ", ".join(parts)


def criterion_3():
    """Relative drift of the totals over 2000 KH steps.

    Only the unfiltered run may stop early at its blowup.
    """
    parts, ok = [], True
    for mode in KH_MODES:
        recs = [r for r in kh_run(mode)["records"] if r["step"] <= 2000]
        tot = np.array([[r[f"total_{i}"] for i in range(4)] for r in recs])
        drift = float(relative_drift(tot, tot[0]).max())
        ok &= drift <= 1e-10 and (mode == "none" or recs[-1]["step"] == 2000)
        parts.append(f"{mode} {drift:.1e} over {recs[-1]['step']} steps")
    return ok, "max relative drift (limit 1e-10): " + ", ".join(parts)


def criterion_4():
    """KH p=4: none blows up before t = 5, the three treatments reach t = 10."""
    parts, ok = [], True
    for mode in KH_MODES:
        out = kh_run(mode)
        if out["error"] is not None:
            t = out["error"].time
            parts.append(f"{mode} blowup t={t:.2f}")
            ok &= mode == "none" and t < 5.0
        else:
            finite = bool(np.all(np.isfinite(out["state"].u)))
            reached = abs(out["state"].time - KH_T) < 1e-12
            parts.append(f"{mode} t={out['state'].time:g} finite={finite}")
            ok &= mode != "none" and finite and reached
    return ok, ", ".join(parts)


def _scan_feasible(modal, element, floor, gas, zs):
    """Admissibility of the filtered element at each strength in ``zs``."""
    eta2 = element.mode_orders.astype(float) ** 2
    v = element.vandermonde @ (np.exp(-zs[:, None] * eta2)[:, :, None] * modal)
    rho = v[..., 0]
    P = pressure(v, gas)
    with np.errstate(invalid="ignore", divide="ignore"):
        sig = P / np.abs(rho) ** gas.gamma
    return ((rho > 0) & (P > 0) & (sig >= floor)).all(axis=1)


def _threshold(ok):
    """Index of the first sample after the last infeasible one."""
    return ok.size - int(np.argmax(~ok[::-1])) if not ok.all() else 0


def _filter_oracle(u, element, floor, gas):
    """Smallest zeta above which every scanned strength keeps the nodes admissible.

    10^4 log-spaced samples on [1e-8, 50] plus zero, then 10^4 linear samples
    between the last infeasible sample and the next one. Also returns whether
    feasibility was non-monotone along the coarse scan.
    """
    modal = np.linalg.solve(element.vandermonde, u)
    z = np.concatenate([[0.0], np.logspace(-8, np.log10(50.0), 10 ** 4)])
    ok = _scan_feasible(modal, element, floor, gas, z)
    i = _threshold(ok)
    nonmono = bool(ok[:i].any())
    if i == 0:
        return 0.0, nonmono
    fine = np.linspace(z[i - 1], z[i], 10 ** 4)
    return float(fine[_threshold(_scan_feasible(modal, element, floor, gas, fine))]), nonmono


def criterion_5():
    """Entropy filter zeta against a brute-force scan on 500 troubled elements."""
    rng = np.random.default_rng(2024)
    tol = AntialiasConfig.entropy_filter().tolerances
    checked, mismatches, violations, nonmono, worst = 0, 0, 0, 0, 0.0
    t0 = time.perf_counter()
    for p in (3, 4):
        el = reference_element(p, 2, GAUSS_LOBATTO)
        high = el.mode_orders >= 1
        for _ in range(250):
            rho, P = rng.uniform(0.5, 2.0, 2)
            vel = rng.uniform(-1.0, 1.0, 2)
            mean = from_primitive(np.array(rho), vel, np.array(P), GAS)
            sig_mean = P / rho ** GAS.gamma
            sigma_min = sig_mean * rng.uniform(0.5, 0.95)
            floor = sigma_min - tol.constraint_tolerance * abs(sigma_min)
            pert = rng.normal(size=(el.n_sol, 4)) * high[:, None]
            pert /= el.mode_orders[:, None].clip(1) ** 0.5
            modal = np.zeros((el.n_sol, 4))
            modal[0] = mean / el.vandermonde[0, 0]
            # grow the perturbation until some constraint fails
            amp = 0.01
            while True:
                u = el.vandermonde @ (modal + amp * pert * np.abs(mean)[None, :])
                modal_u = np.linalg.solve(el.vandermonde, u)
                if not _scan_feasible(modal_u, el, floor, GAS, np.zeros(1))[0]:
                    break
                amp *= 1.5
            out, zeta, _, (r, pm, e) = entropy_filter_elements(
                u[None], el, [sigma_min], GAS, tol)
            ref, nm = _filter_oracle(u, el, floor, GAS)
            nonmono += nm
            gap = abs(zeta[0] - ref)
            worst = max(worst, gap)
            mismatches += gap > max(2 * tol.bisection_tolerance, 1e-3 * ref)
            violations += not (r[0] > 0 and pm[0] > 0 and e[0] >= 0)
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and violations == 0 and checked == 500 and elapsed < 60
    return ok, (f"{checked} elements, {mismatches} zeta mismatches (max gap {worst:.1e}), "
                f"{violations} constraint violations, {nonmono} non-monotone, {elapsed:.0f} s")


def criterion_6():
    """Step-to-step global minimum entropy on the EF KH run."""
    out = kh_run("ef")
    tol = AntialiasConfig.entropy_filter().tolerances.constraint_tolerance
    sig = np.array([r["min_sigma"] for r in out["records"]])
    allowed = tol * np.abs(sig[:-1])
    drops = sig[:-1] - sig[1:] - allowed
    n_bad = int(np.count_nonzero(drops > 0))
    rel = float(np.max((sig[:-1] - sig[1:]) / np.abs(sig[:-1])))
    ok = out["error"] is None and n_bad == 0 and len(out["log"].rows) > 0
    return ok, (f"{len(sig) - 1} logged steps, {n_bad} drops beyond tolerance, "
                f"largest relative drop {rel:.1e}")


def _orthonormal_legendre(n, x):
    c = np.zeros(n + 1)
    c[n] = 1.0
    return np.polynomial.legendre.legval(x, c) * math.sqrt(n + 0.5)


def criterion_7():
    """OI projection of F(u) = u**2 against an independent L2 projection."""
    rng = np.random.default_rng(7)
    worst = 0.0
    hook = lambda u: np.stack([u ** 2, 2 * u ** 2], axis=-2)  # noqa: E731
    for trial in range(100):
        p = int(rng.integers(1, 6))
        el = reference_element(p, 2, GAUSS_LEGENDRE)
        q = 3 * p + (3 * p + 1) % 2
        modal = rng.normal(size=(el.n_sol, 3))
        u = el.vandermonde @ modal
        u /= np.abs(u).max()
        got = oi_project_flux(u, el, GAS, q, flux=hook)
        # oracle: tensor Legendre projection with a rule exact to degree 8p
        xg, wg = np.polynomial.legendre.leggauss(4 * p + 2)
        X, Y = np.meshgrid(xg, xg, indexing="xy")
        W = np.outer(wg, wg).ravel()
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
        psi_q = _tensor_basis(pts, p)
        psi_n = _tensor_basis(el.nodes, p)
        ufine = psi_q @ np.linalg.solve(psi_n, u)
        coef = np.einsum("qm,q,qdv->mdv", psi_q, W, hook(ufine))
        want = np.einsum("nm,mdv->ndv", psi_n, coef)
        worst = max(worst, float(np.abs(got - want).max()))
    return worst <= 1e-12, f"max deviation {worst:.1e} over 100 elements (limit 1e-12)"


def _tensor_basis(pts, p):
    """Orthonormal tensor Legendre modes at 2D points, degree <= p per axis."""
    cols = [_orthonormal_legendre(i, pts[:, 0]) * _orthonormal_legendre(j, pts[:, 1])
            for j in range(p + 1) for i in range(p + 1)]
    return np.stack(cols, axis=1)


def criterion_8():
    """Filter kernel at p=3, kappa=32, eta_c=0, s=8."""
    eta = np.arange(1, 5)
    got = exponential_kernel(eta, 32.0, 0.0, 4.0, 8)
    want = np.array([math.exp(-32.0 * (k / 4.0) ** 8) for k in range(1, 5)])
    err = float(np.abs(got - want).max())
    return err <= 1e-15, f"max deviation {err:.1e} (limit 1e-15)"


def criterion_9():
    """RK4 slope from dt refinement on the density wave against a fine-dt reference."""
    el = reference_element(4, 1, GAUSS_LEGENDRE)
    case = cartesian_case("density_wave", el, GAS, 6, dim=1)
    disc = FRDiscretization(case.mesh, el, GAS)
    t_end = 0.5
    ref = run(case.initial, disc, t_end / 6400, t_end, cadence=10 ** 9).state.u
    dts, errs = [], []
    for nsteps in (100, 200, 400):
        u = run(case.initial, disc, t_end / nsteps, t_end, cadence=10 ** 9).state.u
        dts.append(t_end / nsteps)
        errs.append(float(np.abs(u - ref).max()))
    slope = _ls_slope(dts, errs)
    return abs(slope - 4.0) <= 0.2, (f"slope {slope:.3f} (need 4 +/- 0.2), errors "
                                     + ", ".join(f"{e:.1e}" for e in errs))


def criterion_10():
    """Welch peaks of a synthetic lift signal with two tones."""
    fs = 160.0
    t = np.arange(64000) / fs
    rng = np.random.default_rng(10)
    f1, f2 = 0.1994, 0.3987
    cl = (0.8 + 0.05 * np.sin(2 * np.pi * f1 * t) + 0.02 * np.sin(2 * np.pi * f2 * t + 0.4)
          + 0.005 * rng.normal(size=t.size))
    freqs, power = welch_psd(TimeSeries(t, cl), 4096, 10)
    peaks = peak_frequencies(freqs, power, count=2)
    bin_width = fs / 4096
    found = sorted(peaks)
    ok = len(found) == 2 and abs(found[0] - f1) <= bin_width and abs(found[1] - f2) <= bin_width
    return ok, (f"peaks {', '.join(f'{f:.4f}' for f in found)} vs {f1}, {f2}, "
                f"bin width {bin_width:.4f}")


def criterion_11():
    """EF on the resolved vortex: inactive filter and unchanged error."""
    p, n, dt, t_end = 3, 32, 0.004, 0.5
    el = reference_element(p, 2, GAUSS_LOBATTO)
    case = cartesian_case("isentropic_vortex", el, GAS, n)
    errs, active = {}, None
    for mode in ("none", "ef"):
        aa = AntialiasConfig.entropy_filter() if mode == "ef" else AntialiasConfig.none()
        disc = FRDiscretization(case.mesh, el, GAS, antialias=aa)
        res = run(case.initial, disc, dt, t_end, cadence=10 ** 6)
        errs[mode] = l2_error(res.state, lambda x: case.exact(x, t_end), case.mesh, el)[0]
        if mode == "ef":
            sched = res.schedule
            active = sched.zeta_active / sched.zeta_applications
    gap = abs(errs["ef"] - errs["none"])
    ok = active <= 1e-3 and gap <= 1e-10
    return ok, (f"zeta > 0 in {100 * active:.2f}% of element-stage applications "
                f"(limit 0.1%), L2 none {errs['none']:.3e} vs EF {errs['ef']:.3e}, "
                f"gap {gap:.1e} (limit 1e-10)")


CRITERIA = {
    1: ("spatial order", criterion_1),
    2: ("free-stream preservation", criterion_2),
    3: ("conservation", criterion_3),
    4: ("aliasing stabilization", criterion_4),
    5: ("entropy filter oracle", criterion_5),
    6: ("minimum entropy principle", criterion_6),
    7: ("over-integration exactness", criterion_7),
    8: ("modal filter kernel", criterion_8),
    9: ("RK4 temporal order", criterion_9),
    10: ("Welch peak recovery", criterion_10),
    11: ("entropy filter inactivity", criterion_11),
}


def check(number):
    title, func = CRITERIA[number]
    passed, detail = func()
    _report(number, title, passed, detail)
    return passed, detail


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    passed, detail = check(number)
    assert passed, detail


if __name__ == "__main__":
    for k in sorted(CRITERIA):
        check(k)
