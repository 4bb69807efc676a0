"""Over-integration, exponential modal filtering and entropy filtering."""

from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .basis import gauss_legendre, orthonormal_vandermonde
from .physics import InadmissibleStateError, _entropy, _inviscid_flux, pressure

NONE = "none"
OVER_INTEGRATION = "over_integration"
MODAL_FILTER = "modal_filter"
ENTROPY_FILTER = "entropy_filter"
MODES = (NONE, OVER_INTEGRATION, MODAL_FILTER, ENTROPY_FILTER)
SCAN_POINTS = 0  # log-spaced strengths scanned before bisection; 0 bisects on [0, zeta_max]


class UnrecoverableElementError(InadmissibleStateError):
    """Element mean is inadmissible, so no filter strength can repair it."""


class FilterBracketError(RuntimeError):
    """Constraints still violated at the maximum filter strength."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


@dataclass(frozen=True)
class AntialiasConfig:
    mode: str = NONE
    q: int = None
    kappa: float = 32.0
    eta_c: float = 0.0
    s: int = 8
    apply_every_n_steps: int = 20
    constraint_tolerance: float = 1e-12
    bisection_tolerance: float = 1e-4
    zeta_max: float = 50.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown antialias mode {self.mode!r}")
        if self.mode == OVER_INTEGRATION and (self.q is None or self.q < 1):
            raise ValueError("over-integration needs a quadrature degree q >= 1")
        if self.mode == MODAL_FILTER:
            if not self.kappa > 0:
                raise ValueError("kappa must be positive")
            if self.s < 2 or self.s % 2:
                raise ValueError("filter order s must be even and >= 2")
            if self.apply_every_n_steps < 1:
                raise ValueError("apply_every_n_steps must be >= 1")
        if self.mode == ENTROPY_FILTER:
            if not self.zeta_max > 0:
                raise ValueError("zeta_max must be positive")
            if not self.bisection_tolerance > 0:
                raise ValueError("bisection_tolerance must be positive")
            if self.constraint_tolerance < 0:
                raise ValueError("constraint_tolerance must be non-negative")

    @classmethod
    def none(cls):
        return cls(NONE)

    @classmethod
    def over_integration(cls, q):
        return cls(OVER_INTEGRATION, q=int(q))

    @classmethod
    def modal_filter(cls, kappa=32.0, eta_c=0.0, s=8, apply_every_n_steps=20):
        return cls(MODAL_FILTER, kappa=kappa, eta_c=eta_c, s=int(s),
                   apply_every_n_steps=int(apply_every_n_steps))

    @classmethod
    def entropy_filter(cls, constraint_tolerance=1e-12, bisection_tolerance=1e-4,
                       zeta_max=50.0):
        return cls(ENTROPY_FILTER, constraint_tolerance=constraint_tolerance,
                   bisection_tolerance=bisection_tolerance, zeta_max=zeta_max)

    @property
    def tolerances(self):
        return EntropyTolerances(self.constraint_tolerance, self.bisection_tolerance,
                                 self.zeta_max)


@dataclass(frozen=True)
class EntropyTolerances:
    constraint_tolerance: float = 1e-12
    bisection_tolerance: float = 1e-4
    zeta_max: float = 50.0


def oi_points(q):
    """Gauss-Legendre point count per direction for a degree-``q`` rule."""
    return q // 2 + 1


# ---------------------------------------------------------------- over-integration

def oi_operators(element, q):
    """Interpolation to the quadrature grid and projection back to the nodes.

    Returns ``(interp, project)`` with shapes ``(Nq, Ns)`` and ``(Ns, Nq)``.
    """
    nq = oi_points(q)
    if nq < element.p + 1:
        raise ValueError(
            f"degree-{q} rule has {nq} points per direction, fewer than the "
            f"{element.p + 1} solution nodes")
    rule = gauss_legendre(nq)
    interp = element.interpolation_to(rule.nodes)
    psi = element.modal_at(rule.nodes)
    w = rule.weights if element.dim == 1 else np.kron(rule.weights, rule.weights)
    project = element.vandermonde @ (psi.T * w)
    return interp, project


def oi_project_flux(nodal_states, element, gas, q, flux=None):
    """L2 projection of the flux of ``u_h`` onto the solution space.

    Parameters
    ----------
    nodal_states : ndarray, shape (..., Ns, nvars)
    element : ReferenceElement
    gas : GasModel
    q : int
        Degree of the Gauss-Legendre rule used for the projection integrals.
    flux : callable, optional
        Replaces the Euler flux; maps ``(..., nvars)`` to ``(..., dim, nvars)``.

    Returns
    -------
    ndarray, shape (..., Ns, dim, nvars)
        Nodal values of the projected flux polynomial.
    """
    u = np.asarray(nodal_states, dtype=float)
    interp, project = oi_operators(element, q)
    uq = interp @ u
    fq = flux(uq) if flux is not None else _inviscid_flux(uq, gas)
    shp = fq.shape
    out = project @ fq.reshape(shp[:-3] + (shp[-3], -1))
    return out.reshape(shp[:-3] + (element.n_sol,) + shp[-2:])


# ---------------------------------------------------------------- modal filter

def exponential_kernel(eta, kappa, eta_c, eta_m, s):
    """Exponential filter factors; 1 at or below the cutoff order."""
    eta = np.asarray(eta, dtype=float)
    x = np.clip((eta - eta_c) / (eta_m - eta_c), 0.0, None)
    return np.where(eta <= eta_c, 1.0, np.exp(-kappa * x ** s))


def modal_filter_matrix(element, kappa, eta_c, s):
    sigma = exponential_kernel(element.mode_orders, kappa, eta_c, element.p + 1, s)
    return element.vandermonde @ (sigma[:, None] * element.inv_vandermonde)


def modal_filter(nodal_states, element, kappa, eta_c, s):
    """Exponential modal filter with maximal order ``p + 1``."""
    u = np.asarray(nodal_states, dtype=float)
    return modal_filter_matrix(element, kappa, eta_c, s) @ u


# ---------------------------------------------------------------- entropy filter

@dataclass(frozen=True)
class FilterReport:
    element: int
    zeta: float
    min_rho: float
    min_p: float
    min_entropy_slack: float
    iterations: int

    @property
    def min_slack(self):
        return min(self.min_rho, self.min_p, self.min_entropy_slack)


@dataclass
class FilterPassReport:
    """Per-element results of one entropy filter pass, as arrays."""

    zeta: np.ndarray
    iterations: np.ndarray
    min_rho: np.ndarray
    min_p: np.ndarray
    min_entropy_slack: np.ndarray
    sigma_min: np.ndarray = field(repr=False, default=None)

    @property
    def troubled(self):
        return np.flatnonzero(self.zeta > 0)

    @property
    def max_zeta(self):
        return float(self.zeta.max()) if self.zeta.size else 0.0

    def reports(self):
        return [
            FilterReport(int(k), float(self.zeta[k]), float(self.min_rho[k]),
                         float(self.min_p[k]), float(self.min_entropy_slack[k]),
                         int(self.iterations[k]))
            for k in range(self.zeta.size)
        ]


def neighbor_table(mesh):
    """``(K, 1 + max_neighbors)`` element indices, padded with the element itself."""
    K = mesh.n_elements
    width = 1 + max((len(n) for n in mesh.voronoi_neighbors), default=0)
    table = np.repeat(np.arange(K)[:, None], width, axis=1)
    for k, nb in enumerate(mesh.voronoi_neighbors):
        table[k, 1:1 + len(nb)] = nb
    return table


def sigma_min_all(u, mesh, gas, strict=True, table=None):
    """Minimum nodal entropy over each element and its face neighbours.

    With ``strict=False`` nodes with non-positive density are skipped instead
    of raising.
    """
    u = np.asarray(u, dtype=float)
    rho = u[..., 0]
    bad = rho <= 0
    if strict and np.any(bad):
        k, i = np.unravel_index(np.argmax(bad), bad.shape)
        raise InadmissibleStateError(
            f"non-positive density in entropy stencil (element {k}, node {i})",
            element=int(k), node=int(i))
    sig = _entropy(u, gas)
    sig = np.where(bad, np.inf, sig)
    elem_min = sig.min(axis=1)
    if table is None:
        table = neighbor_table(mesh)
    return elem_min[table].min(axis=1)


def compute_sigma_min(element_id, state, mesh, gas):
    """Minimum nodal entropy over element ``element_id`` and its neighbours."""
    u = np.asarray(getattr(state, "u", state), dtype=float)
    ids = np.concatenate([[element_id], mesh.voronoi_neighbors[element_id]]).astype(int)
    sub = u[ids]
    if np.any(sub[..., 0] <= 0):
        raise InadmissibleStateError("non-positive density in entropy stencil",
                                     element=int(element_id))
    return float(_entropy(sub, gas).min())


def _entropy_floor(sigma_min, tol):
    return sigma_min - tol * np.abs(sigma_min)


def _constraint_slacks(u, sigma_floor, gas):
    rho = u[..., 0]
    p = pressure(u, gas)
    sig = _entropy(u, gas)
    ent = np.where(rho > 0, sig - sigma_floor[:, None], -np.inf)
    return rho.min(axis=1), p.min(axis=1), ent.min(axis=1)


def _feasible(u, sigma_floor, gas):
    r, p, e = _constraint_slacks(u, sigma_floor, gas)
    return (r > 0) & (p > 0) & (e >= 0)


def filter_states(modal, element, zeta):
    """Nodal states after applying ``exp(-zeta * eta**2)`` to the modes.

    ``modal`` is ``(M, Ns, nvars)`` and ``zeta`` is ``(M,)``.
    """
    damp = np.exp(-np.asarray(zeta)[:, None] * element.mode_orders[None, :] ** 2)
    return element.vandermonde @ (damp[:, :, None] * modal)


def entropy_filter_elements(u, element, sigma_min, gas, tolerances, element_ids=None):
    """Entropy filter a stack of elements ``(M, Ns, nvars)``.

    Returns the filtered states, ``zeta``, iteration counts and the constraint
    slacks ``(min_rho, min_p, min_entropy_slack)`` after filtering.
    """
    u = np.asarray(u, dtype=float)
    M = u.shape[0]
    sigma_min = np.broadcast_to(np.asarray(sigma_min, dtype=float), (M,))
    floor = _entropy_floor(sigma_min, tolerances.constraint_tolerance)
    ids = np.arange(M) if element_ids is None else np.asarray(element_ids)

    zeta = np.zeros(M)
    iters = np.zeros(M, dtype=int)
    out = u.copy()
    need = ~_feasible(u, floor, gas)
    if np.any(need):
        sel = np.flatnonzero(need)
        modal = element.inv_vandermonde @ u[sel]
        mean = element.vandermonde[:, :1] @ modal[:, :1]
        mean_ok = _feasible(mean, floor[sel], gas)
        r, p, _ = _constraint_slacks(mean, floor[sel], gas)
        dead = ~((r > 0) & (p > 0))
        if np.any(dead):
            k = int(ids[sel[np.argmax(dead)]])
            raise UnrecoverableElementError(
                f"element {k} has an inadmissible mean state", element=k)
        hi = np.full(sel.size, tolerances.zeta_max)
        top_ok = _feasible(filter_states(modal, element, hi), floor[sel], gas)
        if not np.all(top_ok):
            k = int(ids[sel[np.argmin(top_ok)]])
            reason = "entropy bound unreachable by the element mean" if not mean_ok.all() else \
                "constraints violated at zeta_max"
            raise FilterBracketError(f"element {k}: {reason}", element=k)
        # feasibility need not be monotone in zeta: a log-spaced scan finds the
        # last infeasible strength, so every stronger grid value is feasible,
        # and bisection refines inside that bracket
        grid = np.concatenate([[0.0], np.geomspace(tolerances.bisection_tolerance,
                                                   tolerances.zeta_max, SCAN_POINTS)
                               if SCAN_POINTS else [tolerances.zeta_max]])
        damp = np.exp(-grid[:, None] * element.mode_orders[None, :] ** 2)
        scan = element.vandermonde @ (damp[None, :, :, None] * modal[:, None])
        ok = _feasible(scan.reshape((-1,) + scan.shape[2:]), np.repeat(floor[sel], grid.size),
                       gas).reshape(sel.size, grid.size)
        ok[:, 0] = False
        ok[:, -1] = True
        last = grid.size - 1 - np.argmax(~ok[:, ::-1], axis=1)
        lo, hi = grid[last], grid[last + 1]
        width = float((hi - lo).max())
        n_it = max(0, math.ceil(math.log2(width / tolerances.bisection_tolerance)))
        for _ in range(n_it):
            mid = 0.5 * (lo + hi)
            ok = _feasible(filter_states(modal, element, mid), floor[sel], gas)
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        zeta[sel] = hi
        iters[sel] = SCAN_POINTS + n_it
        out[sel] = filter_states(modal, element, hi)
    slacks = _constraint_slacks(out, floor, gas)
    return out, zeta, iters, slacks


def entropy_filter_element(nodal_states, element, sigma_min, tolerances, gas):
    """Filter one element with the smallest strength meeting the constraints.

    Returns ``(filtered_states, FilterReport)``. Input that already satisfies
    the constraints is returned unchanged with ``zeta = 0``.
    """
    u = np.asarray(nodal_states, dtype=float)
    out, zeta, iters, (r, p, e) = entropy_filter_elements(
        u[None], element, [sigma_min], gas, tolerances)
    out = u.copy() if zeta[0] == 0.0 else out[0]
    return out, FilterReport(0, float(zeta[0]), float(r[0]), float(p[0]), float(e[0]),
                                int(iters[0]))


def entropy_filter_pass(state, mesh, element, gas, tolerances, reference=None, table=None):
    """Entropy filter every element.

    The entropy bounds come from ``reference`` (the state before any element
    is filtered; defaults to ``state`` itself), so the pass does not depend on
    element order.

    Returns ``(filtered, FilterPassReport)``; ``filtered`` has the same type as
    ``state`` (array or :class:`~frdealias.fr_core.SolutionState`).
    """
    u = np.asarray(getattr(state, "u", state), dtype=float)
    ref = u if reference is None else np.asarray(getattr(reference, "u", reference))
    sigma_min = sigma_min_all(ref, mesh, gas, strict=False, table=table)
    out, zeta, iters, (r, p, e) = entropy_filter_elements(
        u, element, sigma_min, gas, tolerances)
    report = FilterPassReport(zeta, iters, r, p, e, sigma_min)
    if hasattr(state, "u"):
        return state.replace(u=out), report
    return out, report


class FilterLog:
    """CSV log of entropy filter activity: one row per filtered element."""

    header = ("step", "stage", "element", "zeta", "iterations", "min_slack")

    def __init__(self, path=None):
        self.rows = []
        self.path = path

    def record(self, step, stage, report):
        for k in report.troubled:
            slack = min(report.min_rho[k], report.min_p[k], report.min_entropy_slack[k])
            self.rows.append((step, stage, int(k), float(report.zeta[k]),
                              int(report.iterations[k]), float(slack)))

    def write(self, path=None):
        path = path or self.path
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header)
            w.writerows(self.rows)
