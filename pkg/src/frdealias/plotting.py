"""Figures for run reports, rendered straight to image files.

Every function builds its own :class:`matplotlib.figure.Figure`, so nothing
touches pyplot state and no display is needed.
"""

import functools

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure
from matplotlib.tri import Triangulation

from .physics import pressure

STYLE = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
}

_LABELS = {"rho": r"$\rho$", "P": r"$P$", "E": r"$E$", "rhou": r"$\rho u$",
           "rhov": r"$\rho v$", "speed": r"$|v|$"}


def _styled(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        with mpl.rc_context(STYLE):
            return func(*args, **kwargs)
    return wrapper


def _figure(width=5.0, height=3.6, ncols=1):
    fig = Figure(figsize=(width * ncols, height))
    return fig, fig.subplots(1, ncols)


def _save(fig, path, dpi=120):
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    return path


def _field_values(u, gas, variable):
    if variable == "rho":
        return u[..., 0]
    if variable == "P":
        return pressure(u, gas)
    if variable == "E":
        return u[..., -1]
    if variable == "rhou":
        return u[..., 1]
    if variable == "rhov":
        return u[..., 2]
    if variable == "speed":
        return np.linalg.norm(u[..., 1:-1] / u[..., :1], axis=-1)
    raise ValueError(f"unknown field {variable!r}")


@_styled
def plot_field(path, state, mesh, element, gas, variable="rho", title=None):
    """Nodal field as a filled contour (2D) or a line (1D)."""
    u = np.asarray(getattr(state, "u", state), dtype=float)
    x = mesh.map_to_physical(element.nodes).reshape(-1, mesh.dim)
    vals = _field_values(u, gas, variable).ravel()
    fig, ax = _figure()
    if mesh.dim == 1:
        order = np.argsort(x[:, 0])
        ax.plot(x[order, 0], vals[order], "-", color="k")
        ax.set_xlabel("x")
        ax.set_ylabel(_LABELS.get(variable, variable))
    else:
        tri = Triangulation(x[:, 0], x[:, 1])
        cs = ax.tripcolor(tri, vals, shading="gouraud", cmap="viridis")
        fig.colorbar(cs, ax=ax, label=_LABELS.get(variable, variable))
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.grid(False)
    if title:
        ax.set_title(title)
    return _save(fig, path)


@_styled
def plot_history(path, records):
    """Minimum density and pressure, and the largest filter strength, over time."""
    t = np.array([r["t"] for r in records])
    fig, (a0, a1) = _figure(ncols=2)
    a0.plot(t, [r["min_rho"] for r in records], label=r"min $\rho$")
    a0.plot(t, [r["min_p"] for r in records], label="min $P$")
    a0.set_xlabel("t")
    a0.legend(frameon=False)
    zeta = np.array([r.get("max_zeta", 0.0) for r in records])
    tot = [k for k in records[0] if k.startswith("total_")]
    if np.any(zeta > 0):
        a1.semilogy(t, np.where(zeta > 0, zeta, np.nan), ".-", color="C3")
        a1.set_ylabel(r"max $\zeta$ since last record")
    elif tot:
        for k in tot:
            v = np.array([r[k] for r in records])
            a1.semilogy(t, np.abs(v - v[0]) / max(abs(v[0]), 1.0) + 1e-18, label=k)
        a1.set_ylabel("relative drift")
        a1.legend(frameon=False, fontsize=7)
    a1.set_xlabel("t")
    return _save(fig, path)


@_styled
def plot_error(path, times, errors, labels=None):
    """L2 error of each variable against the analytic solution over time."""
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    fig, ax = _figure()
    for j in range(errors.shape[1]):
        name = labels[j] if labels else f"var {j}"
        ax.semilogy(times, np.maximum(errors[:, j], 1e-300), label=name)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$L^2$ error")
    ax.legend(frameon=False, fontsize=7)
    return _save(fig, path)


@_styled
def plot_psd(path, freqs, power, peaks=(), xlabel="St"):
    fig, ax = _figure()
    keep = freqs > 0
    ax.loglog(freqs[keep], power[keep], color="k")
    for f in peaks:
        ax.axvline(f, ls=":", color="C3")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("PSD")
    return _save(fig, path)


@_styled
def plot_convergence(path, h, errors, orders=None, labels=None):
    """Log-log error against mesh size with optional reference slopes.

    Parameters
    ----------
    h : array_like, shape (n,)
    errors : array_like, shape (n,) or (m, n)
        One row per series.
    orders : sequence of float, optional
        Reference slopes drawn through the last point of each series.
    """
    h = np.asarray(h, dtype=float)
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    fig, ax = _figure()
    for i, e in enumerate(errors):
        name = labels[i] if labels else None
        line, = ax.loglog(h, e, "o-", label=name)
        if orders is not None:
            k = orders[i]
            ax.loglog(h, e[-1] * (h / h[-1]) ** k, "--", color=line.get_color(), lw=0.8,
                      label=f"slope {k:g}")
    ax.set_xlabel("h")
    ax.set_ylabel(r"$L^2$ error")
    ax.legend(frameon=False, fontsize=7)
    return _save(fig, path)
