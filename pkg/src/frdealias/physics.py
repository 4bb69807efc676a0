"""Compressible gas dynamics on arrays of conserved states.

Conserved states carry the variables on the last axis, ``[rho, rho*v..., E]``.
Fluxes have shape ``(..., dim, nvars)`` and gradients ``(..., dim, nvars)``
with the spatial derivative direction on axis -2.
"""

from dataclasses import dataclass

import numpy as np


class InadmissibleStateError(ValueError):
    """Raised when a state has non-positive density or pressure."""

    def __init__(self, message, element=None, node=None):
        super().__init__(message)
        self.element = element
        self.node = node


@dataclass(frozen=True)
class GasModel:
    gamma: float = 1.4
    prandtl: float = 0.71
    mu: float = 0.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.prandtl > 0:
            raise ValueError("prandtl must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")

    @property
    def viscous(self):
        return self.mu > 0


def ndim_of(u):
    return np.shape(u)[-1] - 2


def velocity(u):
    u = np.asarray(u, dtype=float)
    return u[..., 1:-1] / u[..., :1]


def pressure(u, gas):
    u = np.asarray(u, dtype=float)
    rho = u[..., 0]
    m = u[..., 1:-1]
    return (gas.gamma - 1.0) * (u[..., -1] - 0.5 * np.sum(m * m, axis=-1) / rho)


def sound_speed(u, gas):
    return np.sqrt(gas.gamma * pressure(u, gas) / np.asarray(u)[..., 0])


def entropy(u, gas):
    """Specific physical entropy ``P * rho**-gamma``."""
    u = np.asarray(u, dtype=float)
    rho = u[..., 0]
    if np.any(rho <= 0):
        raise InadmissibleStateError("entropy needs positive density")
    return pressure(u, gas) * rho ** (-gas.gamma)


def _entropy(u, gas):
    # no density check; callers mask non-positive densities themselves
    with np.errstate(invalid="ignore", divide="ignore"):
        return pressure(u, gas) * np.abs(u[..., 0]) ** (-gas.gamma)


def admissible(u, gas):
    """Boolean mask of states with positive density and pressure."""
    u = np.asarray(u, dtype=float)
    rho = u[..., 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        return (rho > 0) & (pressure(u, gas) > 0)


def check_admissible(u, gas):
    ok = admissible(u, gas)
    if not np.all(ok):
        idx = np.unravel_index(np.argmin(ok), ok.shape)
        raise InadmissibleStateError(f"inadmissible state at index {tuple(map(int, idx))}")


def from_primitive(rho, vel, p, gas):
    """Conserved state from density, velocity (last axis) and pressure."""
    rho = np.asarray(rho, dtype=float)
    vel = np.asarray(vel, dtype=float)
    p = np.asarray(p, dtype=float)
    E = p / (gas.gamma - 1.0) + 0.5 * rho * np.sum(vel * vel, axis=-1)
    return np.concatenate([rho[..., None], rho[..., None] * vel, E[..., None]], axis=-1)


def _inviscid_flux(u, gas):
    rho = u[..., 0]
    m = u[..., 1:-1]
    E = u[..., -1]
    dim = m.shape[-1]
    v = m / rho[..., None]
    p = (gas.gamma - 1.0) * (E - 0.5 * np.sum(m * v, axis=-1))
    F = np.empty(u.shape[:-1] + (dim, dim + 2))
    F[..., 0] = m
    F[..., 1:-1] = m[..., :, None] * v[..., None, :]
    for d in range(dim):
        F[..., d, 1 + d] += p
    F[..., -1] = (E + p)[..., None] * v
    return F


def inviscid_flux(u, gas):
    """Euler flux ``[rho v; rho v (x) v + P I; (E + P) v]``."""
    u = np.asarray(u, dtype=float)
    check_admissible(u, gas)
    return _inviscid_flux(u, gas)


def _primitive_gradients(u, grad_u, gas):
    """Velocity gradient ``dv[..., d, i] = d v_i / d x_d`` and static enthalpy gradient."""
    g = gas.gamma
    rho = u[..., 0]
    v = u[..., 1:-1] / rho[..., None]
    p = (g - 1.0) * (u[..., -1] - 0.5 * rho * np.sum(v * v, axis=-1))
    grho = grad_u[..., 0]
    gm = grad_u[..., 1:-1]
    gE = grad_u[..., -1]
    dv = (gm - v[..., None, :] * grho[..., None]) / rho[..., None, None]
    gp = (g - 1.0) * (gE - np.sum(v[..., None, :] * gm, axis=-1)
                      + 0.5 * np.sum(v * v, axis=-1)[..., None] * grho)
    gh = g / (g - 1.0) * (gp / rho[..., None] - (p / rho ** 2)[..., None] * grho)
    return v, dv, gh


def stress_tensor(u, grad_u, gas):
    """Viscous stress ``tau[..., i, j]`` from conserved variables and gradients."""
    _, dv, _ = _primitive_gradients(np.asarray(u, float), np.asarray(grad_u, float), gas)
    div = np.trace(dv, axis1=-2, axis2=-1)
    tau = gas.mu * (dv + np.swapaxes(dv, -1, -2))
    dim = dv.shape[-1]
    tau = tau - (2.0 / 3.0) * gas.mu * div[..., None, None] * np.eye(dim)
    return tau


def _viscous_flux(u, grad_u, gas):
    dim = u.shape[-1] - 2
    G = np.zeros(u.shape[:-1] + (dim, dim + 2))
    if gas.mu == 0.0:
        return G
    v, dv, gh = _primitive_gradients(u, grad_u, gas)
    div = np.trace(dv, axis1=-2, axis2=-1)
    tau = gas.mu * (dv + np.swapaxes(dv, -1, -2))
    for d in range(dim):
        tau[..., d, d] -= (2.0 / 3.0) * gas.mu * div
    G[..., 1:-1] = -tau
    G[..., -1] = -np.sum(tau * v[..., None, :], axis=-1) - (gas.mu / gas.prandtl) * gh
    return G


def viscous_flux(u, grad_u, gas):
    """Navier-Stokes viscous flux, sign convention ``du/dt + div(F_I + F_V) = 0``.

    Parameters
    ----------
    u : array_like, shape (..., nvars)
        Conserved state.
    grad_u : array_like, shape (..., dim, nvars)
        Gradient of the conserved variables.
    gas : GasModel

    Returns
    -------
    ndarray, shape (..., dim, nvars)
        Rows ``[0; -tau; -tau v - (mu / Pr) grad h]`` with ``h`` the static
        specific enthalpy.
    """
    u = np.asarray(u, dtype=float)
    grad_u = np.asarray(grad_u, dtype=float)
    check_admissible(u, gas)
    return _viscous_flux(u, grad_u, gas)


def normal_flux(F, n):
    """Contract a flux ``(..., dim, nvars)`` with normals ``(..., dim)``."""
    return np.einsum("...dv,...d->...v", F, n)


def _rusanov(uL, uR, n, gas):
    FL = _inviscid_flux(uL, gas)
    FR = _inviscid_flux(uR, gas)
    g = gas.gamma
    vnL = np.sum(uL[..., 1:-1] * n, axis=-1) / uL[..., 0]
    vnR = np.sum(uR[..., 1:-1] * n, axis=-1) / uR[..., 0]
    aL = np.sqrt(g * pressure(uL, gas) / uL[..., 0])
    aR = np.sqrt(g * pressure(uR, gas) / uR[..., 0])
    s = np.maximum(np.abs(vnL) + aL, np.abs(vnR) + aR)
    return 0.5 * (normal_flux(FL, n) + normal_flux(FR, n)) - 0.5 * s[..., None] * (uR - uL)


def davis_wavespeed(uL, uR, n, gas):
    uL, uR, n = (np.asarray(a, dtype=float) for a in (uL, uR, n))
    vnL = np.sum(velocity(uL) * n, axis=-1)
    vnR = np.sum(velocity(uR) * n, axis=-1)
    return np.maximum(np.abs(vnL) + sound_speed(uL, gas), np.abs(vnR) + sound_speed(uR, gas))


def rusanov_flux(uL, uR, n, gas):
    """Rusanov common flux along the unit normal ``n`` pointing from L to R."""
    uL, uR, n = (np.asarray(a, dtype=float) for a in (uL, uR, n))
    check_admissible(uL, gas)
    check_admissible(uR, gas)
    return _rusanov(uL, uR, n, gas)


def br2_penalty(dim):
    """BR2 penalty: the number of faces of an interval or quadrilateral."""
    return 2 * dim


def br2_viscous_interface(uL, uR, wL, wR, n, gas, rL=None, rR=None, penalty=None):
    """Common solution and BR2 viscous normal flux at face points.

    ``wL``/``wR`` are the uncorrected element gradients traced to the face and
    ``rL``/``rR`` the face-local lifted jump corrections on each side.
    """
    uL, uR, wL, wR, n = (np.asarray(a, dtype=float) for a in (uL, uR, wL, wR, n))
    check_admissible(uL, gas)
    check_admissible(uR, gas)
    if penalty is None:
        penalty = br2_penalty(n.shape[-1])
    if rL is not None:
        wL = wL + penalty * np.asarray(rL, dtype=float)
    if rR is not None:
        wR = wR + penalty * np.asarray(rR, dtype=float)
    ubar = 0.5 * (uL + uR)
    G = 0.5 * (normal_flux(_viscous_flux(uL, wL, gas), n)
               + normal_flux(_viscous_flux(uR, wR, gas), n))
    return ubar, G
