"""Initial conditions and exact solutions for the built-in cases."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mesh import build_cartesian
from .physics import from_primitive


@dataclass
class Case:
    name: str
    mesh: object
    initial: np.ndarray                  # (K, Ns, nvars)
    bcs: dict
    exact: Optional[Callable] = None     # exact(x, t) -> conserved states
    freestream: Optional[np.ndarray] = None
    wall_tag: Optional[str] = None


def _wrap(d, length):
    return (d + 0.5 * length) % length - 0.5 * length


def density_wave(x, t, gas, amplitude=0.1, velocity=1.0, pressure=1.0, length=1.0):
    """Density sine wave advected at constant velocity and pressure along x."""
    x = np.asarray(x, dtype=float)
    dim = x.shape[-1]
    rho = 1.0 + amplitude * np.sin(2 * np.pi * (x[..., 0] - velocity * t) / length)
    vel = np.zeros(x.shape[:-1] + (dim,))
    vel[..., 0] = velocity
    return from_primitive(rho, vel, np.full_like(rho, pressure), gas)


def isentropic_vortex(x, t, gas, strength=5.0, center=(5.0, 5.0), mean=(1.0, 1.0),
                      domain=(10.0, 10.0)):
    """Isentropic vortex advected by a uniform flow on a periodic box."""
    x = np.asarray(x, dtype=float)
    g = gas.gamma
    dx = _wrap(x[..., 0] - center[0] - mean[0] * t, domain[0])
    dy = _wrap(x[..., 1] - center[1] - mean[1] * t, domain[1])
    r2 = dx * dx + dy * dy
    amp = strength / (2 * np.pi) * np.exp(0.5 * (1.0 - r2))
    vel = np.stack([mean[0] - amp * dy, mean[1] + amp * dx], axis=-1)
    T = 1.0 - (g - 1.0) * strength ** 2 / (8.0 * g * np.pi ** 2) * np.exp(1.0 - r2)
    rho = T ** (1.0 / (g - 1.0))
    return from_primitive(rho, vel, rho ** g, gas)


def kelvin_helmholtz(x, gas, seed=0, perturbation=0.01, modes=4, steepness=15.0,
                     pressure=1.0, density=(0.5, 2.0)):
    """Double shear layer on [-1, 1]^2 with a seeded transverse perturbation.

    ``steepness`` sets the inverse shear-layer thickness; the layers sit at
    ``y = +-0.5``. ``pressure`` is the uniform background pressure; raising it
    lowers the Mach number. ``density`` gives the outer and inner layer
    densities.
    """
    x = np.asarray(x, dtype=float)
    X, Y = x[..., 0], x[..., 1]
    B = np.tanh(steepness * (Y + 0.5)) - np.tanh(steepness * (Y - 0.5))
    rho = density[0] + 0.5 * (density[1] - density[0]) * B
    u = 0.5 * (B - 1.0)
    v = 0.1 * np.sin(2 * np.pi * X)
    rng = np.random.default_rng(seed)
    amps = perturbation * rng.uniform(-1.0, 1.0, modes)
    phases = rng.uniform(0.0, 2 * np.pi, modes)
    for k in range(modes):
        v = v + amps[k] * np.sin(2 * np.pi * (k + 2) * X + phases[k])
    return from_primitive(rho, np.stack([u, v], axis=-1), np.full_like(rho, pressure), gas)


def taylor_green_2d(x, t, gas, mach=0.1, velocity=1.0, rho0=1.0):
    """Decaying 2D Taylor-Green vortex (incompressible solution) on [0, 2 pi]^2."""
    x = np.asarray(x, dtype=float)
    X, Y = x[..., 0], x[..., 1]
    nu = gas.mu / rho0
    F = np.exp(-2.0 * nu * t)
    p0 = rho0 * velocity ** 2 / (gas.gamma * mach ** 2)
    u = velocity * np.sin(X) * np.cos(Y) * F
    v = -velocity * np.cos(X) * np.sin(Y) * F
    p = p0 + rho0 * velocity ** 2 / 4.0 * (np.cos(2 * X) + np.cos(2 * Y)) * F * F
    return from_primitive(np.full_like(X, rho0), np.stack([u, v], axis=-1), p, gas)


def cartesian_case(name, element, gas, n, dim=2, skew=0.0, seed=0, perturbation=0.01,
                   **params):
    """Mesh, initial state and exact solution for a built-in periodic case."""
    if name == "density_wave":
        length = params.get("length", 1.0)
        mesh = build_cartesian(dim, [(0.0, length)] * dim, [n] * dim, [True] * dim, skew=skew)

        def exact(x, t):
            return density_wave(x, t, gas, length=length)
    elif name == "isentropic_vortex":
        if dim != 2:
            raise ValueError("isentropic_vortex is two-dimensional")
        mesh = build_cartesian(2, [(0.0, 10.0)] * 2, [n, n], [True, True], skew=skew)

        def exact(x, t):
            return isentropic_vortex(x, t, gas)
    elif name == "kelvin_helmholtz":
        if dim != 2:
            raise ValueError("kelvin_helmholtz is two-dimensional")
        mesh = build_cartesian(2, [(-1.0, 1.0)] * 2, [n, n], [True, True], skew=skew)
        exact = None
    elif name == "taylor_green_2d":
        if dim != 2:
            raise ValueError("taylor_green_2d is two-dimensional")
        mesh = build_cartesian(2, [(0.0, 2 * np.pi)] * 2, [n, n], [True, True], skew=skew)

        def exact(x, t):
            return taylor_green_2d(x, t, gas)
    else:
        raise ValueError(f"unknown case {name!r}")

    x = mesh.map_to_physical(element.nodes)
    if name == "kelvin_helmholtz":
        u0 = kelvin_helmholtz(x, gas, seed=seed, perturbation=perturbation,
                              steepness=params.get("steepness", 15.0),
                              pressure=params.get("pressure", 1.0),
                              density=params.get("density", (0.5, 2.0)))
    else:
        u0 = exact(x, 0.0)
    return Case(name, mesh, u0, {}, exact)
