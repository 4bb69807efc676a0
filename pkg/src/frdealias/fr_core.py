"""Flux reconstruction residual on affine interval and quadrilateral meshes.

Face points are numbered globally as ``(k * nfaces + f) * nfp + j``; common
interface quantities are assembled on that flat index in one phase and the
element-local corrected divergence is formed afterwards.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import physics
from .antialias import OVER_INTEGRATION, AntialiasConfig, oi_operators
from .mesh import FARFIELD, PERIODIC, WALL, BoundaryCondition
from .physics import InadmissibleStateError, _inviscid_flux, _rusanov, _viscous_flux


class NonFiniteStateError(FloatingPointError):
    def __init__(self, message, element=None, node=None):
        super().__init__(message)
        self.element = element
        self.node = node


@dataclass
class SolutionState:
    u: np.ndarray  # (K, Ns, nvars)
    time: float = 0.0

    def replace(self, **kw):
        return replace(self, **kw)

    def copy(self):
        return SolutionState(self.u.copy(), self.time)


class FRDiscretization:
    """Spatial operator for one mesh, reference element, gas and boundary set.

    Parameters
    ----------
    mesh : Mesh
    element : ReferenceElement
    gas : GasModel
    bcs : dict or iterable of BoundaryCondition, optional
        Keyed by boundary tag; every tag present in the mesh needs one.
    antialias : AntialiasConfig, optional
    flux : callable, optional
        Test hook replacing the Euler flux; the interface flux then becomes
        a local Lax-Friedrichs flux with constant speed ``hook_wavespeed``.
    """

    def __init__(self, mesh, element, gas, bcs=None, antialias=None, flux=None,
                 hook_wavespeed=1.0):
        if mesh.dim != element.dim:
            raise ValueError("mesh and reference element dimensions differ")
        self.mesh = mesh
        self.element = element
        self.gas = gas
        self.antialias = antialias or AntialiasConfig.none()
        self.flux_hook = flux
        self.hook_wavespeed = float(hook_wavespeed)
        if bcs is None:
            bcs = {}
        elif not isinstance(bcs, dict):
            bcs = {bc.tag: bc for bc in bcs}
        self.bcs = bcs

        dim = mesh.dim
        K = mesh.n_elements
        F, nfp, Ns = element.n_faces, element.n_face_pts, element.n_sol
        self.dim, self.K, self.F, self.nfp, self.Ns = dim, K, F, nfp, Ns
        self.nvars = dim + 2
        self.Fn = F * nfp

        Jinv = np.linalg.inv(mesh.jacobian)
        det = mesh.det_jacobian
        self.Jinv = Jinv
        self.det = det
        self.metric = det[:, None, None] * Jinv        # reference flux = metric @ f
        S = det[:, None, None] * np.einsum("krd,fr->kfd", Jinv, element.face_normals)
        smag = np.linalg.norm(S, axis=-1)
        self.face_scale = smag                          # (K, F)
        self.face_normals = S / smag[..., None]         # unit outward normals
        rep = np.repeat
        self.S_pts = rep(S, nfp, axis=1)                # (K, Fn, dim)
        self.Jn_pts = self.S_pts / det[:, None, None]   # J^-T n_ref
        self.n_flat = rep(self.face_normals, nfp, axis=1).reshape(-1, dim)
        self.s_flat = rep(smag, nfp, axis=1).reshape(-1)

        self.FI = element.face_interp.reshape(self.Fn, Ns)
        self.C = np.concatenate(list(element.corr_deriv), axis=1)      # (Ns, Fn)
        nref = rep(element.face_normals, nfp, axis=0)                  # (Fn, dim)
        self.Cgrad = np.stack([self.C * nref[:, r] for r in range(dim)])
        lift = np.zeros((self.Fn, self.Fn))
        for f in range(F):
            blk = slice(f * nfp, (f + 1) * nfp)
            lift[blk, blk] = element.face_interp[f] @ element.corr_deriv[f]
        self.lift = lift
        self.penalty = physics.br2_penalty(dim)

        self._build_face_maps()
        self._check_bcs()

        self.oi = None
        if self.antialias.mode == OVER_INTEGRATION:
            self.oi = oi_operators(element, self.antialias.q)

        self.coords = mesh.map_to_physical(element.nodes)  # (K, Ns, dim)

    # ------------------------------------------------------------ topology
    def _build_face_maps(self):
        nfp, F = self.nfp, self.F
        j = np.arange(nfp)
        gL, gR = [], []
        for eL, fL, eR, fR, flip in self.mesh.interior_faces:
            gL.append((eL * F + fL) * nfp + j)
            jr = j[::-1] if flip else j
            gR.append((eR * F + fR) * nfp + jr)
        empty = np.zeros(0, dtype=int)
        self.gL = np.concatenate(gL) if gL else empty
        self.gR = np.concatenate(gR) if gR else empty
        groups = {}
        for (e, f), tag in zip(self.mesh.boundary_faces, self.mesh.boundary_tags):
            groups.setdefault(tag, []).append((e * F + f) * nfp + j)
        self.gB = {t: np.concatenate(v) for t, v in groups.items()}

    def _check_bcs(self):
        for tag in self.gB:
            bc = self.bcs.get(tag)
            if bc is None:
                raise ValueError(f"no boundary condition for mesh tag {tag!r}")
            if bc.kind == PERIODIC:
                raise ValueError(f"tag {tag!r} is periodic but the mesh leaves it unmatched")

    # ------------------------------------------------------------ helpers
    def state_array(self, state):
        return np.asarray(getattr(state, "u", state), dtype=float)

    def check_state(self, u):
        if not np.all(np.isfinite(u)):
            bad = ~np.all(np.isfinite(u), axis=-1)
            k, i = np.unravel_index(np.argmax(bad), bad.shape)
            raise NonFiniteStateError(f"non-finite value at element {k}, node {i}",
                                      element=int(k), node=int(i))
        if self.flux_hook is not None:
            return
        ok = physics.admissible(u, self.gas)
        if not np.all(ok):
            k, i = np.unravel_index(np.argmin(ok), ok.shape)
            raise InadmissibleStateError(
                f"inadmissible state at element {k}, node {i}", element=int(k), node=int(i))

    def _check_points(self, uq, where):
        if self.flux_hook is not None:
            return
        ok = physics.admissible(uq, self.gas)
        if not np.all(ok):
            k, i = np.unravel_index(np.argmin(ok), ok.shape)
            raise InadmissibleStateError(
                f"inadmissible {where} state at element {k}, point {i}",
                element=int(k), node=int(i))

    def face_traces(self, u):
        """Face point values ``(K, Fn, nvars)``."""
        return self.FI @ u

    def _flux(self, u):
        if self.flux_hook is not None:
            return self.flux_hook(u)
        return _inviscid_flux(u, self.gas)

    def _common(self, uL, uR, n):
        if self.flux_hook is None:
            return _rusanov(uL, uR, n, self.gas)
        fL = physics.normal_flux(self.flux_hook(uL), n)
        fR = physics.normal_flux(self.flux_hook(uR), n)
        return 0.5 * (fL + fR) - 0.5 * self.hook_wavespeed * (uR - uL)

    def _ghost(self, bc, ub):
        if bc.kind == WALL:
            g = ub.copy()
            g[:, 1:-1] *= -1.0
            return g
        return np.broadcast_to(np.asarray(bc.state, dtype=float), ub.shape)

    def _boundary_solution(self, bc, ub):
        if bc.kind == WALL:
            g = ub.copy()
            ke = 0.5 * np.sum(ub[:, 1:-1] ** 2, axis=-1) / ub[:, 0]
            g[:, 1:-1] = 0.0
            g[:, -1] -= ke
            return g
        return np.broadcast_to(np.asarray(bc.state, dtype=float), ub.shape)

    # ------------------------------------------------------------ interface terms
    def common_inviscid(self, uf):
        """Common normal flux at every face point, scaled to reference faces."""
        V = self.nvars
        flat = uf.reshape(-1, V)
        out = np.empty_like(flat)
        if self.gL.size:
            Fb = self._common(flat[self.gL], flat[self.gR], self.n_flat[self.gL])
            out[self.gL] = Fb * self.s_flat[self.gL, None]
            out[self.gR] = -Fb * self.s_flat[self.gR, None]
        for tag, g in self.gB.items():
            ub = flat[g]
            Fb = self._common(ub, self._ghost(self.bcs[tag], ub), self.n_flat[g])
            out[g] = Fb * self.s_flat[g, None]
        return out.reshape(uf.shape)

    def common_solution(self, uf):
        V = self.nvars
        flat = uf.reshape(-1, V)
        out = np.empty_like(flat)
        if self.gL.size:
            avg = 0.5 * (flat[self.gL] + flat[self.gR])
            out[self.gL] = avg
            out[self.gR] = avg
        for tag, g in self.gB.items():
            out[g] = self._boundary_solution(self.bcs[tag], flat[g])
        return out.reshape(uf.shape)

    # ------------------------------------------------------------ gradients
    def _to_physical(self, gref):
        # gref (K, dim_ref, Ns, V) -> (K, Ns, dim, V)
        return np.einsum("krd,krnv->kndv", self.Jinv, gref)

    def gradient_parts(self, u, uf=None):
        """Uncorrected gradient, corrected gradient and face jumps ``ubar - u_f``."""
        if uf is None:
            uf = self.face_traces(u)
        jump = self.common_solution(uf) - uf
        D = self.element.diff_matrix
        gD = np.stack([D[r] @ u for r in range(self.dim)], axis=1)
        gC = gD + np.stack([self.Cgrad[r] @ jump for r in range(self.dim)], axis=1)
        return self._to_physical(gD), self._to_physical(gC), jump

    def gradient(self, state):
        """Corrected gradient ``(K, Ns, dim, nvars)`` at the solution nodes."""
        u = self.state_array(state)
        self.check_state(u)
        return self.gradient_parts(u)[1]

    def common_viscous(self, uf, wD_f, jump):
        """BR2 common viscous normal flux at every face point, reference-scaled."""
        V, dim = self.nvars, self.dim
        rref = self.lift @ jump                                   # (K, Fn, V)
        wb = wD_f + self.penalty * self.Jn_pts[..., None] * rref[:, :, None, :]
        flat_u = uf.reshape(-1, V)
        flat_w = wb.reshape(-1, dim, V)
        out = np.empty_like(flat_u)
        gas = self.gas
        if self.gL.size:
            n = self.n_flat[self.gL]
            GL = physics.normal_flux(_viscous_flux(flat_u[self.gL], flat_w[self.gL], gas), n)
            GR = physics.normal_flux(_viscous_flux(flat_u[self.gR], flat_w[self.gR], gas), n)
            Gb = 0.5 * (GL + GR)
            out[self.gL] = Gb * self.s_flat[self.gL, None]
            out[self.gR] = -Gb * self.s_flat[self.gR, None]
        for tag, g in self.gB.items():
            bc = self.bcs[tag]
            n = self.n_flat[g]
            if bc.kind == WALL:
                ub = self._boundary_solution(bc, flat_u[g])
                Gb = physics.normal_flux(_viscous_flux(ub, flat_w[g], gas), n)
                Gb[:, -1] = 0.0  # adiabatic, and no work at a no-slip wall
            else:
                Gb = physics.normal_flux(_viscous_flux(flat_u[g], flat_w[g], gas), n)
            out[g] = Gb * self.s_flat[g, None]
        return out.reshape(uf.shape)

    # ------------------------------------------------------------ residual
    def _divergence(self, f, uf, common):
        """Corrected reference divergence for nodal flux ``f`` (K, Ns, dim, V)."""
        K, V, dim = f.shape[0], self.nvars, self.dim
        ft = np.einsum("krd,kndv->krnv", self.metric, f)
        D = self.element.diff_matrix
        div = D[0] @ ft[:, 0]
        for r in range(1, dim):
            div += D[r] @ ft[:, r]
        ff = (self.FI @ f.reshape(K, self.Ns, dim * V)).reshape(K, self.Fn, dim, V)
        fdn = np.einsum("kpd,kpdv->kpv", self.S_pts, ff)
        return div + self.C @ (common - fdn)

    def inviscid_volume_flux(self, u):
        if self.oi is None:
            return self._flux(u)
        interp, project = self.oi
        uq = interp @ u
        self._check_points(uq, "quadrature-point")
        fq = self._flux(uq)
        K, Nq = uq.shape[:2]
        out = project @ fq.reshape(K, Nq, -1)
        return out.reshape(K, self.Ns, self.dim, self.nvars)

    def residual(self, state, check=True):
        """Time derivative ``du/dt`` at every solution node."""
        u = self.state_array(state)
        if check:
            self.check_state(u)
        uf = self.face_traces(u)
        if check and not self.element.collocated_faces:
            self._check_points(uf, "face-point")
        f = self.inviscid_volume_flux(u)
        total = self._divergence(f, uf, self.common_inviscid(uf))
        if self.gas.viscous:
            wD, wC, jump = self.gradient_parts(u, uf)
            g = _viscous_flux(u, wC, self.gas)
            K = u.shape[0]
            wD_f = (self.FI @ wD.reshape(K, self.Ns, -1)).reshape(K, self.Fn, self.dim, -1)
            total += self._divergence(g, uf, self.common_viscous(uf, wD_f, jump))
        return -total / self.det[:, None, None]

    # ------------------------------------------------------------ utilities
    def integrate(self, values):
        """Domain integral of nodal data ``(K, Ns, ...)`` with the solution rule."""
        w = self.element.weights
        return np.einsum("k,n,kn...->...", self.det, w, values)

    def min_edge(self):
        J = self.mesh.jacobian
        return float(2.0 * np.min(np.linalg.norm(J, axis=1)))

    def dt_estimate(self, state, cfl=1.0):
        """Rule-of-thumb stable step for RK4.

        Convective rate ``max(|v| + a) (2p + 1) / h`` plus, for viscous gas, a
        diffusive rate ``eta nu (p + 1)**4 / h**2`` with
        ``nu = max(mu, gamma mu / Pr) / min(rho)`` and ``eta`` the BR2
        penalty. Returns ``cfl`` over their sum; ``cfl`` around 0.4 is safe.
        """
        u = self.state_array(state)
        p = self.element.p
        h = self.min_edge()
        speed = np.max(np.linalg.norm(physics.velocity(u), axis=-1)
                       + physics.sound_speed(u, self.gas))
        rate = speed * (2 * p + 1) / h
        if self.gas.viscous:
            g = self.gas
            nu = max(g.mu, g.gamma * g.mu / g.prandtl) / float(np.min(u[..., 0]))
            rate += self.penalty * nu * (p + 1) ** 4 / h ** 2
        return cfl / rate


_CACHE = {}


def _discretization(mesh, element, gas, bcs, antialias):
    key = (id(mesh), id(element), gas, id(bcs), antialias)
    disc = _CACHE.get(key)
    if disc is None or disc.mesh is not mesh or disc.element is not element:
        if len(_CACHE) > 16:
            _CACHE.clear()
        disc = FRDiscretization(mesh, element, gas, bcs, antialias)
        _CACHE[key] = disc
    return disc


def interpolate_to_faces(state, element, mesh):
    """Face traces ``(K, nfaces, nfp, nvars)``."""
    u = np.asarray(getattr(state, "u", state), dtype=float)
    if u.ndim != 3 or u.shape[0] != mesh.n_elements or u.shape[1] != element.n_sol:
        raise ValueError(
            f"state shape {u.shape} does not match {mesh.n_elements} elements "
            f"x {element.n_sol} nodes")
    return (element.face_interp[None] @ u[:, None]).reshape(
        u.shape[0], element.n_faces, element.n_face_pts, u.shape[-1])


def compute_gradient(state, mesh, element, bcs=None, gas=None):
    gas = gas or physics.GasModel()
    return _discretization(mesh, element, gas, bcs, None).gradient(state)


def compute_residual(state, mesh, element, gas, bcs=None, antialias=None):
    return _discretization(mesh, element, gas, bcs, antialias).residual(state)


def wall_bc(tag):
    return BoundaryCondition(tag, WALL)


def farfield_bc(tag, state):
    return BoundaryCondition(tag, FARFIELD, tuple(map(float, state)))
