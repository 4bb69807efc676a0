"""Conservation audits, error norms, wall forces, spectra and output writers."""

import csv
from dataclasses import dataclass
import os

import numpy as np
from scipy import signal

from .basis import gauss_legendre
from .physics import _entropy, pressure, stress_tensor


def _tensor_points(pts, dim):
    if dim == 1:
        return pts[:, None]
    X, Y = np.meshgrid(pts, pts)          # x varies fastest after ravel
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def _tensor_weights(w, dim):
    return w if dim == 1 else np.kron(w, w)


def _array(state):
    return np.asarray(getattr(state, "u", state), dtype=float)


# ---------------------------------------------------------------- integrals
def conserved_totals(state, mesh, element):
    """Domain integral of every conserved variable using the solution rule."""
    u = _array(state)
    return np.einsum("k,n,knv->v", mesh.det_jacobian, element.weights, u)


def relative_drift(totals, reference):
    """Drift of each total relative to ``max(|reference|, 1)``.

    The floor keeps near-zero totals (the net momentum of a shear layer, for
    example) from turning roundoff into a large relative number.
    """
    totals = np.asarray(totals, dtype=float)
    reference = np.asarray(reference, dtype=float)
    return np.abs(totals - reference) / np.maximum(np.abs(reference), 1.0)


def l2_error(state, exact, mesh, element, n_points=None):
    """Per-variable L2 norm of ``state - exact`` over the domain.

    Parameters
    ----------
    state : SolutionState or ndarray, shape (K, Ns, nvars)
    exact : callable or ndarray
        ``exact(x)`` with ``x`` of shape ``(K, Nq, dim)`` returning conserved
        states, or a constant state broadcast over the domain.
    n_points : int, optional
        Gauss-Legendre points per direction; defaults to ``p + 2`` so the
        rule integrates degree ``2p + 3``.
    """
    u = _array(state)
    nq = element.p + 2 if n_points is None else int(n_points)
    rule = gauss_legendre(nq)
    uq = element.interpolation_to(rule.nodes) @ u
    xq = mesh.map_to_physical(_tensor_points(rule.nodes, element.dim))
    ue = exact(xq) if callable(exact) else np.broadcast_to(np.asarray(exact, float), uq.shape)
    w = _tensor_weights(rule.weights, element.dim)
    sq = np.einsum("k,n,knv->v", mesh.det_jacobian, w, (uq - ue) ** 2)
    return np.sqrt(sq)


# ---------------------------------------------------------------- forces
@dataclass
class WallForces:
    force: np.ndarray        # (dim,) force exerted by the fluid on the wall
    pressure_force: np.ndarray
    viscous_force: np.ndarray
    cl: float
    cd: float
    cp: np.ndarray           # (npts, dim + 1) rows of coordinates then C_p


def wall_forces(state, mesh, element, gas, wall_tag, freestream=None, ref_length=1.0,
                bcs=None, disc=None):
    """Pressure and viscous force on the faces tagged ``wall_tag``.

    The force on the wall is ``int (P n - tau n) ds`` with ``n`` the outward
    normal of the fluid element. Coefficients use ``freestream = (rho, U, P)``
    with ``U`` a velocity vector; drag is along ``U`` and lift along ``U``
    rotated a quarter turn counter-clockwise.

    Parameters
    ----------
    bcs : dict, optional
        Boundary conditions used for the viscous gradient. By default every
        boundary tag is treated as a no-slip wall.
    disc : FRDiscretization, optional
        Reused when given instead of building a new one.

    Raises
    ------
    ValueError
        If no face carries ``wall_tag``.
    """
    from .fr_core import FRDiscretization, wall_bc

    u = _array(state)
    faces = [(int(e), int(f)) for (e, f), t in zip(mesh.boundary_faces, mesh.boundary_tags)
             if t == wall_tag]
    if not faces:
        raise ValueError(f"mesh has no faces tagged {wall_tag!r}")
    if disc is None:
        if bcs is None:
            bcs = {t: wall_bc(t) for t in mesh.tags()}
        disc = FRDiscretization(mesh, element, gas, bcs)
    dim = mesh.dim
    e_idx = np.array([e for e, _ in faces])
    f_idx = np.array([f for _, f in faces])
    uf = (element.face_interp[f_idx] @ u[e_idx])                  # (B, nfp, V)
    n = disc.face_normals[e_idx, f_idx]                            # (B, dim)
    ds = disc.face_scale[e_idx, f_idx][:, None] * element.face_weights[None, :]
    P = pressure(uf, gas)
    fp = np.einsum("bj,bj,bd->d", ds, P, n)
    fv = np.zeros(dim)
    if gas.viscous:
        grad = disc.gradient(u)                                    # (K, Ns, dim, V)
        K = grad.shape[0]
        gflat = grad.reshape(K, element.n_sol, -1)
        gf = (element.face_interp[f_idx] @ gflat[e_idx]).reshape(uf.shape[:2] + (dim, -1))
        tau = stress_tensor(uf, gf, gas)                           # (B, nfp, dim, dim)
        fv = -np.einsum("bj,bjde,be->d", ds, tau, n)
    force = fp + fv

    xf = mesh.map_to_physical(element.face_coords)[e_idx].reshape(
        len(faces), element.n_faces, element.n_face_pts, dim)
    xw = xf[np.arange(len(faces)), f_idx]                          # (B, nfp, dim)

    cl = cd = float("nan")
    cp = np.concatenate([xw.reshape(-1, dim), np.full((xw.shape[0] * xw.shape[1], 1), np.nan)],
                        axis=1)
    if freestream is not None:
        rho_inf, vel_inf, p_inf = freestream
        vel_inf = np.atleast_1d(np.asarray(vel_inf, dtype=float))
        speed = float(np.linalg.norm(vel_inf))
        q = 0.5 * rho_inf * speed ** 2
        drag_dir = vel_inf / speed
        cd = float(force @ drag_dir / (q * ref_length))
        if dim == 2:
            lift_dir = np.array([-drag_dir[1], drag_dir[0]])
            cl = float(force @ lift_dir / (q * ref_length))
        else:
            cl = 0.0
        cp[:, -1] = ((P - p_inf) / q).ravel()
    return WallForces(force, fp, fv, cl, cd, cp)


# ---------------------------------------------------------------- spectra
@dataclass
class TimeSeries:
    """Uniformly sampled scalar series."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("a time series needs at least two samples")
        if self.values.shape[0] != self.times.size:
            raise ValueError("times and values differ in length")
        dt = np.diff(self.times)
        if np.any(dt <= 0):
            raise ValueError("sample times must increase")
        # spacing noise from rounding scales with |t|, not with the step
        scale = max(abs(dt[0]), float(np.max(np.abs(self.times))))
        if np.max(np.abs(dt - dt[0])) > 1e-12 * scale:
            raise ValueError("sample times are not uniformly spaced")

    @property
    def dt(self):
        return (self.times[-1] - self.times[0]) / (self.times.size - 1)

    @property
    def fs(self):
        return 1.0 / self.dt

    def __len__(self):
        return self.times.size


def welch_psd(series, window_length, shift, fs=None, detrend="constant"):
    """Welch averaged periodogram with a Hann window.

    Parameters
    ----------
    series : TimeSeries or array_like
    window_length : int
        Samples per segment.
    shift : int
        Segment advance in samples (overlap is ``window_length - shift``).
    fs : float, optional
        Sampling frequency; taken from a ``TimeSeries`` or 1 otherwise.
    detrend : str or False
        Passed to :func:`scipy.signal.welch`; the default removes each
        segment's mean so a force offset does not swamp the lowest bins.

    Returns
    -------
    freqs, power : ndarray
        One-sided power spectral density; ``sum(power) * df`` approximates the
        variance of the series.
    """
    if isinstance(series, TimeSeries):
        x = series.values
        fs = series.fs if fs is None else fs
    else:
        x = np.asarray(series, dtype=float)
    fs = 1.0 if fs is None else float(fs)
    window_length = int(window_length)
    shift = int(shift)
    if window_length < 2:
        raise ValueError("window_length must be at least 2")
    if not 1 <= shift <= window_length:
        raise ValueError("shift must lie in [1, window_length]")
    if x.size < window_length:
        raise ValueError(f"series has {x.size} samples, shorter than the window {window_length}")
    return signal.welch(x, fs=fs, window="hann", nperseg=window_length,
                        noverlap=window_length - shift, detrend=detrend,
                        scaling="density", return_onesided=True)


def peak_frequencies(freqs, power, count=2, skip_dc=True):
    """Frequencies of the ``count`` largest local maxima of ``power``."""
    power = np.asarray(power, dtype=float)
    peaks, _ = signal.find_peaks(power)
    if skip_dc:
        peaks = peaks[freqs[peaks] > 0]
    order = np.argsort(power[peaks])[::-1][:count]
    return np.sort(np.asarray(freqs)[peaks[order]])


# ---------------------------------------------------------------- averaging
class RunningMean:
    """Time-weighted running average of nodal fields from ``start`` onwards."""

    def __init__(self, start=0.0):
        self.start = float(start)
        self.total = None
        self.weight = 0.0
        self._last = None

    def update(self, t, u):
        u = _array(u)
        if t < self.start:
            self._last = None
            return
        if self._last is None:
            self._last = (t, u.copy())
            return
        t0, u0 = self._last
        h = t - t0
        contrib = 0.5 * h * (u0 + u)       # trapezoid in time
        self.total = contrib if self.total is None else self.total + contrib
        self.weight += h
        self._last = (t, u.copy())

    @property
    def mean(self):
        if self.total is None or self.weight == 0:
            return None
        return self.total / self.weight


# ---------------------------------------------------------------- writers
def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


class CsvSeries:
    """Append-only CSV with a fixed header; values formatted round-trip exact."""

    def __init__(self, path, header):
        self.path = path
        self.header = list(header)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(self.header)

    def write(self, *values):
        if len(values) != len(self.header):
            raise ValueError(f"expected {len(self.header)} values, got {len(values)}")
        self._w.writerow([_fmt(v) for v in values])

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_table(path, header, rows):
    with CsvSeries(path, header) as out:
        for row in rows:
            out.write(*row)


def read_table(path):
    """Header and float columns of a CSV written by :class:`CsvSeries`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return header, {name: data[:, i] for i, name in enumerate(header)}


def field_table(state, mesh, element, gas):
    """Rows ``x, [y,] conserved..., P, sigma`` at every solution node."""
    u = _array(state)
    x = mesh.map_to_physical(element.nodes).reshape(-1, mesh.dim)
    flat = u.reshape(-1, u.shape[-1])
    P = pressure(flat, gas)
    sig = _entropy(flat, gas)
    return np.column_stack([x, flat, P, sig])


def field_header(dim):
    coords = ["x", "y"][:dim]
    mom = ["rhou", "rhov"][:dim]
    return coords + ["rho"] + mom + ["E", "P", "sigma"]


def write_fields(path, state, mesh, element, gas):
    write_table(path, field_header(mesh.dim), field_table(state, mesh, element, gas))


def write_vtk(path, state, mesh, element, gas, title="frdealias"):
    """Legacy ASCII VTK point cloud of the solution nodes with scalar fields."""
    table = field_table(state, mesh, element, gas)
    names = field_header(mesh.dim)
    dim = mesh.dim
    npts = table.shape[0]
    xyz = np.zeros((npts, 3))
    xyz[:, :dim] = table[:, :dim]
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {npts} double"]
    lines += [" ".join(repr(float(c)) for c in row) for row in xyz]
    lines.append(f"CELLS {npts} {2 * npts}")
    lines += [f"1 {i}" for i in range(npts)]
    lines.append(f"CELL_TYPES {npts}")
    lines += ["1"] * npts
    lines.append(f"POINT_DATA {npts}")
    for j, name in enumerate(names[dim:], start=dim):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in table[:, j]]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
