"""Straight-sided interval and parallelogram meshes with face connectivity.

Local face numbering follows :mod:`frdealias.basis`: left, right in 1D and
bottom, right, top, left in 2D, with quadrilateral vertices listed
counter-clockwise starting at the reference corner (-1, -1).
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# (start, end) local vertices of each face, ordered by increasing tangential
# reference coordinate
FACE_VERTICES = {
    1: ((0,), (1,)),
    2: ((0, 1), (1, 2), (3, 2), (0, 3)),
}

PERIODIC = "periodic"
WALL = "no-slip-adiabatic-wall"
FARFIELD = "farfield"


class MeshError(ValueError):
    """Mesh parse or validation failure, optionally tied to an element."""

    def __init__(self, message, element=None, line=None):
        where = []
        if element is not None:
            where.append(f"element {element}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.element = element
        self.line = line


@dataclass(frozen=True)
class BoundaryCondition:
    tag: str
    kind: str
    state: tuple = None  # freestream conserved state for farfield

    def __post_init__(self):
        if self.kind not in (PERIODIC, WALL, FARFIELD):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == FARFIELD:
            if self.state is None:
                raise ValueError(f"farfield boundary {self.tag!r} needs a state")
            u = np.asarray(self.state, dtype=float)
            rho, E = u[0], u[-1]
            ke = 0.5 * np.dot(u[1:-1], u[1:-1]) / rho if rho > 0 else np.inf
            if not (rho > 0 and E - ke > 0):
                raise ValueError(f"farfield state for {self.tag!r} is not admissible")


@dataclass(eq=False)
class Mesh:
    dim: int
    vertices: np.ndarray          # (Nv, dim)
    elements: np.ndarray          # (K, 2**dim)
    interior_faces: np.ndarray    # (P, 5): eL, fL, eR, fR, flip
    boundary_faces: np.ndarray    # (B, 2): element, local face
    boundary_tags: list           # (B,) tag per boundary face
    jacobian: np.ndarray = field(init=False)     # (K, dim, dim), columns dx/dxi
    det_jacobian: np.ndarray = field(init=False)
    centers: np.ndarray = field(init=False)
    voronoi_neighbors: list = field(init=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, self.dim)
        self.elements = np.asarray(self.elements, dtype=int)
        self.interior_faces = np.asarray(self.interior_faces, dtype=int).reshape(-1, 5)
        self.boundary_faces = np.asarray(self.boundary_faces, dtype=int).reshape(-1, 2)
        self.boundary_tags = list(self.boundary_tags)
        self._compute_geometry()
        self.voronoi_neighbors = self._neighbors()

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def n_faces_per_element(self):
        return 2 * self.dim

    def _compute_geometry(self):
        X = self.vertices[self.elements]  # (K, nv, dim)
        if self.dim == 1:
            J = 0.5 * (X[:, 1] - X[:, 0])[:, :, None]
            centers = 0.5 * (X[:, 0] + X[:, 1])
        else:
            J = np.stack([0.5 * (X[:, 1] - X[:, 0]), 0.5 * (X[:, 3] - X[:, 0])], axis=2)
            centers = 0.5 * (X[:, 0] + X[:, 2])
            skew = X[:, 2] - (X[:, 1] + X[:, 3] - X[:, 0])
            scale = np.linalg.norm(X[:, 2] - X[:, 0], axis=1)
            bad = np.linalg.norm(skew, axis=1) > 1e-10 * scale
            if np.any(bad):
                k = int(np.argmax(bad))
                raise MeshError("element is not a parallelogram", element=k)
        det = np.linalg.det(J)
        if np.any(det <= 0):
            k = int(np.argmax(det <= 0))
            raise MeshError(
                f"non-positive Jacobian determinant {det[k]:.3e} "
                "(vertices must be counter-clockwise)", element=k)
        self.jacobian = J
        self.det_jacobian = det
        self.centers = centers

    def _neighbors(self):
        nbrs = [set() for _ in range(self.n_elements)]
        for eL, _, eR, _, _ in self.interior_faces:
            if eL != eR:
                nbrs[eL].add(int(eR))
                nbrs[eR].add(int(eL))
        return [np.array(sorted(s), dtype=int) for s in nbrs]

    def map_to_physical(self, ref_pts):
        """Physical coordinates ``(K, npts, dim)`` of reference points."""
        ref_pts = np.asarray(ref_pts, dtype=float).reshape(-1, self.dim)
        return self.centers[:, None, :] + np.einsum("kdr,nr->knd", self.jacobian, ref_pts)

    def face_vertex_coords(self, e, f):
        start, end = FACE_VERTICES[self.dim][f][0], FACE_VERTICES[self.dim][f][-1]
        v = self.elements[e]
        return self.vertices[v[start]], self.vertices[v[end]]

    def tags(self):
        return sorted(set(self.boundary_tags))

    def summary(self):
        lines = [
            f"dim: {self.dim}",
            f"vertices: {len(self.vertices)}",
            f"elements: {self.n_elements}",
            f"interior faces: {len(self.interior_faces)}",
            f"boundary faces: {len(self.boundary_faces)}",
        ]
        for tag in self.tags():
            lines.append(f"  {tag}: {self.boundary_tags.count(tag)}")
        counts = np.bincount([len(n) for n in self.voronoi_neighbors])
        lines.append("neighbor counts: " + ", ".join(
            f"{k}:{c}" for k, c in enumerate(counts) if c))
        lines.append(f"min det J: {self.det_jacobian.min():.6g}")
        return "\n".join(lines)


def _flip(mesh_vertices, elements, dim, eL, fL, eR, fR):
    """Whether face point order on the right face runs opposite to the left."""
    if dim == 1:
        return 0
    sL, tL = FACE_VERTICES[2][fL][0], FACE_VERTICES[2][fL][1]
    sR, tR = FACE_VERTICES[2][fR][0], FACE_VERTICES[2][fR][1]
    dL = mesh_vertices[elements[eL][tL]] - mesh_vertices[elements[eL][sL]]
    dR = mesh_vertices[elements[eR][tR]] - mesh_vertices[elements[eR][sR]]
    return int(np.dot(dL, dR) < 0)


def build_cartesian(dim, extents, counts, periodic, skew=0.0):
    """Uniform mesh of an interval or (optionally sheared) rectangle.

    Parameters
    ----------
    dim : int
        1 or 2.
    extents : sequence of (lo, hi)
        Bounds per axis.
    counts : sequence of int
        Element counts per axis.
    periodic : sequence of bool
        Periodicity per axis.
    skew : float
        2D only; maps ``x -> x + skew * (y - y_lo)`` to build parallelograms.

    Non-periodic sides are tagged ``left``, ``right`` (and ``bottom``, ``top``).
    """
    extents = [tuple(map(float, e)) for e in np.reshape(extents, (dim, 2))]
    counts = [int(c) for c in np.atleast_1d(counts)]
    periodic = [bool(p) for p in np.atleast_1d(periodic)]
    if len(counts) != dim or len(periodic) != dim:
        raise ValueError("counts and periodic need one entry per axis")
    for c in counts:
        if c < 1:
            raise ValueError(f"element counts must be >= 1, got {counts}")
    for lo, hi in extents:
        if not hi > lo:
            raise ValueError(f"extent [{lo}, {hi}] is empty or inverted")

    if dim == 1:
        (lo, hi), = extents
        n, = counts
        verts = np.linspace(lo, hi, n + 1)[:, None]
        elems = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        interior, bfaces, btags = [], [], []
        for k in range(n - 1):
            interior.append((k, 1, k + 1, 0, 0))
        if periodic[0]:
            interior.append((n - 1, 1, 0, 0, 0))
        else:
            bfaces += [(0, 0), (n - 1, 1)]
            btags += ["left", "right"]
        return Mesh(1, verts, elems, interior, bfaces, btags)

    (x0, x1), (y0, y1) = extents
    nx, ny = counts
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    X = X + skew * (Y - y0)
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i + (nx + 1) * j

    def eid(i, j):
        return i + nx * j

    elems = np.array([
        (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
        for j in range(ny) for i in range(nx)
    ])
    interior, bfaces, btags = [], [], []
    for j in range(ny):
        for i in range(nx):
            if i + 1 < nx:
                interior.append((eid(i, j), 1, eid(i + 1, j), 3))
            elif periodic[0]:
                interior.append((eid(i, j), 1, eid(0, j), 3))
            if j + 1 < ny:
                interior.append((eid(i, j), 2, eid(i, j + 1), 0))
            elif periodic[1]:
                interior.append((eid(i, j), 2, eid(i, 0), 0))
    if not periodic[1]:
        bfaces += [(eid(i, 0), 0) for i in range(nx)]
        btags += ["bottom"] * nx
    if not periodic[0]:
        bfaces += [(eid(nx - 1, j), 1) for j in range(ny)]
        btags += ["right"] * ny
    if not periodic[1]:
        bfaces += [(eid(i, ny - 1), 2) for i in range(nx)]
        btags += ["top"] * nx
    if not periodic[0]:
        bfaces += [(eid(0, j), 3) for j in range(ny)]
        btags += ["left"] * ny
    interior = [(a, b, c, d, _flip(verts, elems, 2, a, b, c, d)) for a, b, c, d in interior]
    return Mesh(2, verts, elems, interior, bfaces, btags)


def _face_key(elem, f, dim):
    vs = FACE_VERTICES[dim][f]
    return tuple(sorted(int(elem[v]) for v in vs))


def connect(dim, vertices, elements, boundary, periodic_pairs=(), lines=None):
    """Match element faces by shared vertices and attach boundary tags.

    ``boundary`` maps sorted vertex-index tuples to tags; ``periodic_pairs``
    lists explicit ``(eA, fA, eB, fB)`` pairings for faces left unmatched.
    """
    vertices = np.asarray(vertices, dtype=float).reshape(-1, dim)
    elements = np.asarray(elements, dtype=int)
    nfaces = 2 * dim
    nv = len(vertices)
    owners = {}
    for k, elem in enumerate(elements):
        if np.any(elem < 0) or np.any(elem >= nv):
            raise MeshError("vertex index out of range", element=k,
                            line=None if lines is None else lines.get(("elem", k)))
        for f in range(nfaces):
            key = _face_key(elem, f, dim)
            owners.setdefault(key, []).append((k, f))

    periodic_faces = set()
    for eA, fA, eB, fB in periodic_pairs:
        periodic_faces.add((eA, fA))
        periodic_faces.add((eB, fB))

    interior, bfaces, btags = [], [], []
    for key, own in owners.items():
        if len(own) > 2:
            raise MeshError(f"face {key} is shared by more than two elements",
                            element=own[2][0])
        if len(own) == 2:
            (eA, fA), (eB, fB) = own
            if eA == eB:
                raise MeshError(f"face {key} appears twice in one element", element=eA)
            if key in boundary:
                raise MeshError(f"interior face {key} carries boundary tag", element=eA)
            interior.append((eA, fA, eB, fB, _flip(vertices, elements, dim, eA, fA, eB, fB)))
            continue
        e, f = own[0]
        if (e, f) in periodic_faces:
            continue
        if key not in boundary:
            raise MeshError(f"face {key} is unmatched and has no boundary tag", element=e)
        bfaces.append((e, f))
        btags.append(boundary[key])

    for eA, fA, eB, fB in periodic_pairs:
        interior.append((eA, fA, eB, fB, _flip(vertices, elements, dim, eA, fA, eB, fB)))

    for key in boundary:
        if key not in owners:
            raise MeshError(f"boundary tag on face {key} which no element owns")

    mesh = Mesh(dim, vertices, elements, interior, bfaces, btags)
    for eA, fA, eB, fB in periodic_pairs:
        lA = _face_length(mesh, eA, fA)
        lB = _face_length(mesh, eB, fB)
        if abs(lA - lB) > 1e-12 * max(lA, 1.0):
            raise MeshError(f"periodic faces differ in length ({lA} vs {lB})", element=eA)
    return mesh


def _face_length(mesh, e, f):
    if mesh.dim == 1:
        return 1.0
    a, b = mesh.face_vertex_coords(e, f)
    return float(np.linalg.norm(b - a))


def load_mesh(path):
    """Read the plain-text mesh format.

    Layout::

        dim n_vertices n_elements n_boundary
        x [y]                       # n_vertices lines
        v0 v1 [v2 v3]               # n_elements lines, counter-clockwise
        tag v0 [v1]                 # n_boundary lines
        periodic eA fA eB fB        # optional trailing pairings

    Blank lines and ``#`` comments are ignored.
    """
    path = Path(path)
    raw = path.read_text().splitlines()
    rows = []
    for lineno, line in enumerate(raw, start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise MeshError(f"{path}: empty mesh file")

    def ints(tokens, lineno, what):
        try:
            return [int(t) for t in tokens]
        except ValueError:
            raise MeshError(f"expected integers for {what}", line=lineno) from None

    lineno, head = rows[0]
    if len(head) != 4:
        raise MeshError("header must be 'dim n_vertices n_elements n_boundary'", line=lineno)
    dim, nv, ne, nb = ints(head, lineno, "header")
    if dim not in (1, 2):
        raise MeshError(f"unsupported dim {dim}", line=lineno)
    need = 1 + nv + ne + nb
    if len(rows) < need:
        raise MeshError(f"expected at least {need} data lines, found {len(rows)}")

    verts = []
    for lineno, tok in rows[1:1 + nv]:
        if len(tok) != dim:
            raise MeshError(f"vertex needs {dim} coordinates", line=lineno)
        try:
            verts.append([float(t) for t in tok])
        except ValueError:
            raise MeshError("bad vertex coordinate", line=lineno) from None

    elems, line_of = [], {}
    for k, (lineno, tok) in enumerate(rows[1 + nv:1 + nv + ne]):
        if len(tok) != 2 ** dim:
            raise MeshError(f"element needs {2 ** dim} vertices", element=k, line=lineno)
        elems.append(ints(tok, lineno, "element"))
        line_of[("elem", k)] = lineno

    boundary = {}
    for lineno, tok in rows[1 + nv + ne:need]:
        if len(tok) != 1 + dim:
            raise MeshError(f"boundary line needs a tag and {dim} vertices", line=lineno)
        key = tuple(sorted(ints(tok[1:], lineno, "boundary face")))
        if key in boundary:
            raise MeshError(f"duplicate boundary face {key}", line=lineno)
        boundary[key] = tok[0]

    pairs = []
    for lineno, tok in rows[need:]:
        if tok[0] != "periodic" or len(tok) != 5:
            raise MeshError("trailing lines must be 'periodic eA fA eB fB'", line=lineno)
        pairs.append(tuple(ints(tok[1:], lineno, "periodic pair")))

    return connect(dim, verts, elems, boundary, pairs, lines=line_of)


def write_mesh(mesh, path):
    """Write ``mesh`` in the format read by :func:`load_mesh`."""
    dim = mesh.dim
    out = [f"{dim} {len(mesh.vertices)} {mesh.n_elements} {len(mesh.boundary_faces)}"]
    out += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    out += [" ".join(str(int(i)) for i in el) for el in mesh.elements]
    for (e, f), tag in zip(mesh.boundary_faces, mesh.boundary_tags):
        key = _face_key(mesh.elements[e], f, dim)
        out.append(f"{tag} " + " ".join(map(str, key)))
    # faces matched by vertex keys are rebuilt on load; the rest are periodic
    for eL, fL, eR, fR, _ in mesh.interior_faces:
        if _face_key(mesh.elements[eL], fL, dim) != _face_key(mesh.elements[eR], fR, dim):
            out.append(f"periodic {eL} {fL} {eR} {fR}")
    Path(path).write_text("\n".join(out) + "\n")
