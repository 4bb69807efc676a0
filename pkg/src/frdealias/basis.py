"""Polynomial machinery on the reference interval and the reference square.

Nodes are ordered with the first reference coordinate running fastest, so the
solution node ``(a, b)`` of a quadrilateral has flat index ``a + (p + 1) * b``.
Modal coefficients use the same ordering over ``(i, j)`` mode pairs.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

GAUSS_LEGENDRE = "gauss-legendre"
GAUSS_LOBATTO = "gauss-lobatto"

_MAX_NEWTON = 100
_NEWTON_TOL = 1e-15


@dataclass(frozen=True)
class QuadratureRule:
    kind: str
    n: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def degree(self):
        """Highest polynomial degree integrated exactly."""
        return 2 * self.n - 1 if self.kind == GAUSS_LEGENDRE else 2 * self.n - 3


def _legendre_and_derivative(n, x):
    """P_n(x) and P_n'(x) by the three-term recurrence."""
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def gauss_legendre(n):
    """Gauss-Legendre rule with ``n`` nodes, exact to degree ``2n - 1``."""
    n = int(n)
    if n < 1:
        raise ValueError(f"gauss_legendre needs n >= 1, got {n}")
    if n == 1:
        return QuadratureRule(GAUSS_LEGENDRE, 1, np.zeros(1), np.full(1, 2.0))

    k = np.arange(1, n + 1)
    x = -np.cos((2 * k - 1) * np.pi / (2 * n))
    for _ in range(_MAX_NEWTON):
        pn, dpn = _legendre_and_derivative(n, x)
        dx = pn / dpn
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    _, dpn = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dpn * dpn)

    # Enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    if n % 2:
        x[n // 2] = 0.0
    return QuadratureRule(GAUSS_LEGENDRE, n, x, w)


def gauss_lobatto(n):
    """Gauss-Lobatto rule with ``n`` nodes including both endpoints."""
    n = int(n)
    if n < 2:
        raise ValueError(f"gauss_lobatto needs n >= 2, got {n}")

    # Interior nodes are roots of P'_N, N = n - 1; iterate on the whole set
    N = n - 1
    x = -np.cos(np.pi * np.arange(n) / N)
    for _ in range(_MAX_NEWTON):
        pn, _ = _legendre_and_derivative(N, x)
        pnm1, _ = _legendre_and_derivative(N - 1, x)
        dx = (x * pn - pnm1) / (n * pn)
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    x[0], x[-1] = -1.0, 1.0
    pn, _ = _legendre_and_derivative(N, x)
    w = 2.0 / (N * n * pn * pn)

    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    if n % 2:
        x[n // 2] = 0.0
    return QuadratureRule(GAUSS_LOBATTO, n, x, w)


def quadrature(kind, n):
    if kind == GAUSS_LEGENDRE:
        return gauss_legendre(n)
    if kind == GAUSS_LOBATTO:
        return gauss_lobatto(n)
    raise ValueError(f"unknown quadrature kind {kind!r}")


def orthonormal_vandermonde(x, p):
    """Orthonormal Legendre polynomials of degree 0..p evaluated at ``x``."""
    scale = np.sqrt((2 * np.arange(p + 1) + 1) / 2.0)
    return npleg.legvander(np.asarray(x, dtype=float), p) * scale


def orthonormal_vandermonde_deriv(x, p):
    x = np.asarray(x, dtype=float)
    out = np.zeros((x.size, p + 1))
    for k in range(1, p + 1):
        c = np.zeros(k + 1)
        c[k] = np.sqrt((2 * k + 1) / 2.0)
        out[:, k] = npleg.legval(x, npleg.legder(c))
    return out


def lagrange_matrix(nodes, x):
    """Interpolation matrix from values at ``nodes`` to values at ``x``."""
    p = len(nodes) - 1
    V = orthonormal_vandermonde(nodes, p)
    return np.linalg.solve(V.T, orthonormal_vandermonde(x, p).T).T


def radau_corrections(p, x):
    """Left/right DG-recovery correction functions and derivatives at ``x``.

    ``g_left`` is 1 at -1 and 0 at +1; ``g_right`` is its mirror image.
    Returns ``(g_left, dg_left, g_right, dg_right)``.
    """
    x = np.asarray(x, dtype=float)
    cp = np.zeros(p + 2)
    cp[p] = 1.0
    cp1 = np.zeros(p + 2)
    cp1[p + 1] = 1.0
    right = 0.5 * (cp + cp1)
    left = 0.5 * (-1) ** p * (cp - cp1)
    g_r = npleg.legval(x, right)
    g_l = npleg.legval(x, left)
    dg_r = npleg.legval(x, npleg.legder(right))
    dg_l = npleg.legval(x, npleg.legder(left))
    return g_l, dg_l, g_r, dg_r


def correction_derivatives(p, scheme="dg", nodes=None):
    """Derivatives of the left and right correction functions at the nodes.

    Parameters
    ----------
    p : int
        Polynomial order.
    scheme : str
        Only ``"dg"`` (nodal discontinuous Galerkin recovery) is available.
    nodes : array_like, optional
        Evaluation points; defaults to the Gauss-Legendre solution nodes.

    Returns
    -------
    ndarray, shape (2, p + 1)
        Row 0 is ``g_left'`` and row 1 is ``g_right'``.
    """
    if scheme != "dg":
        raise ValueError(f"unsupported correction scheme {scheme!r}")
    if p < 0:
        raise ValueError("p must be non-negative")
    if nodes is None:
        nodes = gauss_legendre(p + 1).nodes
    _, dgl, _, dgr = radau_corrections(p, nodes)
    return np.vstack([dgl, dgr])


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """Per-order operators on the reference interval (dim 1) or square (dim 2).

    Faces are ordered left, right in 1D and bottom, right, top, left in 2D.
    Face points of a face are ordered by increasing tangential reference
    coordinate.
    """

    p: int
    dim: int
    solution_rule: QuadratureRule
    nodes: np.ndarray            # (Ns, dim)
    weights: np.ndarray          # (Ns,)
    vandermonde: np.ndarray      # (Ns, Ns)
    inv_vandermonde: np.ndarray  # (Ns, Ns)
    diff_matrix: np.ndarray      # (dim, Ns, Ns)
    face_interp: np.ndarray      # (nfaces, nfp, Ns)
    face_normals: np.ndarray     # (nfaces, dim)
    face_weights: np.ndarray     # (nfp,)
    face_coords: np.ndarray      # (nfaces, nfp, dim)
    corr_deriv: np.ndarray       # (nfaces, Ns, nfp): divergence of each correction field
    mode_orders: np.ndarray      # (Ns,)
    mode_degrees: np.ndarray = field(repr=False, default=None)  # (Ns, dim)

    @property
    def n_sol(self):
        return self.nodes.shape[0]

    @property
    def n_faces(self):
        return self.face_interp.shape[0]

    @property
    def n_face_pts(self):
        return self.face_interp.shape[1]

    @property
    def collocated_faces(self):
        """True when every face point is also a solution node."""
        return self.solution_rule.kind == GAUSS_LOBATTO

    def interpolation_to(self, pts1d):
        """Tensor interpolation matrix from the solution nodes to a 1D point set."""
        L = lagrange_matrix(self.solution_rule.nodes, pts1d)
        return L if self.dim == 1 else np.kron(L, L)

    def modal_at(self, pts1d):
        """Orthonormal modal basis evaluated on a tensor grid of ``pts1d``."""
        V = orthonormal_vandermonde(pts1d, self.p)
        return V if self.dim == 1 else np.kron(V, V)


def reference_element(p, dim=2, node_family=GAUSS_LEGENDRE):
    if p < 0:
        raise ValueError("p must be non-negative")
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    n = p + 1
    rule = quadrature(node_family, n)
    x = rule.nodes

    V1 = orthonormal_vandermonde(x, p)
    Vinv1 = np.linalg.inv(V1)
    D1 = orthonormal_vandermonde_deriv(x, p) @ Vinv1
    l_left = lagrange_matrix(x, [-1.0])[0]
    l_right = lagrange_matrix(x, [1.0])[0]
    _, dgl, _, dgr = radau_corrections(p, x)

    if dim == 1:
        nodes = x[:, None]
        weights = rule.weights.copy()
        V, Vinv = V1, Vinv1
        D = D1[None]
        face_interp = np.stack([l_left[None], l_right[None]])
        normals = np.array([[-1.0], [1.0]])
        # normal . h = 1 at the face, so div h = -g_left' on the left
        corr = np.stack([-dgl[:, None], dgr[:, None]])
        face_weights = np.ones(1)
        face_coords = np.array([[[-1.0]], [[1.0]]])
        orders = np.arange(n)
        degrees = orders[:, None]
    else:
        I = np.eye(n)
        xi, eta = np.meshgrid(x, x, indexing="xy")
        nodes = np.column_stack([xi.ravel(), eta.ravel()])
        weights = np.kron(rule.weights, rule.weights)
        V = np.kron(V1, V1)
        Vinv = np.kron(Vinv1, Vinv1)
        D = np.stack([np.kron(I, D1), np.kron(D1, I)])
        face_interp = np.stack([
            np.kron(l_left[None], I),    # bottom, eta = -1
            np.kron(I, l_right[None]),   # right, xi = +1
            np.kron(l_right[None], I),   # top, eta = +1
            np.kron(I, l_left[None]),    # left, xi = -1
        ])
        normals = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        corr = np.stack([
            np.kron(-dgl[:, None], I),
            np.kron(I, dgr[:, None]),
            np.kron(dgr[:, None], I),
            np.kron(I, -dgl[:, None]),
        ])
        face_weights = rule.weights.copy()
        ones = np.ones(n)
        face_coords = np.stack([
            np.column_stack([x, -ones]),
            np.column_stack([ones, x]),
            np.column_stack([x, ones]),
            np.column_stack([-ones, x]),
        ])
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        degrees = np.column_stack([ii.ravel(), jj.ravel()])
        orders = degrees.max(axis=1)

    for a in (V, Vinv, D, face_interp, corr, nodes, weights):
        a.setflags(write=False)
    return ReferenceElement(
        p=p, dim=dim, solution_rule=rule, nodes=nodes, weights=weights,
        vandermonde=V, inv_vandermonde=Vinv, diff_matrix=D,
        face_interp=face_interp, face_normals=normals,
        face_weights=face_weights, face_coords=face_coords,
        corr_deriv=corr, mode_orders=orders, mode_degrees=degrees,
    )


def modal_transform(nodal_values, element):
    """Orthonormal-Legendre modal coefficients of nodal data.

    ``nodal_values`` has the solution nodes on its first axis (or on axis -2
    for stacked element arrays of shape ``(..., Ns, nvars)``).
    """
    u = np.asarray(nodal_values, dtype=float)
    ns = element.n_sol
    if u.ndim == 1:
        if u.shape[0] != ns:
            raise ValueError(f"expected {ns} nodal values, got {u.shape[0]}")
        return element.inv_vandermonde @ u
    if u.shape[-2] != ns:
        raise ValueError(f"expected {ns} nodal values on axis -2, got {u.shape[-2]}")
    return element.inv_vandermonde @ u


def nodal_transform(modal_values, element):
    return element.vandermonde @ np.asarray(modal_values, dtype=float)
