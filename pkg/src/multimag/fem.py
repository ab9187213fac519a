"""P1 finite element fields, assembly, and constrained SPD solves.

Everything here is first-order Lagrange on tetrahedra (volume) and the
induced P1/P0 spaces on the boundary triangulation.  Element matrices are
assembled with closed-form integrals (exact for P1), so quadrature enters
only where point evaluations of user callables are integrated:

* triangles use a 7-point rule exact to degree 5 by default (a 3-point
  degree-2 rule is selectable where a degree parameter is exposed);
* tetrahedra use a fixed 4-point rule, exact to degree 2.

Linear solves are preconditioned conjugate gradients with the diagonal
preconditioner, relative tolerance 1e-10 by default, and an iteration cap of
10x the number of unknowns; failure to converge raises instead of returning
a bad solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .mesh import SurfaceMesh, TetMesh

# 7-point degree-5 triangle rule (barycentric points, weights sum to 1).
_SQRT15 = np.sqrt(15.0)
_A1 = (6.0 - _SQRT15) / 21.0
_A2 = (6.0 + _SQRT15) / 21.0
TRI_QUAD_POINTS = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [1.0 - 2.0 * _A1, _A1, _A1],
        [_A1, 1.0 - 2.0 * _A1, _A1],
        [_A1, _A1, 1.0 - 2.0 * _A1],
        [1.0 - 2.0 * _A2, _A2, _A2],
        [_A2, 1.0 - 2.0 * _A2, _A2],
        [_A2, _A2, 1.0 - 2.0 * _A2],
    ]
)
TRI_QUAD_WEIGHTS = np.array(
    [
        9.0 / 40.0,
        (155.0 - _SQRT15) / 1200.0,
        (155.0 - _SQRT15) / 1200.0,
        (155.0 - _SQRT15) / 1200.0,
        (155.0 + _SQRT15) / 1200.0,
        (155.0 + _SQRT15) / 1200.0,
        (155.0 + _SQRT15) / 1200.0,
    ]
)

# 3-point degree-2 triangle rule (edge midpoints).
TRI_QUAD_DEGREE2_POINTS = np.array(
    [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]
)
TRI_QUAD_DEGREE2_WEIGHTS = np.full(3, 1.0 / 3.0)

_TRI_RULES = {
    2: (TRI_QUAD_DEGREE2_POINTS, TRI_QUAD_DEGREE2_WEIGHTS),
    5: (TRI_QUAD_POINTS, TRI_QUAD_WEIGHTS),
}

# 4-point degree-2 tetrahedron rule (barycentric, weights sum to 1).
_TA = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
_TB = (5.0 - np.sqrt(5.0)) / 20.0
TET_QUAD_POINTS = np.array(
    [
        [_TA, _TB, _TB, _TB],
        [_TB, _TA, _TB, _TB],
        [_TB, _TB, _TA, _TB],
        [_TB, _TB, _TB, _TA],
    ]
)
TET_QUAD_WEIGHTS = np.full(4, 0.25)


@dataclass
class NodalScalarField:
    """P1 scalar field: one coefficient per mesh node."""

    mesh: TetMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError(f"expected shape ({self.mesh.n_nodes},), got {self.values.shape}")

    def gradient(self) -> np.ndarray:
        """(M, 3) piecewise-constant gradient."""
        return self.mesh.element_gradient(self.values)

    def integral_mean(self) -> float:
        w = self.mesh.hat_integrals
        return float(w @ self.values / w.sum())


@dataclass
class NodalVectorField:
    """P1 vector field: a 3-vector per mesh node."""

    mesh: TetMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.n_nodes, 3):
            raise ValueError(f"expected shape ({self.mesh.n_nodes}, 3), got {self.values.shape}")

    def nodewise_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def integral_mean(self) -> np.ndarray:
        """Componentwise volume average over the mesh."""
        w = self.mesh.hat_integrals
        return (w @ self.values) / w.sum()


@dataclass
class FaceDensity:
    """P0 surface field: one constant per boundary face."""

    surface: SurfaceMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.surface.n_faces,):
            raise ValueError(
                f"expected shape ({self.surface.n_faces},), got {self.values.shape}"
            )

    def integral(self) -> float:
        return float(self.surface.areas @ self.values)


@dataclass
class SparseOperator:
    """Assembled sparse Galerkin matrix plus the data constrained solves need."""

    matrix: sparse.csr_matrix
    mesh: TetMesh
    symmetric: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self):
        return self.matrix.shape

    def boundary_node_mask(self) -> np.ndarray:
        if "bmask" not in self._cache:
            mask = np.zeros(self.mesh.n_nodes, dtype=bool)
            mask[self.mesh.boundary().boundary_nodes] = True
            self._cache["bmask"] = mask
        return self._cache["bmask"]


def assemble_mass(mesh: TetMesh) -> SparseOperator:
    """Consistent P1 mass matrix: M_ij = <eta_i, eta_j>."""
    vol = mesh.volumes
    local = (np.ones((4, 4)) + np.eye(4)) / 20.0
    data = vol[:, None, None] * local[None, :, :]
    return _scatter(mesh, data)


def assemble_stiffness(mesh: TetMesh) -> SparseOperator:
    """P1 stiffness matrix: K_ij = <grad eta_i, grad eta_j>."""
    g = mesh.hat_gradients
    data = np.einsum("mid,mjd->mij", g, g) * mesh.volumes[:, None, None]
    return _scatter(mesh, data)


def assemble_weighted_stiffness(mesh: TetMesh, weights: np.ndarray) -> SparseOperator:
    """Stiffness with a positive piecewise-constant coefficient.

    Args:
        weights: (M,) per-tet coefficient w_T; entries must be positive.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (mesh.n_tets,):
        raise ValueError(f"expected ({mesh.n_tets},) weights, got {weights.shape}")
    if np.any(weights <= 0.0) or not np.isfinite(weights).all():
        raise ValueError("element weights must be positive and finite")
    g = mesh.hat_gradients
    data = np.einsum("mid,mjd->mij", g, g) * (mesh.volumes * weights)[:, None, None]
    return _scatter(mesh, data)


def _scatter(mesh: TetMesh, element_blocks: np.ndarray) -> SparseOperator:
    rows = np.repeat(mesh.tets, 4, axis=1).ravel()
    cols = np.tile(mesh.tets, (1, 4)).ravel()
    matrix = sparse.coo_matrix(
        (element_blocks.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    ).tocsr()
    matrix.sum_duplicates()
    return SparseOperator(matrix=matrix, mesh=mesh)


def divergence_load(mesh: TetMesh, m_values: np.ndarray) -> np.ndarray:
    """Load vector b_i = <m, grad eta_i> for a nodal vector field m (exact)."""
    m_values = np.asarray(m_values, dtype=np.float64)
    cell_mean = m_values[mesh.tets].mean(axis=1) * mesh.volumes[:, None]
    contrib = np.einsum("mkd,md->mk", mesh.hat_gradients, cell_mean)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.tets.ravel(), contrib.ravel())
    return out


def _cg_compat(A, b, M=None, rtol=1e-10, maxiter=None, x0=None):
    try:
        return spla.cg(A, b, M=M, rtol=rtol, atol=0.0, maxiter=maxiter, x0=x0)
    except TypeError:  # scipy < 1.12 spelled the relative tolerance 'tol'
        return spla.cg(A, b, M=M, tol=rtol, atol=0.0, maxiter=maxiter, x0=x0)


def solve_spd(
    op: SparseOperator,
    rhs: np.ndarray,
    *,
    constraint: str = "none",
    dirichlet_nodes: np.ndarray | None = None,
    dirichlet_values: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Solve a symmetric positive (semi-)definite system with PCG.

    Args:
        op: assembled operator (stiffness or mass family).
        rhs: (N,) load vector.
        constraint: one of
            ``"none"`` - plain SPD solve;
            ``"zero-mean"`` - stiffness-type singular system; the rhs is
                projected onto the compatible subspace (component sum
                removed) and the solution is shifted to zero integral mean;
            ``"zero-dirichlet"`` - homogeneous Dirichlet on all boundary nodes;
            ``"dirichlet"`` - inhomogeneous data on ``dirichlet_nodes``.
        dirichlet_nodes / dirichlet_values: constrained node ids and values
            (``"dirichlet"`` only; ``"zero-dirichlet"`` derives both).
        tol: relative residual tolerance.
        max_iter: iteration cap; defaults to 10x the number of unknowns.

    Returns:
        (N,) solution; constraints hold exactly (Dirichlet rows are set, the
        zero-mean shift is applied after the solve), and the residual
        satisfies ||b - A x|| <= tol * ||b|| on the solved subsystem.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (op.shape[0],):
        raise ValueError(f"rhs shape {rhs.shape} does not match operator {op.shape}")
    A = op.matrix

    if constraint == "none":
        return _pcg(A, rhs, tol, max_iter)

    if constraint == "zero-mean":
        b = rhs - rhs.mean()
        x = _pcg(A, b, tol, max_iter)
        w = op.mesh.hat_integrals
        x -= (w @ x) / w.sum()
        return x

    if constraint in ("zero-dirichlet", "dirichlet"):
        if constraint == "zero-dirichlet":
            nodes = op.mesh.boundary().boundary_nodes
            values = np.zeros(nodes.size)
        else:
            if dirichlet_nodes is None or dirichlet_values is None:
                raise ValueError("dirichlet constraint requires nodes and values")
            nodes = np.asarray(dirichlet_nodes, dtype=np.int64)
            values = np.asarray(dirichlet_values, dtype=np.float64)
            if nodes.shape != values.shape:
                raise ValueError("dirichlet nodes/values shape mismatch")
        free = np.ones(op.shape[0], dtype=bool)
        free[nodes] = False
        x = np.zeros(op.shape[0])
        x[nodes] = values
        if free.any():
            b_free = rhs[free] - A[free][:, nodes] @ values
            x[free] = _pcg(A[free][:, free].tocsr(), b_free, tol, max_iter)
        return x

    raise ValueError(f"unknown constraint {constraint!r}")


def _pcg(A: sparse.csr_matrix, b: np.ndarray, tol: float, max_iter: int | None) -> np.ndarray:
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros(n)
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise ValueError("operator diagonal must be positive for the diagonal preconditioner")
    M = sparse.diags(1.0 / diag)
    cap = max_iter if max_iter is not None else 10 * n
    x, info = _cg_compat(A, b, M=M, rtol=tol, maxiter=cap)
    residual = np.linalg.norm(b - A @ x)
    if residual > tol * norm_b * (1.0 + 1e-6):
        raise RuntimeError(
            f"PCG did not converge: rel residual {residual / norm_b:.3e} (info={info})"
        )
    return x


def face_quadrature_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points and reference weights of a triangle rule."""
    if degree not in _TRI_RULES:
        raise ValueError(f"no triangle rule of degree {degree}; available: 2, 5")
    return _TRI_RULES[degree]


def face_quadrature(surface: SurfaceMesh, degree: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Physical quadrature points and weights of a triangle rule, per face.

    Args:
        degree: polynomial exactness of the rule, 5 (7 points, default) or
            2 (3 points).

    Returns:
        points (F, Q, 3) and weights (F, Q); weights include face areas, so
        summing ``w * g(points)`` integrates g over the surface.
    """
    if degree not in _TRI_RULES:
        raise ValueError(f"no triangle rule of degree {degree}; available: 2, 5")
    bary, ref_weights = _TRI_RULES[degree]
    v = surface.vertex_coords
    points = np.einsum("qk,fkd->fqd", bary, v)
    weights = surface.areas[:, None] * ref_weights[None, :]
    return points, weights


def integrate_faces(surface: SurfaceMesh, g) -> np.ndarray:
    """Per-face integrals of a point-evaluable function (triangle rule).

    Args:
        g: callable mapping (P, 3) points to (P,) values.

    Returns:
        (F,) array of integrals over each face.
    """
    points, weights = face_quadrature(surface)
    vals = np.asarray(g(points.reshape(-1, 3)), dtype=np.float64).reshape(points.shape[:2])
    return np.einsum("fq,fq->f", weights, vals)


def integrate_volume(mesh: TetMesh, g) -> float:
    """Integral of a point-evaluable function over the mesh (tet rule)."""
    p = mesh.nodes[mesh.tets]
    points = np.einsum("qk,mkd->mqd", TET_QUAD_POINTS, p)
    vals = np.asarray(g(points.reshape(-1, 3)), dtype=np.float64).reshape(points.shape[:2])
    return float(np.einsum("m,q,mq->", mesh.volumes, TET_QUAD_WEIGHTS, vals))


def l2_projection_faces(surface: SurfaceMesh, g) -> FaceDensity:
    """Facewise L2 projection of a point-evaluable function onto P0.

    The projection onto constants is the face average (integral / area),
    computed with the fixed triangle rule; exact for polynomials to degree 5,
    in particular an affine g projects to its centroid values.
    """
    return FaceDensity(surface, integrate_faces(surface, g) / surface.areas)


def clement_boundary_interpolation(surface: SurfaceMesh, g) -> np.ndarray:
    """Area-weighted face-average interpolation onto boundary nodes.

    Node value = (sum of the integrals of g over the faces touching the
    node) / (total area of those faces).  Accepts either a point-evaluable
    callable (integrated with the fixed triangle rule) or an (F,) array of
    precomputed per-face integrals of g, which is the form in which boundary
    integral operators deliver their output.

    Values are convex combinations of face averages: constants are
    reproduced exactly and the output range is contained in the range of g.

    Returns:
        (Nb,) nodal values ordered like ``surface.boundary_nodes``.
    """
    if callable(g):
        face_integrals = integrate_faces(surface, g)
    else:
        face_integrals = np.asarray(g, dtype=np.float64)
        if face_integrals.shape != (surface.n_faces,):
            raise ValueError(
                f"expected ({surface.n_faces},) face integrals, got {face_integrals.shape}"
            )
    acc = np.zeros(surface.boundary_nodes.size)
    np.add.at(acc, surface.local_face_indices.ravel(), np.repeat(face_integrals, 3))
    return acc / surface.node_patch_areas


def assemble_boundary_mass(surface: SurfaceMesh) -> sparse.csr_matrix:
    """Mixed boundary mass Mb[f, n] = integral of hat n over face f.

    Rows are faces (P0 test functions), columns are boundary nodes in the
    ``surface.boundary_nodes`` local ordering.  For P1 hats the entry is
    |F|/3 for each of the three vertices of F.
    """
    f = surface.n_faces
    rows = np.repeat(np.arange(f), 3)
    cols = surface.local_face_indices.ravel()
    data = np.repeat(surface.areas / 3.0, 3)
    return sparse.coo_matrix(
        (data, (rows, cols)), shape=(f, surface.boundary_nodes.size)
    ).tocsr()


def normal_derivative(u: NodalScalarField, surface: SurfaceMesh) -> FaceDensity:
    """Elementwise outward normal derivative of a P1 field on the boundary.

    Each face takes the (constant) gradient of its parent tet dotted with
    the outward unit normal.
    """
    grad = u.gradient()[surface.parent_tets]
    return FaceDensity(surface, np.einsum("fd,fd->f", grad, surface.normals))


def trace_values(values: np.ndarray, surface: SurfaceMesh) -> np.ndarray:
    """Restrict nodal values to the boundary nodes (local ordering)."""
    return np.asarray(values)[surface.boundary_nodes]


def l2_inner(mass: SparseOperator, a: np.ndarray, b: np.ndarray) -> float:
    """L2 inner product of nodal fields through the mass matrix.

    Accepts (N,) scalars or (N, 3) vectors; vector fields sum over
    components.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 1:
        return float(a @ (mass.matrix @ b))
    return float(np.einsum("nd,nd->", a, mass.matrix @ b))


def l2_norm(mass: SparseOperator, a: np.ndarray) -> float:
    """L2 norm of a nodal scalar or vector field."""
    return float(np.sqrt(max(l2_inner(mass, a, a), 0.0)))


def h1_seminorm_sq(stiffness: SparseOperator, a: np.ndarray) -> float:
    """Squared gradient seminorm of a nodal scalar or vector field."""
    return max(l2_inner(stiffness, a, a), 0.0)
