"""Macroscopic coupling: the magnetizable-environment field on the body.

The magnetic body occupies Omega_1; a second, possibly nonlinearly
magnetizable body occupies Omega_2 at positive distance.  The contribution
pi(m, f) = grad(u2) of the environment to the effective field on Omega_1 is
computed by the pipeline

  1. u11 on Omega_1:    <grad u11, grad v> = <m, grad v>   (zero mean)
  2. u1 on Omega_2:     interior Dirichlet extension of the double layer
                        potential of trace(u11), evaluated across the gap
  3. u_app on Omega_2:  <grad u_app, grad v> = -<f, grad v> (zero mean)
  4. (phi, u) on Omega_2/Gamma_2: stabilized nonlinear one-equation FEM-BEM
                        coupling (below)
  5. u2 on Omega_1:     interior Dirichlet extension of the representation
                        formula -V2 phi + K2 (u - u1 - u_app)

The coupling system for the total potential u in Omega_2 and the exterior
normal derivative phi on Gamma_2 reads, with g(t) = t + chi(t) t,

  <(1 + chi(|grad u|)) grad u, grad v> - <phi, v>_Gamma
        = <lambda, v>_Gamma - <f, grad v>            for all v,
  <V phi + (1/2 - K) u, psi>_Gamma
        = <(1/2 - K)(u1 + u_app), psi>_Gamma          for all psi,

where lambda is the conormal flux of u1.  The plain Galerkin operator of
this system is not strongly monotone; it is stabilized by the rank-one
augmentation A(x) = A~(x) + s (s.x) and b = b~ + (sum of the BEM-block
entries of b~) s, where s.x is the BEM row tested with psi = 1.  Constants
satisfy s.x = <V phi + (1/2-K)u, 1> = <V phi, 1> + <u, 1> (the double layer
of a constant has interior trace -1, so (1/2 - K)1 = 1), which is what
restores definiteness on the constant direction.  Any solution of the plain
system solves the stabilized one and vice versa.

Material laws supply chi with derivative bounds g' in [gamma, lip]; the
stabilized operator is strongly monotone when gamma > 1/4, which is
enforced at solver entry.  The nonlinear solve is a damped Zarantonello
iteration x <- x - delta P^-1 (A(x) - b) with delta = gamma / lip^2 and P
the chi == 0 stabilized matrix, or optionally a Kacanov iteration that
refreezes the weights chi(|grad u|) and re-solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import lu_factor, lu_solve

from .bem import (
    BemOperatorSet,
    assemble_bem,
    eval_double_layer,
    eval_single_layer,
    solid_angles,
)
from .fem import (
    FaceDensity,
    NodalScalarField,
    NodalVectorField,
    SparseOperator,
    assemble_stiffness,
    assemble_weighted_stiffness,
    clement_boundary_interpolation,
    divergence_load,
    face_quadrature,
    solve_spd,
)
from .fields import FieldContribution
from .mesh import SurfaceMesh, TetMesh


@dataclass(frozen=True)
class MaterialLaw:
    """Susceptibility law chi(t) with monotonicity bounds for g(t) = t + chi(t) t.

    Attributes:
        kind: one of ``zero``, ``linear``, ``tanh``, ``rational``.
        params: law coefficients (see :func:`material_law`).
        gamma: lower bound of g' (strong monotonicity constant).
        lip: upper bound of g' (Lipschitz constant).
    """

    kind: str
    params: tuple
    gamma: float
    lip: float

    def chi(self, t: np.ndarray) -> np.ndarray:
        """chi(t) for t >= 0, vectorized."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "linear":
            return np.full_like(t, self.params[0])
        if self.kind == "tanh":
            c1, c2 = self.params
            with np.errstate(invalid="ignore", divide="ignore"):
                out = np.where(t > 0.0, c1 * np.tanh(c2 * t) / np.where(t > 0, t, 1.0), c1 * c2)
            return out
        c1, c2, c3, c4 = self.params
        return (c1 + c2 * t) / (1.0 + c3 * t + c4 * t**2)

    def g(self, t: np.ndarray) -> np.ndarray:
        """g(t) = t + chi(t) t."""
        t = np.asarray(t, dtype=np.float64)
        return t + self.chi(t) * t

    @property
    def is_linear(self) -> bool:
        return self.kind in ("zero", "linear")


def material_law(kind: str, *params: float) -> MaterialLaw:
    """Construct a material law and derive its monotonicity bounds.

    * ``zero``: chi == 0, g' == 1.
    * ``linear c``: chi == c >= 0, g' == 1 + c.
    * ``tanh c1 c2``: chi(t) = c1 tanh(c2 t)/t, so g(t) = t + c1 tanh(c2 t)
      and g'(t) = 1 + c1 c2 sech^2(c2 t) in [1, 1 + c1 c2] for c1, c2 > 0.
    * ``rational c1 c2 c3 c4``: chi(t) = (c1 + c2 t)/(1 + c3 t + c4 t^2);
      bounds are estimated by sampling g' on a log-spaced grid over
      [0, 1e6] with a 5% safety margin and then validated.
    """
    if kind == "zero":
        if params:
            raise ValueError("zero law takes no parameters")
        return MaterialLaw(kind, (), gamma=1.0, lip=1.0)
    if kind == "linear":
        (c,) = params
        if c < 0.0:
            raise ValueError("linear susceptibility must be nonnegative")
        return MaterialLaw(kind, (float(c),), gamma=1.0 + c, lip=1.0 + c)
    if kind == "tanh":
        c1, c2 = params
        if c1 <= 0.0 or c2 <= 0.0:
            raise ValueError("tanh law requires positive c1, c2")
        return MaterialLaw(kind, (float(c1), float(c2)), gamma=1.0, lip=1.0 + c1 * c2)
    if kind == "rational":
        c1, c2, c3, c4 = (float(p) for p in params)
        law = MaterialLaw(kind, (c1, c2, c3, c4), gamma=1.0, lip=1.0)
        ts = np.concatenate([[0.0], np.logspace(-6, 6, 4001)])
        dg = _numeric_dg(law, ts)
        if not np.isfinite(dg).all():
            raise ValueError("rational law has a non-finite derivative on [0, 1e6]")
        gamma = float(dg.min()) * 0.95 if dg.min() > 0 else float(dg.min()) * 1.05
        lip = float(dg.max()) * 1.05
        if gamma <= 0.0:
            raise ValueError(f"rational law is not monotone: min g' = {dg.min():.4g}")
        return MaterialLaw(kind, (c1, c2, c3, c4), gamma=gamma, lip=lip)
    raise ValueError(f"unknown material law {kind!r}")


def _numeric_dg(law: MaterialLaw, ts: np.ndarray) -> np.ndarray:
    h = np.maximum(1e-7 * np.maximum(ts, 1.0), 1e-9)
    return (law.g(ts + h) - law.g(np.maximum(ts - h, 0.0))) / (h + np.minimum(ts, h))


def material_g(law: MaterialLaw, t: float) -> float:
    """g(t) = t + chi(t) t for a nonnegative scalar t."""
    if t < 0.0:
        raise ValueError(f"g is defined for nonnegative arguments, got {t}")
    return float(law.g(t))


@dataclass
class CouplingState:
    """Result of one coupling solve."""

    phi: FaceDensity
    u: NodalScalarField
    residual: float
    iterations: int
    residual_history: list


@dataclass
class CouplingData:
    """Right-hand-side data of the coupling system."""

    flux: np.ndarray  # (F,) conormal flux lambda of u1 on Gamma_2
    f: np.ndarray  # (N2, 3) applied-field nodal values on Omega_2
    gamma_trace: np.ndarray  # (Nb,) trace of u1 + u_app, local boundary order


@dataclass
class CouplingWorkspace:
    """Assembled operators of the coupling problem on Omega_2."""

    mesh: TetMesh
    surface: SurfaceMesh
    stiffness: SparseOperator
    bem: BemOperatorSet
    s_vec: np.ndarray = field(default=None, repr=False)  # stabilization vector
    p_lu: tuple = field(default=None, repr=False)  # LU of the chi==0 matrix

    def __post_init__(self) -> None:
        if self.s_vec is None:
            n2 = self.mesh.n_nodes
            nb = self.surface.boundary_nodes.size
            ones = np.ones(self.surface.n_faces)
            s_u_local = 0.5 * (self.bem.boundary_mass.T @ ones) - self.bem.double_layer.T @ ones
            s_u = np.zeros(n2)
            s_u[self.surface.boundary_nodes] = s_u_local
            s_phi = self.bem.single_layer.T @ ones
            self.s_vec = np.concatenate([s_u, s_phi])
        if self.p_lu is None:
            self.p_lu = lu_factor(self._dense_matrix(np.ones(self.mesh.n_tets)))

    @property
    def n_u(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_phi(self) -> int:
        return self.surface.n_faces

    def _dense_matrix(self, weights: np.ndarray) -> np.ndarray:
        """Stabilized coupling matrix for frozen element weights."""
        n2, f = self.n_u, self.n_phi
        bnodes = self.surface.boundary_nodes
        A = np.zeros((n2 + f, n2 + f))
        A[:n2, :n2] = assemble_weighted_stiffness(self.mesh, weights).matrix.toarray()
        mb = self.bem.boundary_mass.toarray()
        A[bnodes, n2:] -= mb.T
        A[n2:, bnodes] += 0.5 * mb - self.bem.double_layer
        A[n2:, n2:] += self.bem.single_layer
        return A + np.outer(self.s_vec, self.s_vec)

    def apply(self, law: MaterialLaw, x: np.ndarray) -> np.ndarray:
        """Stabilized nonlinear operator A(x)."""
        u = x[: self.n_u]
        phi = x[self.n_u :]
        weights = 1.0 + law.chi(np.linalg.norm(self.mesh.element_gradient(u), axis=1))
        k_w = assemble_weighted_stiffness(self.mesh, weights)
        out = np.empty_like(x)
        out[: self.n_u] = k_w.matrix @ u
        bnodes = self.surface.boundary_nodes
        out[: self.n_u][bnodes] -= self.bem.boundary_mass.T @ phi
        out[self.n_u :] = self.bem.single_layer @ phi + (
            0.5 * (self.bem.boundary_mass @ u[bnodes]) - self.bem.double_layer @ u[bnodes]
        )
        return out + self.s_vec * (self.s_vec @ x)

    def rhs(self, data: CouplingData) -> np.ndarray:
        """Stabilized right-hand side b."""
        n2 = self.n_u
        b = np.zeros(n2 + self.n_phi)
        b[: n2][self.surface.boundary_nodes] = self.bem.boundary_mass.T @ data.flux
        b[:n2] -= divergence_load(self.mesh, data.f)
        b[n2:] = 0.5 * (self.bem.boundary_mass @ data.gamma_trace) - (
            self.bem.double_layer @ data.gamma_trace
        )
        return b + self.s_vec * b[n2:].sum()


def make_coupling_workspace(mesh: TetMesh, *, quad_degree: int = 5) -> CouplingWorkspace:
    surface = mesh.boundary()
    return CouplingWorkspace(
        mesh=mesh,
        surface=surface,
        stiffness=assemble_stiffness(mesh),
        bem=assemble_bem(surface, quad_degree=quad_degree),
    )


def solve_uapp(ws: CouplingWorkspace, f_values: np.ndarray) -> NodalScalarField:
    """Zero-mean auxiliary potential: <grad u_app, grad v> = -<f, grad v>."""
    rhs = -divergence_load(ws.mesh, np.broadcast_to(f_values, (ws.mesh.n_nodes, 3)))
    return NodalScalarField(ws.mesh, solve_spd(ws.stiffness, rhs, constraint="zero-mean"))


def conormal_flux(ws: CouplingWorkspace, u_values: np.ndarray) -> FaceDensity:
    """Variationally consistent P0 conormal flux of a nodal field.

    Returns the minimum-norm (area-weighted) face density lambda with
    <lambda, v>_Gamma = <grad u, grad v> for every boundary hat v.  For a
    discrete-harmonic u this makes lambda the exact discrete flux, so
    substituting u back into the coupled system leaves no residual; the
    elementwise normal derivative would leave an O(h) one.
    """
    bnodes = ws.surface.boundary_nodes
    residual = (ws.stiffness.matrix @ u_values)[bnodes]
    mb = ws.bem.boundary_mass  # (F, Nb)
    inv_area = sparse.diags(1.0 / ws.surface.areas)
    normal_matrix = (mb.T @ inv_area @ mb).toarray()
    y = np.linalg.solve(normal_matrix, residual)
    return FaceDensity(ws.surface, inv_area @ (mb @ y))


def solve_coupling(
    ws: CouplingWorkspace,
    data: CouplingData,
    law: MaterialLaw,
    *,
    scheme: str = "zarantonello",
    tol_nl: float = 1e-8,
    max_iter: int = 200,
) -> CouplingState:
    """Solve the stabilized coupling system for (u, phi).

    Linear laws are solved directly in one step.  Nonlinear laws iterate
    (Zarantonello or Kacanov) until the preconditioned residual
    ||P^-1 (A(x) - b)||_2 falls below ``tol_nl`` relative to ||P^-1 b||_2;
    the residual history must decrease strictly monotonically, and the
    iteration cap aborts with the history attached.
    """
    if not law.gamma > 0.25:
        raise ValueError(
            f"material monotonicity constant gamma = {law.gamma:.4g} must exceed 1/4 "
            "for the stabilized coupling to be strongly monotone"
        )
    if scheme not in ("zarantonello", "kacanov"):
        raise ValueError(f"unknown scheme {scheme!r}")
    b = ws.rhs(data)
    norm_pb = np.linalg.norm(lu_solve(ws.p_lu, b))

    def rel_residual(x: np.ndarray) -> float:
        r = ws.apply(law, x) - b
        z = np.linalg.norm(lu_solve(ws.p_lu, r))
        return z / norm_pb if norm_pb > 0.0 else z

    if law.is_linear:
        weights = np.full(ws.mesh.n_tets, 1.0 + (law.params[0] if law.kind == "linear" else 0.0))
        x = np.linalg.solve(ws._dense_matrix(weights), b)
        res = rel_residual(x)
        return _pack_state(ws, x, res, 1, [res])

    x = np.zeros(ws.n_u + ws.n_phi)
    history: list[float] = []
    delta = law.gamma / law.lip**2
    for iteration in range(1, max_iter + 1):
        r = ws.apply(law, x) - b
        z = lu_solve(ws.p_lu, r)
        res = np.linalg.norm(z) / norm_pb if norm_pb > 0.0 else np.linalg.norm(z)
        if history and res >= history[-1] and res > tol_nl:
            raise RuntimeError(
                f"residual increased at iteration {iteration}: "
                f"{history[-1]:.6e} -> {res:.6e}; history: {history}"
            )
        history.append(res)
        if res <= tol_nl:
            return _pack_state(ws, x, res, iteration, history)
        if scheme == "zarantonello":
            x = x - delta * z
        else:
            weights = 1.0 + law.chi(
                np.linalg.norm(ws.mesh.element_gradient(x[: ws.n_u]), axis=1)
            )
            x = np.linalg.solve(ws._dense_matrix(weights), b)
    raise RuntimeError(
        f"coupling solve did not reach tol {tol_nl:g} within {max_iter} iterations; "
        f"last residuals: {history[-5:]}"
    )


def _pack_state(ws, x, res, iterations, history) -> CouplingState:
    return CouplingState(
        phi=FaceDensity(ws.surface, x[ws.n_u :]),
        u=NodalScalarField(ws.mesh, x[: ws.n_u]),
        residual=res,
        iterations=iterations,
        residual_history=history,
    )


@dataclass
class MultiscaleWorkspace:
    """Assembled state of the full two-domain pipeline."""

    mesh1: TetMesh
    surface1: SurfaceMesh
    stiffness1: SparseOperator
    coupling: CouplingWorkspace

    def __post_init__(self) -> None:
        _check_separated(self.surface1, self.coupling.surface)


def _check_separated(s1: SurfaceMesh, s2: SurfaceMesh) -> None:
    """The two bodies must be disjoint with positive distance."""
    inside_2 = solid_angles(s1, s2.nodes[s2.boundary_nodes])
    inside_1 = solid_angles(s2, s1.nodes[s1.boundary_nodes])
    if np.any(inside_2 < -2.0 * np.pi) or np.any(inside_1 < -2.0 * np.pi):
        raise ValueError("domains overlap: boundary nodes of one body lie inside the other")
    d1 = s1.nodes[s1.boundary_nodes]
    d2 = s2.nodes[s2.boundary_nodes]
    gap = np.sqrt(
        ((d1[:, None, :] - d2[None, :, :]) ** 2).sum(axis=2).min()
    )
    if not gap > 0.0:
        raise ValueError("domains touch: boundary node distance is zero")


def make_multiscale_workspace(
    mesh1: TetMesh, mesh2: TetMesh, *, quad_degree: int = 5
) -> MultiscaleWorkspace:
    return MultiscaleWorkspace(
        mesh1=mesh1,
        surface1=mesh1.boundary(),
        stiffness1=assemble_stiffness(mesh1),
        coupling=make_coupling_workspace(mesh2, quad_degree=quad_degree),
    )


def transfer_u1_to_omega2(
    mws: MultiscaleWorkspace, u11_values: np.ndarray
) -> NodalScalarField:
    """Interior Dirichlet extension of the Gamma_1 double layer of trace(u11).

    The potential is evaluated at the Gamma_2 face quadrature points (the
    integrals are regular since the domains are separated), interpolated
    onto Gamma_2 nodes by area-weighted face averages, and extended into
    Omega_2 harmonically.
    """
    cws = mws.coupling
    trace1 = u11_values[mws.surface1.boundary_nodes]
    points, weights = face_quadrature(cws.surface)
    vals = eval_double_layer(mws.surface1, trace1, points.reshape(-1, 3))
    face_integrals = np.einsum("fq,fq->f", weights, vals.reshape(weights.shape))
    boundary_vals = clement_boundary_interpolation(cws.surface, face_integrals)
    u1 = solve_spd(
        cws.stiffness,
        np.zeros(cws.mesh.n_nodes),
        constraint="dirichlet",
        dirichlet_nodes=cws.surface.boundary_nodes,
        dirichlet_values=boundary_vals,
    )
    return NodalScalarField(cws.mesh, u1)


def multiscale_field(
    mws: MultiscaleWorkspace,
    m: NodalVectorField,
    f_values: np.ndarray,
    law: MaterialLaw,
    *,
    scheme: str = "zarantonello",
    tol_nl: float = 1e-8,
    max_iter: int = 200,
) -> NodalVectorField:
    """Environment contribution pi(m, f) = grad(u2) on Omega_1.

    Runs the full pipeline: u11 on Omega_1, transfer to Omega_2, auxiliary
    potential, stabilized coupling solve, and the representation-formula
    transfer back to Omega_1.  Stage failures are re-raised with the stage
    named.
    """
    cws = mws.coupling
    f_values = np.broadcast_to(np.asarray(f_values, dtype=np.float64), (cws.mesh.n_nodes, 3))

    stage = "interior potential u11 on Omega_1"
    try:
        rhs = divergence_load(mws.mesh1, m.values)
        u11 = solve_spd(mws.stiffness1, rhs, constraint="zero-mean")
        stage = "transfer of u1 onto Omega_2"
        u1 = transfer_u1_to_omega2(mws, u11)
        stage = "auxiliary potential u_app"
        uapp = solve_uapp(cws, f_values)
        stage = "conormal flux of u1"
        lam = conormal_flux(cws, u1.values)
        stage = "coupling solve"
        trace = (u1.values + uapp.values)[cws.surface.boundary_nodes]
        data = CouplingData(flux=lam.values, f=f_values, gamma_trace=trace)
        state = solve_coupling(
            cws, data, law, scheme=scheme, tol_nl=tol_nl, max_iter=max_iter
        )
        stage = "representation formula transfer to Omega_1"
        w = state.u.values - u1.values - uapp.values
        points, weights = face_quadrature(mws.surface1)
        flat = points.reshape(-1, 3)
        vals = -eval_single_layer(cws.surface, state.phi.values, flat) + eval_double_layer(
            cws.surface, w[cws.surface.boundary_nodes], flat
        )
        face_integrals = np.einsum("fq,fq->f", weights, vals.reshape(weights.shape))
        boundary_vals = clement_boundary_interpolation(mws.surface1, face_integrals)
        stage = "interior extension of u2 on Omega_1"
        u2 = solve_spd(
            mws.stiffness1,
            np.zeros(mws.mesh1.n_nodes),
            constraint="dirichlet",
            dirichlet_nodes=mws.surface1.boundary_nodes,
            dirichlet_values=boundary_vals,
        )
    except Exception as exc:
        raise RuntimeError(f"multiscale pipeline failed at stage: {stage}") from exc
    return NodalVectorField(
        mws.mesh1, mws.mesh1.lift_element_field(mws.mesh1.element_gradient(u2))
    )


@dataclass
class MultiscaleContribution(FieldContribution):
    """Environment field as an effective-field term; zeta carries f."""

    workspace: MultiscaleWorkspace
    law: MaterialLaw
    scheme: str = "zarantonello"
    tol_nl: float = 1e-8
    max_iter: int = 200
    name: str = "multiscale"
    linear_self_adjoint: bool = False

    def evaluate(self, m, zeta=None, time_index=0):
        if zeta is None:
            raise ValueError("multiscale contribution needs the applied field as zeta")
        f_values = zeta.values if isinstance(zeta, NodalVectorField) else np.asarray(zeta)
        return multiscale_field(
            self.workspace,
            m,
            f_values,
            self.law,
            scheme=self.scheme,
            tol_nl=self.tol_nl,
            max_iter=self.max_iter,
        )
