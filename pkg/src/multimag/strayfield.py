"""Hybrid FEM-BEM stray-field operators on the magnetic body.

Both methods compute pi(m) = grad(u1) where u1 is the magnetostatic
potential of the magnetization m, split as u1 = u11 + u12 with u11 a purely
interior FEM solve and u12 a harmonic correction whose Dirichlet trace is
produced by a boundary integral operator:

* Fredkin-Koehler: u11 solves the zero-mean Neumann-type problem
  <grad u11, grad v> = <m, grad v>; the trace of u12 is the interior trace
  of the double layer potential of trace(u11), realized as the Galerkin
  face integrals (K - 1/2 Mb) applied to the trace and pushed through the
  area-weighted boundary interpolation.

* Garcia-Cervera-Roma: u11 solves the same equation with zero Dirichlet
  data; the trace of u12 is the single layer potential of the face density
  phi = P0(m.nu) - du11/dnu, again via Galerkin face integrals plus
  boundary interpolation.

The returned field is the elementwise gradient of u11 + u12 lifted to nodes
by volume-weighted averaging, so it lives in the same nodal space the time
integrator consumes.  For a uniformly magnetized sphere the exact operator
gives grad(u1) = m/3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bem import BemOperatorSet, assemble_bem
from .fem import (
    NodalScalarField,
    NodalVectorField,
    SparseOperator,
    assemble_mass,
    assemble_stiffness,
    clement_boundary_interpolation,
    divergence_load,
    normal_derivative,
    solve_spd,
)
from .fields import FieldContribution
from .mesh import SurfaceMesh, TetMesh


def _mesh_fingerprint(mesh: TetMesh) -> tuple:
    return (mesh.n_nodes, mesh.n_tets, float(mesh.nodes.sum()), float(mesh.volumes.sum()))


@dataclass
class StrayfieldWorkspace:
    """Per-mesh assembled state shared by repeated stray-field evaluations."""

    mesh: TetMesh
    surface: SurfaceMesh
    stiffness: SparseOperator
    mass: SparseOperator
    bem: BemOperatorSet
    method: str = "fk"
    _fingerprint: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.method not in ("fk", "gcr"):
            raise ValueError(f"unknown stray-field method {self.method!r}")
        if not self._fingerprint:
            self._fingerprint = _mesh_fingerprint(self.mesh)

    def verify(self) -> None:
        """Check the assembled operators still describe the stored mesh."""
        if _mesh_fingerprint(self.mesh) != self._fingerprint:
            raise RuntimeError("workspace mesh changed after assembly")
        if self.stiffness.mesh is not self.mesh or self.bem.surface is not self.surface:
            raise RuntimeError("workspace operators do not belong to the stored mesh")


def make_strayfield_workspace(
    mesh: TetMesh, method: str = "fk", *, quad_degree: int = 5
) -> StrayfieldWorkspace:
    surface = mesh.boundary()
    return StrayfieldWorkspace(
        mesh=mesh,
        surface=surface,
        stiffness=assemble_stiffness(mesh),
        mass=assemble_mass(mesh),
        bem=assemble_bem(surface, quad_degree=quad_degree),
        method=method,
    )


def _lifted_gradient(mesh: TetMesh, values: np.ndarray) -> NodalVectorField:
    return NodalVectorField(mesh, mesh.lift_element_field(mesh.element_gradient(values)))


def fk_strayfield(ws: StrayfieldWorkspace, m: NodalVectorField) -> NodalVectorField:
    """Fredkin-Koehler stray-field evaluation, pi(m) = grad(u11 + u12)."""
    ws.verify()
    rhs = divergence_load(ws.mesh, m.values)
    u11 = solve_spd(ws.stiffness, rhs, constraint="zero-mean")
    trace = u11[ws.surface.boundary_nodes]
    face_integrals = ws.bem.double_layer @ trace - 0.5 * (ws.bem.boundary_mass @ trace)
    dirichlet = clement_boundary_interpolation(ws.surface, face_integrals)
    u12 = solve_spd(
        ws.stiffness,
        np.zeros(ws.mesh.n_nodes),
        constraint="dirichlet",
        dirichlet_nodes=ws.surface.boundary_nodes,
        dirichlet_values=dirichlet,
    )
    return _lifted_gradient(ws.mesh, u11 + u12)


def p0_normal_trace(surface: SurfaceMesh, m_values: np.ndarray) -> np.ndarray:
    """Facewise L2 projection of the normal trace m.nu of a nodal field.

    For P1 data the projection onto face constants is the vertex average,
    exactly.
    """
    face_mean = m_values[surface.faces].mean(axis=1)
    return np.einsum("fd,fd->f", face_mean, surface.normals)


def gcr_strayfield(ws: StrayfieldWorkspace, m: NodalVectorField) -> NodalVectorField:
    """Garcia-Cervera-Roma stray-field evaluation, pi(m) = grad(u11 + u12)."""
    ws.verify()
    rhs = divergence_load(ws.mesh, m.values)
    u11 = solve_spd(ws.stiffness, rhs, constraint="zero-dirichlet")
    flux = normal_derivative(NodalScalarField(ws.mesh, u11), ws.surface)
    phi = p0_normal_trace(ws.surface, m.values) - flux.values
    face_integrals = ws.bem.single_layer @ phi
    dirichlet = clement_boundary_interpolation(ws.surface, face_integrals)
    u12 = solve_spd(
        ws.stiffness,
        np.zeros(ws.mesh.n_nodes),
        constraint="dirichlet",
        dirichlet_nodes=ws.surface.boundary_nodes,
        dirichlet_values=dirichlet,
    )
    return _lifted_gradient(ws.mesh, u11 + u12)


@dataclass
class StrayfieldContribution(FieldContribution):
    """Stray field as an effective-field term (linear in m, self-adjoint
    up to discretization error, so it participates in the quadratic
    interaction-energy bookkeeping)."""

    workspace: StrayfieldWorkspace
    name: str = "strayfield"
    linear_self_adjoint: bool = True

    def evaluate(self, m, zeta=None, time_index=0):
        if self.workspace.method == "fk":
            return fk_strayfield(self.workspace, m)
        return gcr_strayfield(self.workspace, m)
