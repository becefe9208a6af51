"""Capacitary potentials and capacity functionals on the slit mesh.

The discrete potential for boundary data g on the slit minimizes the
Dirichlet energy over nodal fields equal to g on slit nodes and zero on
the outer boundary; its energy is the discrete capacity.  All potentials
for one mesh share a single factorization of the reduced stiffness.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import splu

from . import fem
from .errors import EmptySlit, MeshMismatch, NotOrthonormal, ZeroCapacity
from .geometry import Mesh


@dataclass(frozen=True)
class CapacityResult:
    """Potential (full nodal vector), its energy, and its L2 mass."""

    potential: np.ndarray
    cap_value: float
    potential_l2_sq: float
    mesh_id: int


@dataclass(frozen=True)
class PerturbationForm:
    """Matrix of the capacity-minus-mass form on an eigenbasis.

    ``mu`` holds its ascending eigenvalues; ``chi_sq`` is the largest
    eigenvalue of the mutual-capacity Gram matrix, i.e. the largest
    capacity over unit-norm members of the eigenspace.
    """

    dimension: int
    matrix: np.ndarray
    mu: np.ndarray
    chi_sq: float
    gram: np.ndarray  # mutual capacities Cap(s, u_i, u_j)
    l2_ratios: np.ndarray  # potential L2 mass over capacity, per basis vector


class CapacityWorkspace:
    """Shared factorization for all capacity solves on one slit mesh."""

    def __init__(self, mesh: Mesh, stiffness=None, mass=None):
        if len(mesh.slit_nodes) == 0:
            raise EmptySlit("mesh has no slit nodes")
        if stiffness is None or mass is None:
            stiffness, mass = fem.assemble(mesh)
        self.mesh = mesh
        self.k_full = stiffness.to_csr()
        self.m_full = mass.to_csr()
        n = mesh.n_vertices
        constrained = np.concatenate([mesh.boundary_nodes, mesh.slit_nodes])
        keep = np.ones(n, dtype=bool)
        keep[constrained] = False
        self._free = np.flatnonzero(keep)
        self._k_free = self.k_full[self._free][:, self._free].tocsc()
        self._k_free_slit = self.k_full[self._free][:, mesh.slit_nodes].tocsr()
        self._lu = splu(self._k_free)

    def potential(self, boundary_data) -> CapacityResult:
        """Capacitary potential for nodal data on the slit chain.

        `boundary_data` is aligned with mesh.slit_nodes; a scalar is
        broadcast (data 1.0 gives the plain slit capacity).
        """
        data = np.broadcast_to(
            np.asarray(boundary_data, dtype=float), (len(self.mesh.slit_nodes),)
        ).copy()
        if not np.all(np.isfinite(data)):
            raise ValueError("slit data must be finite")
        v = np.zeros(self.mesh.n_vertices)
        v[self.mesh.slit_nodes] = data
        if np.any(data):
            rhs = -(self._k_free_slit @ data)
            v[self._free] = self._lu.solve(rhs)
        cap = fem.energy(self.k_full, v, v)
        l2 = float(v @ (self.m_full @ v))
        return CapacityResult(v, cap, l2, id(self.mesh))

    def potential_from(self, fn) -> CapacityResult:
        """Potential for data sampled from a callable f(x, y) on slit nodes."""
        pts = self.mesh.vertices[self.mesh.slit_nodes]
        return self.potential(np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float))

    def mutual(self, a: CapacityResult, b: CapacityResult) -> float:
        return mutual_capacity(self.k_full, a, b)

    def perturbation_form(self, eigenbasis: np.ndarray, lam: float) -> PerturbationForm:
        """Form entries Cap(s, u_i, u_j) - lam * int V_i V_j on the basis.

        `eigenbasis` columns are full nodal vectors, M-orthonormal; their
        slit traces supply the capacity data.
        """
        basis = np.atleast_2d(np.asarray(eigenbasis, dtype=float))
        if basis.shape[0] == self.mesh.n_vertices:
            pass
        elif basis.shape[1] == self.mesh.n_vertices:
            basis = basis.T
        else:
            raise MeshMismatch("eigenbasis length does not match the mesh")
        if lam <= 0:
            raise ValueError("eigenvalue must be positive")
        m = basis.shape[1]
        gram_basis = basis.T @ (self.m_full @ basis)
        if np.max(np.abs(gram_basis - np.eye(m))) > 1e-6:
            raise NotOrthonormal(
                "eigenbasis is not M-orthonormal within 1e-6"
            )
        results = [
            self.potential(basis[self.mesh.slit_nodes, i]) for i in range(m)
        ]
        caps = np.empty((m, m))
        l2s = np.empty((m, m))
        for i in range(m):
            for j in range(i, m):
                caps[i, j] = caps[j, i] = self.mutual(results[i], results[j])
                w = float(results[i].potential @ (self.m_full @ results[j].potential))
                l2s[i, j] = l2s[j, i] = w
        matrix = caps - lam * l2s
        mu = np.sort(eigh(matrix, eigvals_only=True))
        chi_sq = float(np.max(eigh(caps, eigvals_only=True)))
        ratios = np.array(
            [
                l2s[i, i] / caps[i, i] if caps[i, i] > 0 else np.nan
                for i in range(m)
            ]
        )
        return PerturbationForm(
            dimension=m,
            matrix=matrix,
            mu=np.asarray(mu),
            chi_sq=chi_sq,
            gram=caps,
            l2_ratios=ratios,
        )


def potential(mesh: Mesh, boundary_data) -> CapacityResult:
    """One-shot capacitary potential (assembles and factors the mesh)."""
    return CapacityWorkspace(mesh).potential(boundary_data)


def mutual_capacity(stiffness_full, v_u: CapacityResult, v_v: CapacityResult) -> float:
    """Polarized capacity: the stiffness inner product of two potentials."""
    if v_u.mesh_id != v_v.mesh_id:
        raise MeshMismatch("potentials come from different meshes")
    k = (
        stiffness_full.to_csr()
        if hasattr(stiffness_full, "to_csr")
        else stiffness_full
    )
    return fem.energy(k, v_u.potential, v_v.potential)


def potential_l2_ratio(result: CapacityResult) -> float:
    """L2 mass of the potential divided by its capacity."""
    if result.cap_value <= 0.0:
        raise ZeroCapacity("capacity is zero; the ratio is undefined")
    return result.potential_l2_sq / result.cap_value
