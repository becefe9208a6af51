"""P1 finite element operators on a triangulation.

Element integration is closed-form: stiffness from the constant shape
gradients, consistent mass as (area/12) * [[2,1,1],[1,2,1],[1,1,2]].
Dirichlet data is imposed by elimination, keeping the reduced system
symmetric positive definite and making discrete energies exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import (
    DegenerateTriangle,
    DimensionMismatch,
    IndexOutOfRange,
    NotPositiveDefinite,
)
from .geometry import Mesh


@dataclass(frozen=True)
class SparseSymMatrix:
    """Symmetric sparse matrix stored as its upper triangle in COO form."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        if np.any(self.rows > self.cols):
            raise ValueError("only upper-triangle entries may be stored")

    def to_csr(self) -> sparse.csr_matrix:
        upper = sparse.coo_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self.n, self.n)
        ).tocsr()
        strict = sparse.triu(upper, k=1)
        return (upper + strict.T).tocsr()

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "SparseSymMatrix":
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        rows, cols = np.nonzero(np.triu(a))
        return cls(n, rows, cols, a[rows, cols])

    @classmethod
    def from_coo(cls, n, rows, cols, vals) -> "SparseSymMatrix":
        """Accumulate raw symmetric COO data, keeping the upper triangle."""
        full = sparse.coo_matrix(
            (np.asarray(vals, dtype=float), (rows, cols)), shape=(n, n)
        ).tocsr()
        full.sum_duplicates()
        upper = sparse.triu(full).tocoo()
        return cls(n, upper.row, upper.col, upper.data)

    def export_text(self, path) -> None:
        lines = [f"{self.n} {len(self.vals)}"]
        for r, c, v in zip(self.rows, self.cols, self.vals):
            lines.append(f"{r} {c} {v:.17g}")
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class DofMap:
    """Mapping between full node indices and reduced (free) indices."""

    full_to_reduced: np.ndarray  # -1 for constrained nodes
    reduced_to_full: np.ndarray
    constrained: np.ndarray  # node indices
    values: np.ndarray  # prescribed values, aligned with `constrained`

    def extend(self, reduced_solution: np.ndarray) -> np.ndarray:
        """Insert prescribed values back into a full-length vector."""
        full = np.zeros(len(self.full_to_reduced))
        full[self.reduced_to_full] = reduced_solution
        full[self.constrained] = self.values
        return full


def assemble(mesh: Mesh) -> tuple[SparseSymMatrix, SparseSymMatrix]:
    """Stiffness and consistent mass matrices for P1 elements."""
    v = mesh.vertices
    t = mesh.triangles
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(areas < 1e-14):
        raise DegenerateTriangle(
            f"triangle area {areas.min():.3e} below degeneracy threshold"
        )
    # gradients of the barycentric shape functions
    b = np.stack(
        [p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1
    )
    c = np.stack(
        [p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1
    )
    n_tri = len(t)
    ke = (
        b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]
    ) / (4.0 * areas)[:, None, None]
    me = (areas / 12.0)[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None, :, :]

    ii = np.repeat(t, 3, axis=1).reshape(n_tri, 3, 3)
    jj = np.tile(t, (1, 3)).reshape(n_tri, 3, 3)
    n = mesh.n_vertices
    stiff = SparseSymMatrix.from_coo(n, ii.ravel(), jj.ravel(), ke.ravel())
    mass = SparseSymMatrix.from_coo(n, ii.ravel(), jj.ravel(), me.ravel())
    return stiff, mass


def constrain(
    stiffness: SparseSymMatrix,
    mass: SparseSymMatrix | None,
    zero_nodes,
    valued_nodes=(),
) -> tuple[sparse.csr_matrix, sparse.csr_matrix | None, np.ndarray, DofMap]:
    """Eliminate Dirichlet nodes, returning the reduced pencil and load.

    `valued_nodes` is a sequence of (node, value) pairs; the load vector
    encodes their coupling so that the reduced solution extended by the
    prescribed values minimizes the discrete Dirichlet energy.
    """
    n = stiffness.n
    zero_nodes = np.asarray(sorted(zero_nodes), dtype=int)
    pairs = list(valued_nodes)
    valued_idx = np.asarray([p[0] for p in pairs], dtype=int)
    valued_val = np.asarray([p[1] for p in pairs], dtype=float)
    for arr in (zero_nodes, valued_idx):
        if len(arr) and (arr.min() < 0 or arr.max() >= n):
            raise IndexOutOfRange(f"node index outside [0, {n})")
    if len(np.intersect1d(zero_nodes, valued_idx)):
        raise IndexOutOfRange("zero_nodes and valued_nodes must be disjoint")

    constrained = np.concatenate([zero_nodes, valued_idx]).astype(int)
    values = np.concatenate([np.zeros(len(zero_nodes)), valued_val])
    if len(np.unique(constrained)) != len(constrained):
        raise IndexOutOfRange("duplicate constrained node")
    mask = np.ones(n, dtype=bool)
    mask[constrained] = False
    reduced_to_full = np.flatnonzero(mask)
    full_to_reduced = -np.ones(n, dtype=int)
    full_to_reduced[reduced_to_full] = np.arange(len(reduced_to_full))
    dof = DofMap(full_to_reduced, reduced_to_full, constrained, values)

    k_full = stiffness.to_csr()
    k_red = k_full[reduced_to_full][:, reduced_to_full].tocsr()
    g = np.zeros(n)
    g[constrained] = values
    load = -(k_full @ g)[reduced_to_full]
    m_red = None
    if mass is not None:
        m_red = mass.to_csr()[reduced_to_full][:, reduced_to_full].tocsr()
    return k_red, m_red, load, dof


def solve_spd(matrix, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse solve for a symmetric positive definite matrix."""
    a = matrix.to_csr() if isinstance(matrix, SparseSymMatrix) else matrix.tocsc()
    rhs = np.asarray(rhs, dtype=float)
    if a.shape[0] != len(rhs):
        raise DimensionMismatch(f"matrix is {a.shape}, rhs has {len(rhs)} entries")
    try:
        lu = splu(sparse.csc_matrix(a))
    except RuntimeError as exc:
        raise NotPositiveDefinite(f"factorization failed: {exc}") from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise NotPositiveDefinite("factorization produced non-finite values")
    nb = float(np.linalg.norm(rhs))
    if nb > 0:
        rel = float(np.linalg.norm(a @ x - rhs)) / nb
        if rel > 1e-10:
            raise NotPositiveDefinite(f"relative residual {rel:.3e} exceeds 1e-10")
    return x


def energy(stiffness, x: np.ndarray, y: np.ndarray) -> float:
    """Bilinear form x' K y (the Dirichlet energy for x == y)."""
    a = stiffness.to_csr() if isinstance(stiffness, SparseSymMatrix) else stiffness
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if a.shape[0] != len(x) or a.shape[0] != len(y):
        raise DimensionMismatch(
            f"matrix is {a.shape}, vectors have {len(x)} and {len(y)} entries"
        )
    return float(x @ (a @ y))


def interpolate(mesh: Mesh, fn) -> np.ndarray:
    """Nodal values of a callable f(x, y) on the mesh."""
    return np.asarray(fn(mesh.vertices[:, 0], mesh.vertices[:, 1]), dtype=float)
