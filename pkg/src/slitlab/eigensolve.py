"""Lowest eigenpairs of the symmetric pencil K x = lambda M x.

Shift-invert ARPACK (Lanczos) on sparse problems, dense LAPACK below
dimension 2000.  Vectors are returned M-orthonormal with deterministic
signs; a fixed seed fixes the ARPACK starting vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, splu

from .errors import ConvergenceFailure, ShiftHitsEigenvalue

DENSE_CUTOFF = 2000
RESIDUAL_REL_TOL = 1e-8


@dataclass(frozen=True)
class EigenResult:
    """Ascending eigenvalues with M-orthonormal vectors and residuals."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (n, count), column i pairs with eigenvalue i
    residuals: np.ndarray  # ||K x - lambda M x|| in the M^-1 norm
    clusters: tuple[tuple[int, ...], ...]

    @property
    def count(self) -> int:
        return len(self.eigenvalues)


def cluster(values, rel_tol: float) -> tuple[tuple[int, ...], ...]:
    """Greedy grouping: consecutive values chain while the gap stays small.

    A gap joins the running cluster iff gap <= rel_tol * (1 + |value|),
    so ladders of nearly-tolerance gaps cluster transitively.
    """
    values = np.asarray(values, dtype=float)
    if np.any(np.diff(values) < 0):
        raise ValueError("values must be ascending")
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        if groups and v - values[i - 1] <= rel_tol * (1.0 + abs(v)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return tuple(tuple(g) for g in groups)


def _m_orthonormalize(vectors: np.ndarray, m_csr) -> np.ndarray:
    """Gram-Schmidt in the M inner product (two passes for stability)."""
    v = vectors.copy()
    for _ in range(2):
        for i in range(v.shape[1]):
            mv = m_csr @ v[:, i]
            for j in range(i):
                v[:, i] -= float(v[:, j] @ mv) * v[:, j]
                mv = m_csr @ v[:, i]
            v[:, i] /= np.sqrt(float(v[:, i] @ mv))
    return v


def solve_lowest(
    stiffness,
    mass,
    count: int,
    shift: float = 0.0,
    seed: int = 0,
    cluster_rel_tol: float = 1e-6,
) -> EigenResult:
    """Lowest `count` eigenpairs of the reduced pencil.

    Accepts SparseSymMatrix or scipy sparse inputs.  Deterministic for a
    fixed seed; raises ConvergenceFailure for an invalid request (count
    larger than the space) or a failed iteration, ShiftHitsEigenvalue
    when the shifted operator stays numerically singular after retries.
    """
    k_csr = stiffness.to_csr() if hasattr(stiffness, "to_csr") else stiffness.tocsr()
    m_csr = mass.to_csr() if hasattr(mass, "to_csr") else mass.tocsr()
    n = k_csr.shape[0]
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > n:
        raise ConvergenceFailure(
            f"invalid request: {count} eigenpairs of a dimension-{n} space"
        )

    if n <= DENSE_CUTOFF:
        vals, vecs = eigh(
            k_csr.toarray(), m_csr.toarray(), subset_by_index=[0, count - 1]
        )
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        sigma = shift
        for attempt in range(3):
            try:
                vals, vecs = eigsh(
                    k_csr, k=count, M=m_csr, sigma=sigma, which="LM", v0=v0
                )
                break
            except ArpackNoConvergence as exc:
                raise ConvergenceFailure(f"ARPACK did not converge: {exc}") from exc
            except RuntimeError as exc:
                # singular shifted operator: nudge the shift and retry
                scale = abs(sigma) if sigma else 1.0
                sigma = sigma - (1e-3 * scale if sigma >= 0 else -1e-3 * scale)
                last = exc
        else:
            raise ShiftHitsEigenvalue(
                f"shifted operator singular after retries: {last}"
            )
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    vecs = _m_orthonormalize(np.asarray(vecs, dtype=float), m_csr)
    # deterministic sign: largest-magnitude component positive
    for i in range(vecs.shape[1]):
        j = int(np.argmax(np.abs(vecs[:, i])))
        if vecs[j, i] < 0:
            vecs[:, i] = -vecs[:, i]

    m_lu = splu(sparse.csc_matrix(m_csr))
    residuals = np.empty(count)
    for i in range(count):
        r = k_csr @ vecs[:, i] - vals[i] * (m_csr @ vecs[:, i])
        residuals[i] = np.sqrt(max(float(r @ m_lu.solve(r)), 0.0))
    bad = residuals > RESIDUAL_REL_TOL * np.maximum(np.abs(vals), 1e-30)
    if np.any(bad):
        raise ConvergenceFailure(
            f"residual {residuals[bad][0]:.3e} exceeds "
            f"{RESIDUAL_REL_TOL:g} * lambda"
        )
    return EigenResult(
        eigenvalues=np.asarray(vals, dtype=float),
        eigenvectors=vecs,
        residuals=residuals,
        clusters=cluster(vals, cluster_rel_tol),
    )
