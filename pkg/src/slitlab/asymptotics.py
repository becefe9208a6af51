"""Closed-form eigenvalue-shift predictions for a removed slit.

Everything in this module is exact arithmetic on Taylor data of an
eigenfunction at the slit center, expressed in the slit frame (x1 along
the slit, origin at its center).  The conventions:

* ``TaylorTable.d[h, j]`` holds the monomial coefficient of ``x1^h x2^j``,
  i.e. the mixed partial divided by ``h! j!``.
* A zero of order ``k`` has leading angular profile
  ``beta * sin(alpha - k*t)`` with ``alpha in [0, pi)``; ``alpha = 0``
  means the slit axis is tangent to a nodal line.
* ``kappa1`` is the smallest order of a nonvanishing pure-x1 derivative;
  each branch of a split eigenvalue shifts at rate ``rho(kappa1, eps)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadTangencyOrder,
    EpsOutOfRange,
    GramNotSPD,
    InconsistentBasis,
    NonHarmonicLeading,
    OrderTooHigh,
    ProbingOrderTooSmall,
    TangentCase,
    ZeroFunction,
)

INFINITE_ORDER = math.inf

# Relative magnitude below which a Taylor coefficient counts as zero.
ZERO_REL_TOL = 1e-10
# Leading-part deviation from its harmonic projection tolerated for
# eigenfunction tables.
HARMONIC_REL_TOL = 1e-8


def a_coeff(j: int, k: int) -> float:
    """Cosine-power Fourier coefficient: (1/pi) * int_0^{2pi} cos^k(t) cos(jt) dt.

    Closed form: zero unless j <= k and j == k (mod 2), else
    2^(1-k) * binom(k, (k-j)/2).
    """
    if j < 0 or k < 1:
        raise ValueError(f"need j >= 0 and k >= 1, got j={j}, k={k}")
    if j > k or (k - j) % 2 != 0:
        return 0.0
    return 2.0 ** (1 - k) * math.comb(k, (k - j) // 2)


def c_coeff(k: int) -> float:
    """Slit shape constant C_k = sum_{j=1}^k j * A_{j,k}^2, with C_0 = 2."""
    if k < 0:
        raise ValueError(f"need k >= 0, got {k}")
    if k == 0:
        return 2.0
    return sum(j * a_coeff(j, k) ** 2 for j in range(1, k + 1))


def rho_scale(k: int, eps: float) -> float:
    """Shift scale: 1/|log eps| for k = 0, eps^(2k) for k >= 1."""
    if not 0.0 < eps < 1.0:
        raise EpsOutOfRange(f"eps must lie in (0, 1), got {eps}")
    if k < 0:
        raise ValueError(f"need k >= 0, got {k}")
    if k == 0:
        return 1.0 / abs(math.log(eps))
    return eps ** (2 * k)


# ---------------------------------------------------------------------------
# Taylor tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaylorTable:
    """Monomial coefficients d[h, j] of x1^h x2^j for h + j <= max_order."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 2:
            raise ValueError("coefficient array must be square with max_order >= 1")
        if not np.all(np.isfinite(d)):
            raise ValueError("Taylor coefficients must be finite")
        # zero out the unused corner h + j > M so equality semantics are clean
        m = d.shape[0] - 1
        h, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        d = np.where(h + j <= m, d, 0.0)
        object.__setattr__(self, "d", d)

    @property
    def max_order(self) -> int:
        return self.d.shape[0] - 1

    @classmethod
    def from_entries(cls, max_order: int, entries: dict[tuple[int, int], float]) -> "TaylorTable":
        d = np.zeros((max_order + 1, max_order + 1))
        for (h, j), val in entries.items():
            if h + j > max_order:
                raise ValueError(f"entry ({h},{j}) exceeds max_order {max_order}")
            d[h, j] = val
        return cls(d)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.d)))

    def value_at_center(self) -> float:
        return float(self.d[0, 0])

    def pure_x1_row(self) -> np.ndarray:
        """Coefficients of 1, x1, x1^2, ... (the trace on the slit line)."""
        return self.d[:, 0].copy()

    def homogeneous_part(self, degree: int) -> np.ndarray:
        """Coefficients [d[degree,0], d[degree-1,1], ..., d[0,degree]]."""
        if degree > self.max_order:
            raise OrderTooHigh(f"degree {degree} exceeds max_order {self.max_order}")
        return np.array([self.d[degree - j, j] for j in range(degree + 1)])

    def scaled(self, factor: float) -> "TaylorTable":
        return TaylorTable(self.d * factor)

    def plus(self, other: "TaylorTable") -> "TaylorTable":
        if other.max_order != self.max_order:
            raise ValueError("order mismatch")
        return TaylorTable(self.d + other.d)

    def times(self, other: "TaylorTable", max_order: int | None = None) -> "TaylorTable":
        """Product table, truncated to max_order (default: self's order)."""
        m = self.max_order if max_order is None else max_order
        out = np.zeros((m + 1, m + 1))
        da, db = self.d, other.d
        for h1 in range(da.shape[0]):
            for j1 in range(da.shape[0] - h1):
                a = da[h1, j1]
                if a == 0.0:
                    continue
                hmax = min(db.shape[0] - 1, m - h1 - j1)
                for h2 in range(hmax + 1):
                    for j2 in range(min(db.shape[0] - 1 - h2, m - h1 - j1 - h2) + 1):
                        out[h1 + h2, j1 + j2] += a * db[h2, j2]
        return TaylorTable(out)

    def rotated(self, angle: float) -> "TaylorTable":
        """Table of u(R x) where R rotates by `angle` (new axes at +angle)."""
        m = self.max_order
        c, s = math.cos(angle), math.sin(angle)
        # images of x1 and x2 under the substitution x -> R x
        x1_img = np.zeros((m + 1, m + 1))
        x1_img[1, 0], x1_img[0, 1] = c, -s
        x2_img = np.zeros((m + 1, m + 1))
        x2_img[1, 0], x2_img[0, 1] = s, c
        pow1 = _monomial_powers(TaylorTable(x1_img), m)
        pow2 = _monomial_powers(TaylorTable(x2_img), m)
        out = np.zeros((m + 1, m + 1))
        for h in range(m + 1):
            for j in range(m + 1 - h):
                if self.d[h, j] == 0.0:
                    continue
                out += self.d[h, j] * pow1[h].times(pow2[j], m).d
        return TaylorTable(out)


def _monomial_powers(t: TaylorTable, m: int) -> list[TaylorTable]:
    one = TaylorTable.from_entries(m, {(0, 0): 1.0})
    powers = [one]
    for _ in range(m):
        powers.append(powers[-1].times(t, m))
    return powers


def combine_tables(tables: list[TaylorTable], weights) -> TaylorTable:
    """Linear combination sum_i weights[i] * tables[i]."""
    w = np.asarray(weights, dtype=float)
    if len(tables) != w.size:
        raise ValueError("weights/tables length mismatch")
    d = np.zeros_like(tables[0].d)
    for wi, t in zip(w, tables):
        d += wi * t.d
    return TaylorTable(d)


@dataclass(frozen=True)
class TruncatedPolynomial:
    """Evaluator for the Taylor polynomial truncated at total order m."""

    coeffs: np.ndarray  # (m+1, m+1), entries with h + j > m are zero
    order: int

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = np.zeros(np.broadcast(x1, x2).shape)
        for h in range(self.order + 1):
            for j in range(self.order + 1 - h):
                c = self.coeffs[h, j]
                if c != 0.0:
                    out = out + c * x1 ** h * x2 ** j
        return out if out.shape else float(out)


def taylor_truncate(t: TaylorTable, m: int) -> TruncatedPolynomial:
    """Evaluator for sum_{h+j<=m} d[h,j] x1^h x2^j.

    Vanishes identically on the slit line x2 = 0 iff kappa1(t) > m.
    """
    if m > t.max_order:
        raise OrderTooHigh(f"truncation order {m} exceeds table order {t.max_order}")
    if m < 0:
        raise ValueError("truncation order must be >= 0")
    coeffs = np.zeros_like(t.d)
    for h in range(m + 1):
        coeffs[h, : m + 1 - h] = t.d[h, : m + 1 - h]
    return TruncatedPolynomial(coeffs, m)


def kappa1(t: TaylorTable) -> float:
    """Order of x1-vanishing: smallest h with d[h,0] != 0, else inf.

    Coefficients are compared against ZERO_REL_TOL times the table's max
    magnitude, so analytically-zero entries of noisy tables stay zero.
    """
    scale = t.max_abs()
    if scale == 0.0:
        return INFINITE_ORDER
    row = t.pure_x1_row()
    for h, val in enumerate(row):
        if abs(val) > ZERO_REL_TOL * scale:
            return h
    return INFINITE_ORDER


# ---------------------------------------------------------------------------
# Nodal structure at the slit center
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodalData:
    """Leading behavior beta * sin(alpha - k t) of a zero of order k."""

    k: int
    beta: float
    alpha: float


@dataclass(frozen=True)
class TangencyData:
    """Contact order of the slit axis with a nodal line x2 = f(x1).

    ``l`` is the first order with f^(l)(0) != 0 (l >= 2), or None when the
    nodal line osculates to infinite order; ``f_l`` is f^(l)(0).
    """

    l: int | None
    f_l: float = 0.0

    @property
    def infinite(self) -> bool:
        return self.l is None


def _harmonic_pair_coeffs(k: int, a: float, b: float) -> np.ndarray:
    """Monomial coefficients of a*Re((x1+i x2)^k) + b*Im((x1+i x2)^k).

    Returned as [c_{k,0}, c_{k-1,1}, ..., c_{0,k}] like homogeneous_part().
    """
    # i^j cycles through (1, i, -1, -i)
    re_cycle = [1, 0, -1, 0]
    im_cycle = [0, 1, 0, -1]
    out = np.empty(k + 1)
    for j in range(k + 1):
        out[j] = math.comb(k, j) * (a * re_cycle[j % 4] + b * im_cycle[j % 4])
    return out


def nodal_params(t: TaylorTable) -> NodalData:
    """Extract (k, beta, alpha) from the leading homogeneous part.

    The degree-k part is matched to a*r^k cos(k t) + b*r^k sin(k t) with
    a = beta sin(alpha), b = -beta cos(alpha), alpha normalized to [0, pi)
    by flipping the sign of beta.  For k = 0 the convention is
    alpha = pi/2, beta = u(0,0).
    """
    scale = t.max_abs()
    if scale == 0.0:
        raise ZeroFunction("all Taylor coefficients vanish")
    k = None
    for deg in range(t.max_order + 1):
        part = t.homogeneous_part(deg)
        if np.max(np.abs(part)) > ZERO_REL_TOL * scale:
            k = deg
            break
    if k is None:
        raise ZeroFunction("no nonzero homogeneous part up to probing order")
    if k == 0:
        return NodalData(k=0, beta=float(t.d[0, 0]), alpha=math.pi / 2)

    part = t.homogeneous_part(k)
    a = float(t.d[k, 0])
    b = float(t.d[k - 1, 1]) / k
    recon = _harmonic_pair_coeffs(k, a, b)
    dev = np.max(np.abs(part - recon))
    if dev > HARMONIC_REL_TOL * max(np.max(np.abs(part)), scale * ZERO_REL_TOL):
        raise NonHarmonicLeading(
            f"degree-{k} part deviates from its harmonic projection by {dev:.3e}"
        )
    beta = math.hypot(a, b)
    alpha = math.atan2(a, -b)
    if alpha < 0.0:
        alpha += math.pi
        beta = -beta
    elif alpha >= math.pi:  # atan2 returns pi when a == +0, -b < 0
        alpha -= math.pi
        beta = -beta
    return NodalData(k=k, beta=beta, alpha=alpha)


# ---------------------------------------------------------------------------
# Eigenspace decomposition by x1-vanishing order
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecompositionResult:
    """Splitting of a degenerate eigenspace by x1-vanishing order.

    ``basis`` columns express the output basis in the input basis: first
    the block with all probed pure-x1 coefficients zero (order reported
    as inf, certified only up to ``probing_order``), then one column per
    finite order in ``orders`` (descending).
    """

    orders: tuple[int, ...]
    basis: np.ndarray  # (m, m), column i = coefficients of output vector i
    kappa: tuple[float, ...]  # inf for the unaffected block, else k_j
    probing_order: int

    @property
    def p(self) -> int:
        return len(self.orders)

    @property
    def dim_unaffected(self) -> int:
        return self.basis.shape[1] - len(self.orders)


def decompose(tables: list[TaylorTable], gram: np.ndarray) -> DecompositionResult:
    """Split span(tables) into subspaces of strictly decreasing kappa1.

    Walks the pure-x1 coefficient functionals order by order; each rank
    jump contributes a one-dimensional branch, gram-orthogonal to the
    remaining null space.  Output basis is gram-orthonormal.
    """
    m = len(tables)
    if m == 0:
        raise ValueError("need at least one table")
    M = tables[0].max_order
    if any(t.max_order != M for t in tables):
        raise ValueError("all tables must share the same max_order")
    gram = np.asarray(gram, dtype=float)
    if gram.shape != (m, m) or np.max(np.abs(gram - gram.T)) > 1e-10 * max(
        1.0, np.max(np.abs(gram))
    ):
        raise GramNotSPD("gram matrix must be symmetric of matching size")
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise GramNotSPD("gram matrix is not positive definite") from exc

    P = np.column_stack([t.pure_x1_row() for t in tables]).T  # (m, M+1)
    scale = max(float(np.max(np.abs(P))), np.finfo(float).tiny)
    tol = ZERO_REL_TOL * scale

    # Work in gram-orthonormal coordinates: y = chol.T @ c has unit metric.
    inv_cholT = np.linalg.inv(chol.T)
    # columns of `frame` are input-basis coefficient vectors of an ON basis
    frame = inv_cholT.copy()
    jumps: list[tuple[int, np.ndarray]] = []
    for h in range(M + 1):
        if frame.shape[1] == 0:
            break
        vals = frame.T @ P[:, h]
        vmax = float(np.max(np.abs(vals)))
        if vmax <= tol:
            continue
        if vmax < 100.0 * tol:
            raise ProbingOrderTooSmall(
                f"order-{h} coefficients sit in the ambiguous band near the "
                f"zero threshold (max {vmax:.3e}, tol {tol:.3e})"
            )
        c = vals / np.linalg.norm(vals)
        direction = frame @ c
        jumps.append((h, direction))
        # complete c to an ON basis of its orthogonal complement
        q, _ = np.linalg.qr(np.column_stack([c, np.eye(len(c))]))
        frame = frame @ q[:, 1: len(c)]

    unaffected = [frame[:, i] for i in range(frame.shape[1])]
    # descending order of k_j
    jumps.sort(key=lambda item: -item[0])
    orders = tuple(h for h, _ in jumps)

    cols = []
    kappas: list[float] = []
    for vec in unaffected:
        i = int(np.argmax(np.abs(vec)))
        cols.append(vec if vec[i] > 0 else -vec)
        kappas.append(INFINITE_ORDER)
    for h, vec in jumps:
        lead = float(vec @ P[:, h])
        cols.append(vec if lead > 0 else -vec)
        kappas.append(h)
    basis = np.column_stack(cols) if cols else np.zeros((m, 0))
    return DecompositionResult(
        orders=orders, basis=basis, kappa=tuple(kappas), probing_order=M
    )


# ---------------------------------------------------------------------------
# Predicted shifts
# ---------------------------------------------------------------------------

SCALE_LOG = "log"
SCALE_POWER = "power"
SCALE_ZERO = "zero"


@dataclass(frozen=True)
class PredictedShift:
    """Leading-order eigenvalue shift: coefficient times a scale in eps."""

    scale_kind: str
    coefficient: float
    exponent: int | None = None
    description: str = ""

    def __post_init__(self):
        if self.scale_kind not in (SCALE_LOG, SCALE_POWER, SCALE_ZERO):
            raise ValueError(f"unknown scale kind {self.scale_kind!r}")
        if not math.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")
        if self.scale_kind == SCALE_POWER:
            if self.exponent is None or self.exponent <= 0 or self.exponent % 2:
                raise ValueError("power scale needs a positive even exponent")

    def evaluate(self, eps: float) -> float:
        if self.scale_kind == SCALE_ZERO:
            return 0.0
        if self.scale_kind == SCALE_LOG:
            return self.coefficient * rho_scale(0, eps)
        return self.coefficient * eps ** self.exponent


def predict_capacity(t: TaylorTable) -> PredictedShift:
    """Leading slit capacity of the function with Taylor table t.

    With k = kappa1(t) and c0 = d[k,0]: 2*pi*u(0)^2 on the log scale for
    k = 0, else pi * C_k * c0^2 * eps^(2k).  Infinite kappa1 means the
    function vanishes on the slit line and the capacity is zero.
    """
    k = kappa1(t)
    if k is INFINITE_ORDER:
        return PredictedShift(
            SCALE_ZERO, 0.0, description="vanishes on slit line: zero capacity"
        )
    k = int(k)
    c0 = float(t.d[k, 0])
    if k == 0:
        return PredictedShift(
            SCALE_LOG, 2.0 * math.pi * c0 ** 2, description="log-rate capacity"
        )
    return PredictedShift(
        SCALE_POWER,
        math.pi * c_coeff(k) * c0 ** 2,
        exponent=2 * k,
        description=f"capacity of order-{k} x1-vanishing data",
    )


def predict_simple(n: NodalData) -> PredictedShift:
    """Shift of a simple eigenvalue when the slit crosses transversally."""
    if n.k == 0:
        val = n.beta * math.sin(n.alpha)
        return PredictedShift(
            SCALE_LOG, 2.0 * math.pi * val ** 2, description="nonzero center value"
        )
    if n.alpha == 0.0:
        raise TangentCase("alpha = 0 with k >= 1: use predict_tangent")
    coeff = math.pi * n.beta ** 2 * math.sin(n.alpha) ** 2 * c_coeff(n.k)
    return PredictedShift(
        SCALE_POWER,
        coeff,
        exponent=2 * n.k,
        description=f"transversal crossing, vanishing order {n.k}",
    )


def predict_tangent(n: NodalData, tg: TangencyData) -> PredictedShift:
    """Shift of a simple eigenvalue when the slit is tangent to a nodal line.

    Infinite contact order leaves the eigenvalue unchanged.  For finite l
    the rate is eps^(2(k+l-1)) with coefficient
    [binom(k+l-1, k-1) * beta * k! * f^(l)(0)]^2 * pi * C_{k+l-1}.
    """
    if n.k < 1:
        raise ValueError("tangent case requires vanishing order k >= 1")
    if tg.infinite:
        return PredictedShift(
            SCALE_ZERO, 0.0, description="slit inside nodal line: eigenvalue unchanged"
        )
    if tg.l < 2:
        raise BadTangencyOrder(f"contact order parameter l must be >= 2, got {tg.l}")
    kl = n.k + tg.l - 1
    bracket = math.comb(kl, n.k - 1) * n.beta * math.factorial(n.k) * tg.f_l
    return PredictedShift(
        SCALE_POWER,
        bracket ** 2 * math.pi * c_coeff(kl),
        exponent=2 * kl,
        description=f"tangential contact, orders (k={n.k}, l={tg.l})",
    )


def predict_multiple(
    dec: DecompositionResult, tables: list[TaylorTable]
) -> list[PredictedShift]:
    """Per-branch shifts of a multiple eigenvalue, in eigenvalue order.

    The first dim-unaffected entries are exactly zero; branch j then
    shifts by pi * C_{k_j} * d_j[k_j, 0]^2 at scale rho(k_j, eps), with
    larger k_j (smaller shift) first.
    """
    if len(tables) != dec.basis.shape[1]:
        raise InconsistentBasis("one table per output basis vector required")
    shifts: list[PredictedShift] = []
    for i in range(dec.dim_unaffected):
        if kappa1(tables[i]) is not INFINITE_ORDER:
            raise InconsistentBasis(
                f"table {i} has finite kappa1 but sits in the unaffected block"
            )
        shifts.append(
            PredictedShift(SCALE_ZERO, 0.0, description="unaffected branch")
        )
    for j, k_j in enumerate(dec.orders):
        t = tables[dec.dim_unaffected + j]
        if kappa1(t) != k_j:
            raise InconsistentBasis(
                f"table for branch {j} has kappa1 {kappa1(t)}, expected {k_j}"
            )
        c0 = float(t.d[k_j, 0])
        coeff = math.pi * c_coeff(k_j) * c0 ** 2
        if k_j == 0:
            shifts.append(
                PredictedShift(SCALE_LOG, coeff, description="branch k=0")
            )
        else:
            shifts.append(
                PredictedShift(
                    SCALE_POWER, coeff, exponent=2 * k_j, description=f"branch k={k_j}"
                )
            )
    return shifts


# ---------------------------------------------------------------------------
# Constructed tangency pairs (analytic test inputs)
# ---------------------------------------------------------------------------

def tangency_pair(
    k: int, l: int, beta: float, f_l: float, max_order: int = 10
) -> tuple[TaylorTable, NodalData, TangencyData]:
    """Analytic (u, f) pair with u == 0 on the graph x2 = f(x1).

    f(t) = f_l/l! * t^l and u = -beta * Q_k(x1,x2) * (x2 - f(x1)) where
    Q_k = Im((x1+i x2)^k)/x2, so u vanishes on the nodal graph, has a
    zero of order k at the origin with angular profile beta*sin(-k t),
    and the slit axis is tangent to the nodal line with f^(l)(0) = f_l.
    """
    if k < 1 or l < 2:
        raise ValueError("need k >= 1 and l >= 2")
    if max_order < k + l:
        raise ValueError("max_order too small to hold the pair")
    q = np.zeros((max_order + 1, max_order + 1))
    im_cycle = [0, 1, 0, -1]
    for j in range(k + 1):  # Im((x1+ix2)^k) = sum binom(k,j) im(i^j) x1^(k-j) x2^j
        w = math.comb(k, j) * im_cycle[j % 4]
        if w and j >= 1:
            q[k - j, j - 1] = w  # divided by x2
    graph = np.zeros((max_order + 1, max_order + 1))
    graph[0, 1] = 1.0
    graph[l, 0] = -f_l / math.factorial(l)
    table = (
        TaylorTable(q).times(TaylorTable(graph), max_order).scaled(-beta)
    )
    nodal = nodal_params(table)
    return table, nodal, TangencyData(l=l, f_l=f_l)
