"""Exact eigenpairs for rectangles and disks, with machine-precision
Taylor tables at arbitrary interior points.

Rectangle modes are sine products; disk modes are Bessel functions, with
J_n evaluated by power series for small arguments and Miller's backward
recurrence beyond, and zeros located by a McMahon guess polished with
Newton steps.  Mixed partial derivatives of disk modes use the exact
complex ladder d/dx, d/dy acting on J_n(w r) e^{i n phi}, never numerical
differentiation, so vanishing orders are certified at machine precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .asymptotics import TangencyData, TaylorTable, nodal_params
from .errors import (
    ConvergenceFailure,
    NoInteriorNodalCircle,
    PointOutsideDomain,
    UnsupportedShape,
)
from .geometry import Disk, DomainSpec, Rectangle

# ---------------------------------------------------------------------------
# Bessel functions of the first kind
# ---------------------------------------------------------------------------

_SERIES_CUTOFF = 7.0


def _bessel_series(n: int, x: float) -> float:
    half = 0.5 * x
    term = half ** n / math.factorial(n)
    total = term
    q = -(half * half)
    for m in range(1, 60):
        term *= q / (m * (m + n))
        total += term
        if abs(term) < 1e-18 * max(abs(total), 1e-30):
            break
    return total


def _bessel_miller(n_max: int, x: float) -> np.ndarray:
    """J_0..J_n_max by backward recurrence, normalized by the even sum."""
    start = int(x + 1.5 * x ** (1.0 / 3.0) + 36 + n_max)
    start += start % 2
    fp, f = 0.0, 1e-300
    out = np.zeros(start + 1)
    for m in range(start, 0, -1):
        fm = (2.0 * m / x) * f - fp
        fp, f = f, fm
        if m - 1 <= start:
            out[m - 1] = fm
        if abs(f) > 1e250:
            f *= 1e-250
            fp *= 1e-250
            out *= 1e-250
    norm = out[0] + 2.0 * np.sum(out[2::2])
    return out[: n_max + 1] / norm


def bessel_j(n: int, x: float) -> float:
    """J_n(x) to about 1e-14 absolute for 0 <= x <= 100."""
    if n < 0:
        raise ValueError("order must be >= 0")
    x = float(x)
    if x < 0:
        raise ValueError("argument must be >= 0")
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if x <= _SERIES_CUTOFF or x <= 0.5 * n:
        return _bessel_series(n, x)
    return float(_bessel_miller(n, x)[n])


def bessel_jp(n: int, x: float) -> float:
    """First derivative of J_n."""
    if n == 0:
        return -bessel_j(1, x)
    return 0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))


def _zero_guess(n: int, s: int) -> float:
    if n >= 1 and s == 1:
        # first-zero asymptotic, good to ~1e-3 already at n = 1
        t = n ** (1.0 / 3.0)
        return n + 1.8557571 * t + 1.033150 / t - 0.00397 / n
    beta = (s + 0.5 * n - 0.25) * math.pi
    mu = 4.0 * n * n
    return (
        beta
        - (mu - 1) / (8 * beta)
        - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * beta) ** 3)
    )


def _newton_zero(n: int, x: float) -> float | None:
    for _ in range(80):
        f = bessel_j(n, x)
        fp = bessel_jp(n, x)
        if fp == 0.0:
            return None
        dx = f / fp
        dx = max(min(dx, 1.0), -1.0)
        x -= dx
        if abs(dx) < 1e-15 * x:
            break
    if abs(bessel_j(n, x)) > 1e-11:
        return None
    return x


def bessel_zero(n: int, s: int) -> float:
    """s-th positive zero of J_n: asymptotic guess, Newton, bracket fallback."""
    if s < 1:
        raise ValueError("zero index must be >= 1")
    guess = _zero_guess(n, s)
    x = _newton_zero(n, guess)
    if x is None:
        # scan for a sign change around the guess and bisect into the basin
        lo = max(guess - 2.0, 1e-3 if s == 1 else bessel_zero(n, s - 1) + 1e-6)
        hi, step = lo, 0.1
        flo = bessel_j(n, lo)
        while hi < guess + 4.0:
            hi += step
            fhi = bessel_j(n, hi)
            if flo * fhi < 0:
                break
            lo, flo = hi, fhi
        else:
            raise ConvergenceFailure(f"no bracket for zero ({n}, {s})")
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = bessel_j(n, mid)
            if flo * fm <= 0:
                hi = mid
            else:
                lo, flo = mid, fm
        x = _newton_zero(n, 0.5 * (lo + hi))
        if x is None:
            raise ConvergenceFailure(f"zero ({n}, {s}) not resolved")
    return x


# ---------------------------------------------------------------------------
# Reference modes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RectMode:
    """sin(m pi x / a) sin(n pi y / b), L2-normalized on [0,a]x[0,b]."""

    a: float
    b: float
    m: int
    n: int

    @property
    def eigenvalue(self) -> float:
        return (self.m * math.pi / self.a) ** 2 + (self.n * math.pi / self.b) ** 2

    @property
    def normalization(self) -> float:
        return 2.0 / math.sqrt(self.a * self.b)

    def evaluate(self, x, y):
        return (
            self.normalization
            * np.sin(self.m * math.pi * np.asarray(x) / self.a)
            * np.sin(self.n * math.pi * np.asarray(y) / self.b)
        )


@dataclass(frozen=True)
class DiskMode:
    """J_n(j_{n,s} r / R) cos(n phi), L2-normalized on the disk of radius R."""

    radius: float
    n: int
    s: int

    @property
    def zero(self) -> float:
        return bessel_zero(self.n, self.s)

    @property
    def eigenvalue(self) -> float:
        return (self.zero / self.radius) ** 2

    @property
    def normalization(self) -> float:
        angular = 2.0 * math.pi if self.n == 0 else math.pi
        radial = 0.5 * self.radius ** 2 * bessel_jp(self.n, self.zero) ** 2
        return 1.0 / math.sqrt(angular * radial)

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        phi = np.arctan2(y, x)
        omega = self.zero / self.radius
        jn = np.vectorize(lambda t: bessel_j(self.n, t))(omega * r)
        return self.normalization * jn * np.cos(self.n * phi)


def eigen_list(domain: DomainSpec, count: int):
    """Ascending exact eigenvalues with their modes, clustered exactly.

    Rectangle clusters collect index pairs with equal eigenvalue; disk
    modes with n >= 1 are doubled (cos and sin flavors share the value).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if isinstance(domain, Rectangle):
        a, b = domain.width, domain.height
        bound = max(4, int(math.isqrt(count)) + 3)
        while True:
            cand = [
                ((m * math.pi / a) ** 2 + (n * math.pi / b) ** 2, RectMode(a, b, m, n))
                for m in range(1, bound + 1)
                for n in range(1, bound + 1)
            ]
            cand.sort(key=lambda p: p[0])
            # smallest eigenvalue any excluded index pair could have
            lam_excl = min(
                ((bound + 1) * math.pi / a) ** 2 + (math.pi / b) ** 2,
                (math.pi / a) ** 2 + ((bound + 1) * math.pi / b) ** 2,
            )
            if len(cand) >= count and cand[count - 1][0] < lam_excl:
                break
            bound += 3
    elif isinstance(domain, Disk):
        r = domain.radius
        cutoff = bessel_zero(0, max(2, count))
        while True:
            cand = []
            n = 0
            while bessel_zero(n, 1) <= cutoff:
                s = 1
                while (z := bessel_zero(n, s)) <= cutoff:
                    lam = (z / r) ** 2
                    cand.append((lam, DiskMode(r, n, s)))
                    if n >= 1:
                        cand.append((lam, DiskMode(r, n, s)))  # sin flavor twin
                    s += 1
                n += 1
            if len(cand) >= count:
                break
            cutoff *= 1.3
        cand.sort(key=lambda p: p[0])
    else:
        raise UnsupportedShape(
            f"analytic spectrum unavailable for {type(domain).__name__}"
        )
    flat = cand[:count]
    while len(cand) > len(flat) and math.isclose(
        cand[len(flat)][0], flat[-1][0], rel_tol=1e-12
    ):
        flat.append(cand[len(flat)])
    clusters = []
    for i, (lam, _) in enumerate(flat):
        if clusters and math.isclose(lam, flat[clusters[-1][0]][0], rel_tol=1e-12):
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return flat, tuple(tuple(c) for c in clusters)


# ---------------------------------------------------------------------------
# Taylor tables of modes
# ---------------------------------------------------------------------------


def _rect_partials(mode: RectMode, x0: float, y0: float, max_order: int) -> np.ndarray:
    """Monomial coefficients of the mode about (x0, y0), domain frame."""
    wx = mode.m * math.pi / mode.a
    wy = mode.n * math.pi / mode.b
    d = np.zeros((max_order + 1, max_order + 1))
    for h in range(max_order + 1):
        sx = math.sin(wx * x0 + h * math.pi / 2) * wx ** h / math.factorial(h)
        for j in range(max_order + 1 - h):
            sy = math.sin(wy * y0 + j * math.pi / 2) * wy ** j / math.factorial(j)
            d[h, j] = mode.normalization * sx * sy
    return d


def _disk_partials(mode: DiskMode, x0: float, y0: float, max_order: int) -> np.ndarray:
    """Monomial coefficients of the mode about (x0, y0), disk-center frame.

    Derivatives are generated by the ladder
      d/dx F_q = (w/2)(F_{q-1} - F_{q+1}),
      d/dy F_q = (i w/2)(F_{q-1} + F_{q+1}),
    for F_q = J_q(w r) e^{i q phi}, with J_{-q} = (-1)^q J_q.
    """
    omega = mode.zero / mode.radius
    r0 = math.hypot(x0, y0)
    phi0 = math.atan2(y0, x0)
    # states: mapping q -> complex coefficient of F_q, per derivative order
    base = {mode.n: 1.0 + 0.0j}

    def ladder_x(state):
        out: dict[int, complex] = {}
        for q, cq in state.items():
            out[q - 1] = out.get(q - 1, 0.0) + 0.5 * omega * cq
            out[q + 1] = out.get(q + 1, 0.0) - 0.5 * omega * cq
        return out

    def ladder_y(state):
        out: dict[int, complex] = {}
        for q, cq in state.items():
            out[q - 1] = out.get(q - 1, 0.0) + 0.5j * omega * cq
            out[q + 1] = out.get(q + 1, 0.0) + 0.5j * omega * cq
        return out

    max_q = abs(mode.n) + max_order
    jvals = {}
    for q in range(0, max_q + 1):
        jvals[q] = bessel_j(q, omega * r0)
        jvals[-q] = (-1) ** q * jvals[q]

    def evaluate(state) -> float:
        total = 0.0 + 0.0j
        for q, cq in state.items():
            total += cq * jvals[q] * complex(math.cos(q * phi0), math.sin(q * phi0))
        return total.real

    d = np.zeros((max_order + 1, max_order + 1))
    col = base
    for j in range(max_order + 1):
        row = col
        for h in range(max_order + 1 - j):
            d[h, j] = (
                mode.normalization
                * evaluate(row)
                / (math.factorial(h) * math.factorial(j))
            )
            row = ladder_x(row)
        col = ladder_y(col)
    return d


def taylor_at(mode, point, max_order: int, frame_angle: float = 0.0) -> TaylorTable:
    """Taylor table of the mode at an interior point, in the slit frame.

    The slit frame has its origin at `point` and axes rotated by
    `frame_angle` relative to the domain frame.
    """
    x0, y0 = float(point[0]), float(point[1])
    if isinstance(mode, RectMode):
        if not (0 < x0 < mode.a and 0 < y0 < mode.b):
            raise PointOutsideDomain(f"({x0}, {y0}) not inside the rectangle")
        d = _rect_partials(mode, x0, y0, max_order)
    elif isinstance(mode, DiskMode):
        if math.hypot(x0, y0) >= mode.radius:
            raise PointOutsideDomain(f"({x0}, {y0}) not inside the disk")
        d = _disk_partials(mode, x0, y0, max_order)
    else:
        raise UnsupportedShape(f"no Taylor tables for {type(mode).__name__}")
    table = TaylorTable(d)
    if frame_angle != 0.0:
        table = table.rotated(frame_angle)
    return table


def tangency_setup(mode: DiskMode, max_order: int = 8):
    """Slit placement tangent to the innermost nodal circle of a radial mode.

    Returns (slit center, eigenvalue, NodalData, TangencyData) for a
    horizontal slit at the bottom point of the circle: a first-order zero
    with the slit axis tangent to the nodal line, second-order contact,
    and curvature 1/r0.
    """
    if mode.n != 0:
        raise UnsupportedShape("tangency setup uses radial modes only")
    if mode.s < 2:
        raise NoInteriorNodalCircle("mode (0, 1) has no interior nodal circle")
    r0 = mode.radius * bessel_zero(0, 1) / mode.zero
    center = (0.0, -r0)
    table = taylor_at(mode, center, max_order)
    nodal = nodal_params(table)
    tangency = TangencyData(l=2, f_l=1.0 / r0)
    return center, mode.eigenvalue, nodal, tangency
