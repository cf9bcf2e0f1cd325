"""Sampled continuous functions on cube domains and oscillation estimators.

A SampledFunction is a vertex grid of values at dyadic spacing h = 2^-m over a
cube-set domain, interpolated multilinearly, plus a producer-declared modulus
of continuity.  Two certification semantics coexist:

* generator-backed (exact=False): values sample an external function obeying
  the modulus; oscillation brackets are [vertex spread, vertex spread + 2w(h)].
* exact (exact=True): the interpolant itself is the function; oscillation
  upper bounds are computed exactly from cell corners, at any radius.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iter_product
from typing import Sequence

import numpy as np

from .gauges import GaugeLike
from .setlib import DyadicCubeSet, _atomic_write, _frac

__all__ = [
    "HolderModulus",
    "TableModulus",
    "SampledFunction",
    "OscillationRecord",
    "LipField",
    "oscillation",
    "scaled_osc_estimate",
    "lip_field",
    "make_test_function",
    "weierstrass_value",
    "cantor_value",
    "save_function",
    "load_function",
    "worker_count",
]


def worker_count() -> int:
    """Worker cap for per-point sweeps; LIPLAB_THREADS overrides."""
    env = os.environ.get("LIPLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Moduli of continuity


@dataclass(frozen=True)
class HolderModulus:
    """w(t) = c * t^alpha; Lipschitz is alpha = 1, constants use c = 0."""

    c: float
    alpha: float = 1.0

    def omega(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        return self.c * t**self.alpha

    def serialize(self) -> str:
        return f"modulus holder {self.c:.17g} {self.alpha:.17g}"


@dataclass(frozen=True)
class TableModulus:
    """Step bound: w(t) = value at the smallest knot >= t (clamped at the top)."""

    knots: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.knots) != len(self.values) or not self.knots:
            raise ValueError("table modulus needs matching nonempty knots/values")
        if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
            raise ValueError("knots must increase")
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("values must be nondecreasing")

    def omega(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        for knot, value in zip(self.knots, self.values):
            if t <= knot:
                return value
        return self.values[-1]

    def serialize(self) -> str:
        pairs = " ".join(f"{k:.17g} {v:.17g}" for k, v in zip(self.knots, self.values))
        return f"modulus table {pairs}"


Modulus = HolderModulus | TableModulus


# ---------------------------------------------------------------------------
# SampledFunction


@dataclass(frozen=True)
class SampledFunction:
    """Vertex values on the depth-m grid over a cube domain, multilinear in cells."""

    dim: int
    depth: int
    domain: DyadicCubeSet
    values: np.ndarray  # shape (2^m + 1,) * dim, NaN off the domain
    modulus: Modulus
    exact: bool = False

    def __post_init__(self) -> None:
        if self.domain.dim != self.dim or self.domain.depth > self.depth:
            raise ValueError("domain must match dimension at depth <= grid depth")
        n = (1 << self.depth) + 1
        if self.values.shape != (n,) * self.dim:
            raise ValueError(f"values shape {self.values.shape} != {(n,) * self.dim}")

    @property
    def h(self) -> float:
        return 2.0**-self.depth

    @property
    def full_domain(self) -> bool:
        return len(self.domain.cubes) == (1 << self.domain.depth) ** self.dim

    def cell_in_domain(self, idx: tuple[int, ...]) -> bool:
        shift = self.depth - self.domain.depth
        return tuple(k >> shift for k in idx) in self.domain.cubes

    def _containing_cell(self, x: Sequence[float]) -> tuple[int, ...]:
        top = 1 << self.depth
        candidates: list[list[int]] = []
        for xi in x:
            if xi < 0.0 or xi > 1.0:
                raise ValueError(f"point {tuple(x)} outside [0,1]^d")
            scaled = _frac(xi) * top
            k = min(math.floor(scaled), top - 1)
            cand = [k]
            if scaled == k and k - 1 >= 0:
                cand.append(k - 1)
            candidates.append(cand)
        for cell in iter_product(*candidates):
            if self.cell_in_domain(cell):
                return cell
        raise ValueError(f"point {tuple(x)} outside the domain")

    def evaluate(self, x: Sequence[float] | float) -> float:
        """Multilinear interpolation inside the containing domain cell."""
        if isinstance(x, (int, float)):
            x = (float(x),)
        cell = self._containing_cell(x)
        top = 1 << self.depth
        out = 0.0
        for corner in iter_product((0, 1), repeat=self.dim):
            weight = 1.0
            idx = []
            for c, k, xi in zip(corner, cell, x):
                t = xi * top - k
                weight *= t if c else 1.0 - t
                idx.append(k + c)
            if weight:
                out += weight * float(self.values[tuple(idx)])
        return out

    def evaluate_many(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized evaluation (full-domain, d = 1 fast path)."""
        if self.dim == 1 and self.full_domain:
            grid = np.linspace(0.0, 1.0, (1 << self.depth) + 1)
            return np.interp(xs, grid, self.values)
        return np.array([self.evaluate((float(v),) if self.dim == 1 else tuple(v)) for v in xs])

    def resample(self, depth: int) -> "SampledFunction":
        """Exact refinement: the interpolant is unchanged on the finer grid."""
        if depth == self.depth:
            return self
        if depth < self.depth:
            raise ValueError("resample only refines")
        if self.dim != 1 or not self.full_domain:
            raise ValueError("resample implemented for full-domain dimension 1")
        new_grid = np.linspace(0.0, 1.0, (1 << depth) + 1)
        old_grid = np.linspace(0.0, 1.0, (1 << self.depth) + 1)
        values = np.interp(new_grid, old_grid, self.values)
        return SampledFunction(
            1, depth, self.domain, values, self.modulus, self.exact
        )

    def grid_lipschitz(self) -> float:
        """Exact Lipschitz constant of the interpolant from adjacent differences."""
        total = 0.0
        for axis in range(self.dim):
            diffs = np.abs(np.diff(self.values, axis=axis))
            mx = np.nanmax(diffs) if diffs.size else 0.0
            total += 0.0 if math.isnan(mx) else float(mx)
        return total / self.h

    def validate_adjacent(self) -> None:
        bound = self.modulus.omega(self.h) * (1.0 + 1e-9)
        for axis in range(self.dim):
            diffs = np.abs(np.diff(self.values, axis=axis))
            mx = np.nanmax(diffs) if diffs.size else 0.0
            if not math.isnan(mx) and mx > bound:
                raise ValueError(
                    f"adjacent vertex difference {mx} exceeds modulus bound {bound}"
                )


# ---------------------------------------------------------------------------
# Oscillation


@dataclass(frozen=True)
class OscPair:
    lower: float
    upper: float
    clipped: bool


def _vertex_range(x: float, r: float, depth: int) -> tuple[int, int]:
    """Exact index range of grid vertices inside [x-r, x+r] cap [0,1]."""
    top = 1 << depth
    lo = max(Fraction(0), _frac(x) - _frac(r)) * top
    hi = min(Fraction(1), _frac(x) + _frac(r)) * top
    return math.ceil(lo), math.floor(hi)


def oscillation(f: SampledFunction, x: Sequence[float] | float, r: float) -> OscPair:
    """Certified oscillation bracket over the closed max-norm ball B(x, r).

    lower: spread of vertex values inside the ball (true lower bound).
    upper: exact interpolant oscillation for exact functions, else
    lower + 2*w(h).  The r >= 4h resolution guard applies to generator-backed
    functions only; exact corners need no vertex density.
    """
    if isinstance(x, (int, float)):
        x = (float(x),)
    if r <= 0:
        raise ValueError("radius must be positive")
    if not f.exact and r < 4.0 * f.h:
        raise ValueError(f"radius {r} below resolution guard 4h = {4.0 * f.h}")
    ranges = [_vertex_range(xi, r, f.depth) for xi in x]
    clipped = any(xi - r < 0.0 or xi + r > 1.0 for xi in x)

    vmin = math.inf
    vmax = -math.inf
    if all(lo <= hi for lo, hi in ranges):
        if f.dim == 1:
            lo, hi = ranges[0]
            window = f.values[lo : hi + 1]
            window = window[~np.isnan(window)]
            if window.size:
                vmin = float(window.min())
                vmax = float(window.max())
        else:
            for idx in iter_product(*[range(lo, hi + 1) for lo, hi in ranges]):
                v = float(f.values[idx])
                if not math.isnan(v):
                    vmin = min(vmin, v)
                    vmax = max(vmax, v)
    if vmin > vmax:
        if not f.exact:
            raise ValueError("no domain vertex inside the ball; deepen the grid")
        lower = 0.0
    else:
        lower = vmax - vmin

    if not f.exact:
        return OscPair(lower, lower + 2.0 * f.modulus.omega(f.h), clipped)

    if f.dim == 1 and f.full_domain:
        # piecewise-linear extremes on [lo, hi] sit at interior vertices or at
        # the two interpolated endpoints
        lo_edge = max(0.0, x[0] - r)
        hi_edge = min(1.0, x[0] + r)
        extremes = [f.evaluate(lo_edge), f.evaluate(hi_edge)]
        if vmin <= vmax:
            extremes.extend((vmin, vmax))
        upper = max(extremes) - min(extremes)
        return OscPair(lower, max(upper, lower), clipped)

    # exact path: multilinear extremes live at corners of cell-clipped boxes
    top = 1 << f.depth
    box_lo = [max(0.0, xi - r) for xi in x]
    box_hi = [min(1.0, xi + r) for xi in x]
    cell_ranges = []
    for blo, bhi in zip(box_lo, box_hi):
        clo = min(int(math.floor(_frac(blo) * top)), top - 1)
        chi = min(int(math.floor(_frac(bhi) * top)), top - 1)
        if _frac(bhi) * top == chi and chi > clo:
            chi -= 1
        cell_ranges.append(range(clo, chi + 1))
    emin = math.inf
    emax = -math.inf
    any_cell = False
    for cell in iter_product(*cell_ranges):
        if not f.cell_in_domain(cell):
            clipped = True
            continue
        any_cell = True
        corner_axes = []
        for k, blo, bhi in zip(cell, box_lo, box_hi):
            a = max(blo, k / top)
            b = min(bhi, (k + 1) / top)
            corner_axes.append((a, b) if b > a else (a,))
        for corner in iter_product(*corner_axes):
            v = f.evaluate(corner)
            emin = min(emin, v)
            emax = max(emax, v)
    if not any_cell:
        raise ValueError("ball does not meet the domain")
    upper = emax - emin
    return OscPair(lower, max(upper, lower), clipped)


@dataclass(frozen=True)
class OscillationRecord:
    """Per-scale oscillation brackets and gauge ratios around one point."""

    point: tuple[float, ...]
    gauge_text: str
    mode: str  # "lip" | "Lip"
    entries: tuple[tuple[float, float, float, float, float], ...]
    # (r, osc_lower, osc_upper, ratio_lower, ratio_upper)
    summary: float
    clipped: bool
    exact: bool
    norm: str = "max"  # balls are max-norm; Euclidean differs by <= sqrt(d)


def scaled_osc_estimate(
    f: SampledFunction,
    x: Sequence[float] | float,
    phi: GaugeLike,
    radii: Sequence[float],
    mode: str = "lip",
) -> OscillationRecord:
    """Windowed liminf/limsup proxy for the scaled oscillation.

    lip: min over the window of osc_upper/phi(r), a certified upper bound of
    the window infimum.  Lip: max of osc_lower/phi(r), a certified lower bound
    of the window supremum.  Window data is retained per scale.
    """
    from .gauges import format_gauge

    if mode not in ("lip", "Lip"):
        raise ValueError("mode must be 'lip' or 'Lip'")
    radii = sorted(set(float(r) for r in radii), reverse=True)
    if len(radii) < 6:
        raise ValueError("need at least 6 window radii")
    if isinstance(x, (int, float)):
        x = (float(x),)
    entries = []
    clipped = False
    for r in radii:
        pair = oscillation(f, x, r)
        clipped = clipped or pair.clipped
        pr = phi.eval(r)
        entries.append((r, pair.lower, pair.upper, pair.lower / pr, pair.upper / pr))
    if mode == "lip":
        summary = min(e[4] for e in entries)
    else:
        summary = max(e[3] for e in entries)
    return OscillationRecord(
        tuple(x), format_gauge(phi), mode, tuple(entries), summary, clipped, f.exact
    )


@dataclass(frozen=True)
class LipField:
    """Classification of sample points by the lip proxy against a threshold."""

    tau: float
    gauge_text: str
    points: tuple[tuple[float, ...], ...]
    proxies: tuple[float, ...]
    over_tau: DyadicCubeSet  # sample-depth cubes whose center exceeded tau

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple("over" if p > self.tau else "approx-zero" for p in self.proxies)


def lip_field(
    f: SampledFunction,
    phi: GaugeLike,
    tau: float,
    sample_depth: int,
    radii: Sequence[float],
) -> LipField:
    """lip proxies at the centers of a coarser sample grid (>= 4x coarser)."""
    from .gauges import format_gauge

    if sample_depth > f.depth - 2:
        raise ValueError("sample grid must be at least 4x coarser than the value grid")
    top = 1 << sample_depth
    cubes = []
    points = []
    for idx in iter_product(range(top), repeat=f.dim):
        center = tuple((k + 0.5) / top for k in idx)
        try:
            f._containing_cell(center)
        except ValueError:
            continue
        cubes.append(idx)
        points.append(center)
    def proxy(p):
        return scaled_osc_estimate(f, p, phi, radii, mode="lip").summary

    workers = worker_count()
    if workers > 1 and len(points) >= 64:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            proxies = list(pool.map(proxy, points))
    else:
        proxies = [proxy(p) for p in points]
    over = frozenset(idx for idx, prox in zip(cubes, proxies) if prox > tau)
    return LipField(
        tau,
        format_gauge(phi),
        tuple(points),
        tuple(proxies),
        DyadicCubeSet(f.dim, sample_depth, over),
    )


# ---------------------------------------------------------------------------
# Benchmark generators


def weierstrass_value(a: float, b: int, terms: int, x: Fraction | float) -> float:
    """sum a^n cos(2 pi b^n x), argument-reduced exactly for rational x."""
    x = _frac(x)
    total = 0.0
    for n in range(terms):
        arg = (x * b**n) % 1
        total += a**n * math.cos(2.0 * math.pi * float(arg))
    return total


def cantor_value(x: Fraction, max_digits: int = 120) -> float:
    """Cantor function via ternary digits; exact to < 2^-max_digits."""
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    num, den = x.numerator, x.denominator
    value = 0.0
    scale = 0.5
    for _ in range(max_digits):
        num *= 3
        digit, num = divmod(num, den)
        if digit == 1:
            value += scale
            break
        value += scale * (digit / 2.0)
        scale /= 2.0
        if num == 0:
            break
    return value


def _weierstrass_grid(a: float, b: int, terms: int, depth: int) -> np.ndarray:
    top = 1 << depth
    idx = np.arange(top + 1, dtype=np.int64)
    total = np.zeros(top + 1)
    for n in range(terms):
        bn = pow(b, n, top) if top > 1 else 0
        frac = ((bn * idx) % top).astype(np.float64) / top
        total += a**n * np.cos(2.0 * math.pi * frac)
    return total


def make_test_function(name: str, params: dict | None = None, depth: int = 10) -> SampledFunction:
    """Benchmark functions with closed-form moduli.

    affine(c, intercept): w(t) = |c| t, exact interpolant.
    constant(value): zero modulus, exact.
    weierstrass(a, b, terms): w(t) = C t^alpha with alpha = ln(1/a)/ln b and
        C = 2 pi b/(ab-1) + 2/(1-a), the split-at-b^N >= 1/t estimate.
    cantor: w(t) = 2 t^(ln2/ln3).
    """
    params = dict(params or {})
    top = 1 << depth
    domain = DyadicCubeSet.full(1, 0)
    if name == "constant":
        value = float(params.pop("value", params.pop("c", 0.0)))
        values = np.full(top + 1, value)
        fn = SampledFunction(1, depth, domain, values, HolderModulus(0.0, 1.0), exact=True)
    elif name == "affine":
        c = float(params.pop("c", 1.0))
        intercept = float(params.pop("intercept", 0.0))
        values = c * np.arange(top + 1) / top + intercept
        fn = SampledFunction(1, depth, domain, values, HolderModulus(abs(c), 1.0), exact=True)
    elif name == "weierstrass":
        a = float(params.pop("a", 0.5))
        b = int(params.pop("b", 3))
        terms = int(params.pop("terms", 25))
        if not (0.0 < a < 1.0) or b < 3 or b % 2 == 0 or a * b <= 1.0:
            raise ValueError("weierstrass needs 0 < a < 1, odd b >= 3, ab > 1")
        alpha = math.log(1.0 / a) / math.log(b)
        c_holder = 2.0 * math.pi * b / (a * b - 1.0) + 2.0 / (1.0 - a)
        values = _weierstrass_grid(a, b, terms, depth)
        fn = SampledFunction(1, depth, domain, values, HolderModulus(c_holder, alpha))
    elif name == "cantor":
        alpha = math.log(2.0) / math.log(3.0)
        values = np.array([cantor_value(Fraction(i, top)) for i in range(top + 1)])
        fn = SampledFunction(1, depth, domain, values, HolderModulus(2.0, alpha))
    else:
        raise ValueError(f"unknown test function {name!r}")
    if params:
        raise ValueError(f"unknown parameters for {name}: {sorted(params)}")
    if top <= (1 << 20):
        fn.validate_adjacent()
    return fn


# ---------------------------------------------------------------------------
# Text file format (.fn)


def save_function(path, f: SampledFunction) -> None:
    lines = [f"d {f.dim} m {f.depth} domain {len(f.domain.cubes)}"]
    lines.append(f"domain_depth {f.domain.depth}")
    for idx in sorted(f.domain.cubes):
        lines.append(" ".join(str(k) for k in idx))
    lines.append("values")
    flat = f.values.ravel()
    lines.extend(f"{v:.17g}" for v in flat)
    lines.append(f.modulus.serialize())
    if f.exact:
        lines.append("exact 1")
    _atomic_write(path, "\n".join(lines) + "\n")


def load_function(path) -> SampledFunction:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != "d" or header[2] != "m" or header[4] != "domain":
            raise ValueError(f"bad function header in {path}")
        dim, depth, count = int(header[1]), int(header[3]), int(header[5])
        dd_line = fh.readline().split()
        if dd_line[0] != "domain_depth":
            raise ValueError("missing domain_depth line")
        domain_depth = int(dd_line[1])
        cubes = []
        for _ in range(count):
            cubes.append(tuple(int(t) for t in fh.readline().split()))
        marker = fh.readline().strip()
        if marker != "values":
            raise ValueError("missing values marker")
        n = (1 << depth) + 1
        flat = np.empty(n**dim)
        for i in range(n**dim):
            flat[i] = float(fh.readline())
        modulus: Modulus | None = None
        exact = False
        for line in fh:
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "modulus" and tokens[1] == "holder":
                modulus = HolderModulus(float(tokens[2]), float(tokens[3]))
            elif tokens[0] == "modulus" and tokens[1] == "table":
                vals = [float(t) for t in tokens[2:]]
                modulus = TableModulus(tuple(vals[0::2]), tuple(vals[1::2]))
            elif tokens[0] == "exact":
                exact = bool(int(tokens[1]))
    if modulus is None:
        raise ValueError("missing modulus line")
    domain = DyadicCubeSet(dim, domain_depth, frozenset(cubes))
    return SampledFunction(dim, depth, domain, flat.reshape((n,) * dim), modulus, exact)
