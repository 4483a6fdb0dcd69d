"""A1 weights on the lattice: constants, reverse Hoelder scans, weighted norms
and weighted atomic norms, plus a few weight generators.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .atomic import AtomicDecomposition
from .grid import Grid, GridFunction, ball_indicator
from .maximal import hl_maximal, rubio_iteration
from .smoothmax import radial_max
from .vlebesgue import ExponentFunction, MP0Context


@dataclass(frozen=True, eq=False)
class Weight:
    values: GridFunction
    generator: str = "custom"
    parameters: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if np.any(self.values.values <= 0):
            raise ValueError("weights must be strictly positive on the lattice")

    @property
    def grid(self) -> Grid:
        return self.values.grid

    def measure(self, mask: np.ndarray) -> float:
        """w(E) for a lattice subset E."""
        return float(self.grid.cell_volume * np.sum(self.values.values[mask]))

    def manifest(self, s_values: Sequence[float] = (1.1, 1.5, 2.0, 4.0)) -> dict:
        fam = BallFamily.dyadic(self.grid)
        return {"generator": self.generator, "parameters": self.parameters,
                "a1": a1_constant(self),
                "rh": {repr(float(s)): rh_constant(self, s, fam) for s in s_values}}

    def dumps(self) -> str:
        return json.dumps(self.manifest(), sort_keys=True)


# --- generators ------------------------------------------------------------------

def constant_weight(grid: Grid, c: float = 1.0) -> Weight:
    return Weight(GridFunction(grid, np.full(grid.shape, float(c))), "constant", {"c": c})


def power_weight(grid: Grid, a: float, eps: float = 1.0) -> Weight:
    """(|x| + eps h)^(-a) with 0 <= a < n."""
    if not 0 <= a < grid.dim:
        raise ValueError(f"need 0 <= a < n = {grid.dim}")
    vals = (grid.radius() + eps * grid.h) ** (-a)
    return Weight(GridFunction(grid, vals), "power", {"a": a, "eps": eps})


def plateau_weight(grid: Grid, center, radius: float, c: float) -> Weight:
    """1 + c chi_B."""
    if c <= -1:
        raise ValueError("plateau height must exceed -1")
    vals = 1 + c * ball_indicator(grid, center, radius).values
    return Weight(GridFunction(grid, vals), "plateau", {"center": center, "radius": radius, "c": c})


def rubio_weight(h: GridFunction, ctx: MP0Context, algorithm: str = "fast") -> Weight:
    """Rh from the Rubio de Francia iteration; positive wherever Rh is."""
    res = rubio_iteration(h, ctx, algorithm)
    if np.any(res.Rh.values <= 0):
        raise ValueError("Rh vanishes somewhere on the lattice; use a positive seed")
    return Weight(res.Rh, "rubio", {"terms": res.terms_used, "B": res.B})


# --- ball families ----------------------------------------------------------------

@dataclass(frozen=True)
class BallFamily:
    """Every lattice-centred ball with radius in ``radii``, intersected with the grid."""

    radii: tuple[float, ...]

    @classmethod
    def dyadic(cls, grid: Grid) -> "BallFamily":
        radii = []
        r = grid.h
        while r <= 2 * grid.L * (1 + 1e-12):
            radii.append(r)
            r *= 2
        return cls(tuple(radii))


def _disk(radius: float, h: float, dim: int) -> np.ndarray:
    half = int(math.floor(radius / h + 1e-9))
    m = np.arange(-half, half + 1)
    if dim == 1:
        return np.ones(m.size)
    return (np.hypot(m[:, None], m[None, :]) <= radius / h + 1e-9).astype(float)


def ball_sums(values: np.ndarray, radius: float, h: float) -> np.ndarray:
    """Sum of ``values`` over the lattice ball of given radius around every lattice point."""
    K = _disk(radius, h, values.ndim)
    n = values.shape[0]
    half = K.shape[0] // 2
    if half > n - 1:
        cut = half - (n - 1)
        K = K[(slice(cut, K.shape[0] - cut),) * values.ndim]
    method = "direct" if values.size * K.size <= 4_000_000 else "fft"
    out = sps.convolve(values, K, mode="same", method=method)
    return np.maximum(out, 0.0) if np.all(values >= 0) else out


def ball_averages(values: np.ndarray, radius: float, h: float) -> np.ndarray:
    return ball_sums(values, radius, h) / np.rint(ball_sums(np.ones_like(values), radius, h))


# --- constants ---------------------------------------------------------------------

def a1_constant(w: Weight, algorithm: str = "fast") -> float:
    """max over the lattice of Mw / w."""
    key = ("a1", algorithm)
    if key not in w._cache:
        Mw = hl_maximal(w.values, algorithm).values
        w._cache[key] = float(np.max(Mw / w.values.values))
    return w._cache[key]


def rh_constant(w: Weight, s: float, family: BallFamily | Sequence[tuple] | None = None) -> float:
    """max over the family of (avg_B w^s)^(1/s) / avg_B w."""
    if s <= 1:
        raise ValueError("s must exceed 1")
    family = family if family is not None else BallFamily.dyadic(w.grid)
    g = w.grid
    v = w.values.values
    best = 1.0
    if isinstance(family, BallFamily):
        for r in family.radii:
            hi = ball_averages(v**s, r, g.h) ** (1 / s)
            lo = ball_averages(v, r, g.h)
            best = max(best, float(np.max(hi / lo)))
    else:
        for center, r in family:
            m = ball_indicator(g, center, r).values > 0
            best = max(best, float(np.mean(v[m] ** s) ** (1 / s) / np.mean(v[m])))
    w._cache[("rh", s)] = best
    return best


def sharp_rh_exponent(w: Weight | None = None, a1: float | None = None, n: int | None = None) -> float:
    """1 + 1/(2^(n+2) [w]_A1)."""
    if a1 is None:
        a1 = a1_constant(w)
    if n is None:
        n = w.grid.dim
    if a1 < 1:
        raise ValueError("A1 constants are at least 1")
    return 1 + 1 / (2 ** (n + 2) * a1)


def doubling_ratio(w: Weight, t: float, family: BallFamily | None = None) -> float:
    """max over balls of w(B(x, t r)) / (t^n w(B(x, r))); bounded by [w]_A1 for A1 weights."""
    family = family or BallFamily.dyadic(w.grid)
    g = w.grid
    v = w.values.values
    best = 0.0
    for r in family.radii:
        if t * r > 2 * g.L * (1 + 1e-12):
            continue
        big = ball_sums(v, t * r, g.h)
        small = ball_sums(v, r, g.h)
        best = max(best, float(np.max(big / (t**g.dim * small))))
    return best


def a1_ball_form(w: Weight, family: BallFamily | None = None) -> float:
    """max over balls of avg_B w / min_B w."""
    from scipy import ndimage

    family = family or BallFamily.dyadic(w.grid)
    g = w.grid
    v = w.values.values
    best = 1.0
    for r in family.radii:
        fp = _disk(r, g.h, g.dim) > 0
        if g.dim == 1:
            mins = ndimage.minimum_filter1d(v, size=fp.size, mode="constant", cval=np.inf)
        else:
            mins = ndimage.minimum_filter(v, footprint=fp, mode="constant", cval=np.inf)
        best = max(best, float(np.max(ball_averages(v, r, g.h) / mins)))
    return best


# --- norms -------------------------------------------------------------------------

def weighted_norm(f: GridFunction, w: Weight, p: float) -> float:
    """(int |f|^p w)^(1/p)."""
    if p <= 0:
        raise ValueError("p must be positive")
    s = float(np.sum(np.abs(f.values) ** p * w.values.values)) * f.grid.cell_volume
    return s ** (1 / p)


def weighted_norm_oracle(f: GridFunction, w: Weight, p: float) -> float:
    """Compensated summation of the same quadrature."""
    terms = (abs(float(a)) ** p * float(b) for a, b in zip(f.values.ravel(), w.values.values.ravel()))
    return (math.fsum(terms) * f.grid.cell_volume) ** (1 / p)


def weighted_hardy_norm(f: GridFunction, w: Weight, p0: float, phi, ladder) -> float:
    return weighted_norm(radial_max(f, phi, ladder), w, p0)


def weighted_finite_atomic_norm(dec: AtomicDecomposition, w: Weight, p0: float, p: ExponentFunction) -> float:
    """(sum_j lambda_j^p0 w(B_j) / ||chi_{B_j}||^p0)^(1/p0)."""
    if not dec.atoms:
        return 0.0
    total = 0.0
    for lam, a in zip(dec.coefficients, dec.atoms):
        total += lam**p0 * w.measure(a.ball) / a.chi_norm(p) ** p0
    return total ** (1 / p0)
