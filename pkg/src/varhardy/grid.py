"""Uniform lattices, grid functions, quadrature and scaled convolution.

Signals live on the lattice {-L, -L+h, ..., L}^dim and are zero outside it.
Everything downstream consumes the types defined here.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import signal as sps

MAX_POINTS = 2**24


@dataclass(frozen=True)
class Grid:
    dim: int
    L: float
    h: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.L <= 0 or self.h <= 0:
            raise ValueError("L and h must be positive")
        cells = 2 * self.L / self.h
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise ValueError(f"2L/h = {cells} is not an integer")
        if self.size > MAX_POINTS:
            raise ValueError(f"grid has {self.size} points (limit {MAX_POINTS})")

    @property
    def n(self) -> int:
        """Points per axis."""
        return int(round(2 * self.L / self.h)) + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        if self.dim == 1:
            return (self.axis,)
        return tuple(np.meshgrid(self.axis, self.axis, indexing="ij"))

    def radius(self, center: Sequence[float] | float = 0.0) -> np.ndarray:
        """Euclidean distance of every lattice point to ``center``."""
        c = _as_point(center, self.dim)
        return np.sqrt(sum((x - ci) ** 2 for x, ci in zip(self.coords(), c)))

    def nearest_index(self, point) -> tuple[int, ...]:
        p = _as_point(point, self.dim)
        return tuple(int(np.clip(round((pi + self.L) / self.h), 0, self.n - 1)) for pi in p)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def from_callable(self, func: Callable[..., np.ndarray]) -> "GridFunction":
        vals = np.broadcast_to(np.asarray(func(*self.coords()), dtype=float), self.shape)
        return GridFunction(self, np.array(vals))

    def refine(self) -> "Grid":
        return Grid(self.dim, self.L, self.h / 2)


def _as_point(p, dim: int) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    if arr.size == 1 and dim > 1:
        arr = np.repeat(arr, dim)
    if arr.size != dim:
        raise ValueError(f"point {p!r} does not have dimension {dim}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise ValueError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.grid, self.values / self._other(other))

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __abs__(self):
        return GridFunction(self.grid, np.abs(self.values))

    def __pow__(self, s):
        return GridFunction(self.grid, self.values**s)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def support(self) -> np.ndarray:
        return self.values != 0


def integrate(f: GridFunction) -> float:
    """Riemann sum h^dim * sum(values)."""
    return float(f.grid.cell_volume * np.sum(f.values))


def ball_indicator(grid: Grid, center, radius: float) -> GridFunction:
    """Indicator of the closed Euclidean ball; degenerate balls snap to the nearest lattice point."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    mask = grid.radius(center) <= radius * (1 + 1e-12)
    if not mask.any():
        mask[grid.nearest_index(center)] = True
    return GridFunction(grid, mask.astype(float))


def ball_mask(grid: Grid, center, radius: float) -> np.ndarray:
    return ball_indicator(grid, center, radius).values > 0


@dataclass(frozen=True)
class Profile:
    """A compactly supported kernel profile Phi evaluated in rescaled coordinates."""

    name: str
    func: Callable[..., np.ndarray]
    support_radius: float
    dim: int = 1

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        return self.func(*coords)


def scaled_kernel(profile: Profile, t: float, h: float, dim: int, max_half: int | None = None) -> np.ndarray:
    """Samples t^{-n} Phi(m h / t) on the integer offsets m covering supp(Phi_t)."""
    half = int(math.ceil(profile.support_radius * t / h))
    if max_half is not None:
        half = min(half, max_half)
    offs = h * np.arange(-half, half + 1) / t
    if dim == 1:
        vals = profile(offs)
    else:
        X, Y = np.meshgrid(offs, offs, indexing="ij")
        vals = profile(X, Y)
    return np.asarray(vals, dtype=float) / t**dim


def _check_scale(t: float, h: float):
    if t < h / 2:
        raise ValueError(f"scale t={t} is below h/2={h / 2}: kernel undersampled")


def convolve_array(values: np.ndarray, kernel: np.ndarray, h: float) -> np.ndarray:
    """Zero-extended discrete convolution h^n sum_m K[m] f[x - m], output on the input lattice."""
    dim = values.ndim
    n_out = values.shape[0]
    # the kernel never needs to reach further than the grid itself
    half = kernel.shape[0] // 2
    if half > n_out - 1:
        cut = half - (n_out - 1)
        kernel = kernel[(slice(cut, kernel.shape[0] - cut),) * dim]
    work = values.size * kernel.size
    method = "direct" if work <= 4_000_000 else "fft"
    out = sps.convolve(values, kernel, mode="same", method=method)
    return out * h**dim


def convolve_at_scale(f: GridFunction, profile: Profile, t: float) -> GridFunction:
    """(f * Phi_t) sampled on the grid, by Riemann-sum quadrature over supp(Phi_t)."""
    g = f.grid
    _check_scale(t, g.h)
    if f.is_zero():
        return g.zeros()
    K = scaled_kernel(profile, t, g.h, g.dim, max_half=g.n - 1)
    return GridFunction(g, convolve_array(f.values, K, g.h))


def convolve_oracle(f: GridFunction, profile: Profile, t: float) -> GridFunction:
    """Direct double loop over output points and kernel offsets."""
    g = f.grid
    _check_scale(t, g.h)
    K = scaled_kernel(profile, t, g.h, g.dim, max_half=g.n - 1)
    half = K.shape[0] // 2
    out = np.zeros(g.shape)
    v = f.values
    if g.dim == 1:
        for i in range(g.n):
            acc = 0.0
            for m in range(-half, half + 1):
                j = i - m
                if 0 <= j < g.n:
                    acc += K[m + half] * v[j]
            out[i] = acc
    else:
        for i in range(g.n):
            for j in range(g.n):
                acc = 0.0
                for a in range(-half, half + 1):
                    ii = i - a
                    if not 0 <= ii < g.n:
                        continue
                    for b in range(-half, half + 1):
                        jj = j - b
                        if 0 <= jj < g.n:
                            acc += K[a + half, b + half] * v[ii, jj]
                out[i, j] = acc
    return GridFunction(g, out * g.h**g.dim)


@dataclass(frozen=True)
class ScaleLadder:
    t_min: float
    t_max: float
    refine: int = 1
    scales: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if self.t_min <= 0 or self.t_max < self.t_min or self.refine < 1:
            raise ValueError("need 0 < t_min <= t_max and refine >= 1")
        lo = math.ceil(math.log2(self.t_min) * self.refine - 1e-9)
        hi = math.floor(math.log2(self.t_max) * self.refine + 1e-9)
        sc = tuple(2.0 ** (k / self.refine) for k in range(lo, hi + 1))
        if not sc:
            raise ValueError(f"no dyadic scale in [{self.t_min}, {self.t_max}]")
        object.__setattr__(self, "scales", sc)

    def __iter__(self):
        return iter(self.scales)

    def __len__(self):
        return len(self.scales)

    @classmethod
    def for_grid(cls, grid: Grid, t_max: float | None = None, refine: int = 1) -> "ScaleLadder":
        """Ladder from the lattice spacing up to the domain size."""
        return cls(grid.h, t_max if t_max is not None else 2 * grid.L, refine)

    def spec(self) -> str:
        return f"{self.t_min},{self.t_max},{self.refine}"


# --- serialization ----------------------------------------------------------

def dumps_csv(f: GridFunction) -> str:
    g = f.grid
    buf = io.StringIO()
    buf.write("# " + json.dumps({"dim": g.dim, "L": g.L, "h": g.h}) + "\n")
    cols = ["i", "j"][: g.dim] + ["value"]
    buf.write(",".join(cols) + "\n")
    for idx in np.ndindex(g.shape):
        buf.write(",".join(str(i) for i in idx) + "," + repr(float(f.values[idx])) + "\n")
    return buf.getvalue()


def loads_csv(text: str) -> GridFunction:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing JSON header line")
    hdr = json.loads(lines[0][1:])
    g = Grid(int(hdr["dim"]), float(hdr["L"]), float(hdr["h"]))
    vals = np.zeros(g.shape)
    for line in lines[2:]:
        if not line.strip():
            continue
        parts = line.split(",")
        idx = tuple(int(p) for p in parts[: g.dim])
        vals[idx] = float(parts[g.dim])
    return GridFunction(g, vals)


def save_csv(f: GridFunction, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_csv(f))


def load_csv(path) -> GridFunction:
    with open(path) as fh:
        return loads_csv(fh.read())
