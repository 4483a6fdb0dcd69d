"""Hardy-Littlewood maximal operator on the lattice, its operator-norm probes,
the vector-valued form and the Rubio de Francia iteration.

Cubes are axis parallel, centred on lattice points, with an odd number of
points per side; averages use zero extension outside the grid.  The fast path
computes box averages for every half-width from a summed-area table and then
takes a sliding-window maximum over admissible centres.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .grid import Grid, GridFunction, ball_indicator
from .vlebesgue import ExponentFunction, MP0Context, luxemburg_norm


class DivergenceError(RuntimeError):
    """The Rubio de Francia partial sums do not contract: B is too small."""


def _prefix_table(a: np.ndarray) -> np.ndarray:
    if a.ndim == 1:
        P = np.zeros(a.shape[0] + 1)
        P[1:] = np.cumsum(a)
    else:
        P = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
        P[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    return P


def _box_average(P: np.ndarray, k: int, N: int, dim: int) -> np.ndarray:
    c = np.arange(N)
    lo = np.maximum(c - k, 0)
    hi = np.minimum(c + k + 1, N)
    width = 2 * k + 1
    if dim == 1:
        return (P[hi] - P[lo]) / width
    S = P[hi[:, None], hi[None, :]] - P[lo[:, None], hi[None, :]] - P[hi[:, None], lo[None, :]] + P[lo[:, None], lo[None, :]]
    return S / width**2


def hl_maximal(f: GridFunction, algorithm: str = "fast", max_half_width: int | None = None) -> GridFunction:
    """Uncentred maximal function over lattice-centred cubes with odd side counts."""
    if algorithm == "oracle":
        return hl_maximal_oracle(f, max_half_width)
    if algorithm != "fast":
        raise ValueError(f"unknown algorithm {algorithm!r}")
    g = f.grid
    a = np.abs(f.values)
    if not a.any():
        return g.zeros()
    N = g.n
    K = N - 1 if max_half_width is None else min(max_half_width, N - 1)
    P = _prefix_table(a)
    out = a.copy()
    for k in range(1, K + 1):
        A = _box_average(P, k, N, g.dim)
        Mk = ndimage.maximum_filter(A, size=2 * k + 1, mode="constant", cval=0.0)
        np.maximum(out, Mk, out=out)
    return GridFunction(g, out)


def hl_maximal_oracle(f: GridFunction, max_half_width: int | None = None) -> GridFunction:
    """Enumerates every admissible cube for every point.

    The summed-area table is accumulated by an explicit loop in the same order
    as the fast path, so both paths perform identical floating point sums.
    """
    g = f.grid
    a = np.abs(f.values)
    N = g.n
    K = N - 1 if max_half_width is None else min(max_half_width, N - 1)
    if g.dim == 1:
        P = np.zeros(N + 1)
        acc = 0.0
        for i in range(N):
            acc = acc + a[i]
            P[i + 1] = acc
        out = np.zeros(N)
        for x in range(N):
            best = float(a[x])
            for k in range(1, K + 1):
                cs = np.arange(max(x - k, 0), min(x + k, N - 1) + 1)
                lo = np.maximum(cs - k, 0)
                hi = np.minimum(cs + k + 1, N)
                best = max(best, float(np.max((P[hi] - P[lo]) / (2 * k + 1))))
            out[x] = best
        return GridFunction(g, out)
    C = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            C[i, j] = (C[i - 1, j] if i > 0 else 0.0) + a[i, j]
    P = np.zeros((N + 1, N + 1))
    for i in range(N):
        for j in range(N):
            P[i + 1, j + 1] = P[i + 1, j] + C[i, j]
    out = np.zeros((N, N))
    for x in range(N):
        for y in range(N):
            best = float(a[x, y])
            for k in range(1, K + 1):
                cx = np.arange(max(x - k, 0), min(x + k, N - 1) + 1)
                cy = np.arange(max(y - k, 0), min(y + k, N - 1) + 1)
                lx, hx = np.maximum(cx - k, 0)[:, None], np.minimum(cx + k + 1, N)[:, None]
                ly, hy = np.maximum(cy - k, 0)[None, :], np.minimum(cy + k + 1, N)[None, :]
                S = P[hx, hy] - P[lx, hy] - P[hx, ly] + P[lx, ly]
                best = max(best, float(np.max(S / (2 * k + 1) ** 2)))
            out[x, y] = best
    return GridFunction(g, out)


def iterate_maximal(f: GridFunction, times: int, algorithm: str = "fast") -> GridFunction:
    out = abs(f)
    for _ in range(times):
        out = hl_maximal(out, algorithm)
    return out


def default_probes(grid: Grid) -> list[GridFunction]:
    """Indicators, spikes and smooth bumps at a few positions and sizes."""
    L, h = grid.L, grid.h
    probes = []
    for r in (h, 4 * h, L / 8, L / 2):
        for c in (0.0, L / 2):
            probes.append(ball_indicator(grid, c, r))
    for c in (0.0, -L / 3):
        spike = grid.zeros().values.copy()
        spike[grid.nearest_index(c)] = 1.0
        probes.append(GridFunction(grid, spike))
    for w in (L / 16, L / 4):
        probes.append(grid.from_callable(lambda *X, w=w: np.exp(-sum(x * x for x in X) / w**2)))
    return probes


def probe_operator_norm(p: ExponentFunction, probes: Sequence[GridFunction], algorithm: str = "fast") -> float:
    """max over probes of ||Mf||_p / ||f||_p; a lower bound for the operator norm."""
    if not probes:
        raise ValueError("probe list is empty")
    best = 0.0
    for f in probes:
        nf = luxemburg_norm(f, p)
        if nf == 0:
            raise ValueError("probes must be nonzero")
        best = max(best, luxemburg_norm(hl_maximal(f, algorithm), p) / nf)
    return best


def vector_maximal(fs: Sequence[GridFunction], r: float, p: ExponentFunction,
                   algorithm: str = "fast") -> tuple[float, float]:
    """(||(sum (M f_k)^r)^{1/r}||_p, ||(sum |f_k|^r)^{1/r}||_p)."""
    if not fs:
        raise ValueError("empty function list")
    if r <= 1:
        raise ValueError("r must exceed 1")
    g = fs[0].grid
    lhs = np.zeros(g.shape)
    rhs = np.zeros(g.shape)
    for f in fs:
        lhs += hl_maximal(f, algorithm).values ** r
        rhs += np.abs(f.values) ** r
    return (luxemburg_norm(GridFunction(g, lhs ** (1 / r)), p),
            luxemburg_norm(GridFunction(g, rhs ** (1 / r)), p))


@dataclass(frozen=True)
class IterationResult:
    Rh: GridFunction
    terms_used: int
    tail_bound: float
    B: float
    remainder: GridFunction  # first omitted term M^{I+1}h / (2B)^{I+1}

    def a1_slack(self) -> GridFunction:
        """Pointwise allowance in M(Rh) <= 2B Rh + 2B * remainder."""
        return self.remainder * (2 * self.B)


def rubio_iteration(h: GridFunction, ctx: MP0Context, algorithm: str = "fast",
                    rtol: float = 1e-8, max_terms: int = 500) -> IterationResult:
    """Rh = sum_i M^i h / (2B)^i, truncated once the next term is negligible."""
    if np.any(h.values < 0) or h.is_zero():
        raise ValueError("h must be nonnegative and nonzero")
    r = ctx.dual_exponent
    B = ctx.B
    h_norm = luxemburg_norm(h, r)
    term = abs(h)
    total = term.values.copy()
    prev_norm = h_norm
    for i in range(1, max_terms + 1):
        nxt = hl_maximal(term, algorithm) / (2 * B)
        nxt_norm = luxemburg_norm(nxt, r)
        if nxt_norm > prev_norm:
            raise DivergenceError(
                f"term {i} grew ({nxt_norm:.3g} > {prev_norm:.3g}); increase B above {B:.3g}")
        if 2 * nxt_norm < rtol * h_norm:
            return IterationResult(GridFunction(h.grid, total), i - 1, 2 * nxt_norm, B, nxt)
        total += nxt.values
        term, prev_norm = nxt, nxt_norm
    raise DivergenceError(f"no convergence after {max_terms} terms; increase B above {B:.3g}")
