"""Whitney cubes, a smooth partition of unity subordinate to them, weighted
polynomial projections and the Calderon-Zygmund splitting f = g + sum b_k.

Cubes are dyadic blocks of lattice cells (cell i is the box of side h centred
at the i-th lattice point).  Distances are measured in the max norm between
cell centres, with every cell outside the grid counted as complement.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import ndimage

from .grid import Grid, GridFunction, save_csv
from .maximal import hl_maximal
from .smoothmax import TestDictionary, grand_max, radial_max
from .vlebesgue import MP0Context, luxemburg_norm

A_TILDE = 9 / 8
A_STAR = 3 / 2
_EDGE = 1e-9


@dataclass(frozen=True)
class WhitneyCube:
    start: tuple[int, ...]  # lattice index of the first cell
    level: int  # the cube spans 2**level cells per axis
    grid: Grid = field(repr=False)

    @property
    def cells(self) -> int:
        return 2**self.level

    @property
    def side(self) -> float:
        return self.cells * self.grid.h

    @property
    def center(self) -> tuple[float, ...]:
        g = self.grid
        return tuple(-g.L + g.h * (s + (self.cells - 1) / 2) for s in self.start)

    def dilate_mask(self, a: float = 1.0) -> np.ndarray:
        """Lattice points x with |x - center|_inf <= a * side / 2."""
        g = self.grid
        r = a * self.side / 2 * (1 + _EDGE)
        mask = np.ones(g.shape, dtype=bool)
        for X, c in zip(g.coords(), self.center):
            mask &= np.abs(X - c) <= r
        return mask

    @property
    def mask(self) -> np.ndarray:
        return self.dilate_mask(1.0)

    @property
    def tilde_mask(self) -> np.ndarray:
        return self.dilate_mask(A_TILDE)

    @property
    def star_mask(self) -> np.ndarray:
        return self.dilate_mask(A_STAR)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "side": self.side, "start": list(self.start), "level": self.level}


def _cell_distance(omega: np.ndarray) -> np.ndarray:
    """Chessboard distance (in cells) from each cell of omega to the nearest complement cell."""
    padded = np.pad(omega, 1, constant_values=False)
    dist = ndimage.distance_transform_cdt(padded, metric="chessboard")
    return dist[(slice(1, -1),) * omega.ndim]


def whitney_decompose(omega: np.ndarray, grid: Grid) -> list[WhitneyCube]:
    """Maximal dyadic blocks Q inside omega with side <= dist(Q, complement) <= 4 side."""
    omega = np.asarray(omega, dtype=bool)
    if omega.shape != grid.shape:
        raise ValueError("omega shape does not match grid")
    if not omega.any():
        return []
    if omega.all():
        raise ValueError("omega is the whole lattice: no complement to measure distance to")
    dist = _cell_distance(omega)
    n = grid.n
    J = max(int(math.ceil(math.log2(n))), 0)
    cubes: list[WhitneyCube] = []

    def visit(start: tuple[int, ...], level: int):
        size = 2**level
        if any(s >= n for s in start):
            return
        inside = all(s + size <= n for s in start)
        block = tuple(slice(s, min(s + size, n)) for s in start)
        if inside and omega[block].all() and size <= dist[block].min():
            cubes.append(WhitneyCube(start, level, grid))
            return
        if level == 0 or not omega[block].any():
            return
        half = size // 2
        for off in product((0, half), repeat=grid.dim):
            visit(tuple(s + o for s, o in zip(start, off)), level - 1)

    visit((0,) * grid.dim, J)
    return cubes


def check_whitney(cubes: list[WhitneyCube], omega: np.ndarray) -> dict:
    """Measured invariants: disjointness, coverage, distance ratios and overlap of dilates."""
    omega = np.asarray(omega, dtype=bool)
    count = np.zeros(omega.shape, dtype=int)
    star = np.zeros(omega.shape, dtype=int)
    dist = _cell_distance(omega) if omega.any() and not omega.all() else None
    ratios = []
    nested = True
    for q in cubes:
        m = q.mask
        count += m
        star += q.star_mask
        nested &= bool(np.all(q.tilde_mask <= q.star_mask) and np.all(m <= q.tilde_mask))
        if dist is not None:
            ratios.append(float(dist[m].min()) * q.grid.h / q.side)
    return {
        "disjoint": bool(count.max(initial=0) <= 1),
        "covers": bool(np.array_equal(count > 0, omega)),
        "star_inside": bool(np.all(star[~omega] == 0)),
        "nested": bool(nested),
        "dist_over_side_min": min(ratios, default=1.0),
        "dist_over_side_max": max(ratios, default=1.0),
        "overlap": int(star.max(initial=0)),
    }


# --- partition of unity -------------------------------------------------------

def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1 - s, 1.0)), 0.0)
    return a / (a + b)


def zeta(u: np.ndarray) -> np.ndarray:
    """1 on |u| <= 1/2, 0 for |u| >= A_TILDE/2, smooth in between."""
    lo, hi = 0.5, A_TILDE / 2
    return _smooth_step((hi - np.abs(u)) / (hi - lo))


def _zeta_cube(q: WhitneyCube) -> np.ndarray:
    out = np.ones(q.grid.shape)
    for X, c in zip(q.grid.coords(), q.center):
        out = out * zeta((X - c) / q.side)
    return out


def partition_of_unity(cubes: list[WhitneyCube]) -> list[GridFunction]:
    """eta_k = zeta_k / sum_j zeta_j, supported in the 9/8 dilates."""
    if not cubes:
        return []
    g = cubes[0].grid
    zetas = [_zeta_cube(q) for q in cubes]
    total = np.sum(zetas, axis=0)
    safe = np.where(total > 0, total, 1.0)
    return [GridFunction(g, np.where(total > 0, z / safe, 0.0)) for z in zetas]


# --- polynomial projection ----------------------------------------------------

def multi_indices(dim: int, d: int) -> list[tuple[int, ...]]:
    """All multi-indices of order <= d, graded."""
    out = []
    for total in range(d + 1):
        if dim == 1:
            out.append((total,))
        else:
            out.extend((total - j, j) for j in range(total, -1, -1))
    return out


@dataclass(frozen=True)
class Projection:
    center: tuple[float, ...]
    scale: float
    alphas: tuple[tuple[int, ...], ...]
    coeffs: np.ndarray
    rank: int

    @property
    def rank_deficient(self) -> bool:
        return self.rank < len(self.alphas)

    def evaluate(self, grid: Grid) -> GridFunction:
        vals = _design(grid, self.center, self.scale, self.alphas) @ self.coeffs
        return GridFunction(grid, vals.reshape(grid.shape))


def _design(grid: Grid, center, scale, alphas) -> np.ndarray:
    cols = []
    X = [x.ravel() for x in grid.coords()]
    for a in alphas:
        col = np.ones(grid.size)
        for xi, ci, ai in zip(X, center, a):
            col = col * ((xi - ci) / scale) ** ai
        cols.append(col)
    return np.stack(cols, axis=1)


def poly_project(f: GridFunction, cube: WhitneyCube, eta_tilde: GridFunction, d: int) -> Projection:
    """Weighted least-squares polynomial of degree <= d in scaled monomials about the cube centre.

    A minimum-norm least-squares solve keeps the normal equations (and hence the
    orthogonality to every monomial) exact even when the weighted points cannot
    determine all coefficients; such cases are reported through ``rank``.
    """
    if d < 0:
        raise ValueError("degree must be nonnegative")
    w = eta_tilde.values.ravel()
    if not np.any(w > 0):
        raise ValueError("weight has empty support")
    alphas = tuple(multi_indices(f.grid.dim, d))
    sel = w > 0
    V = _design(f.grid, cube.center, cube.side, alphas)[sel]
    sw = np.sqrt(w[sel])
    A = V * sw[:, None]
    rhs = f.values.ravel()[sel] * sw
    coeffs, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    return Projection(cube.center, cube.side, alphas, coeffs, int(rank))


def normal_equations_oracle(f: GridFunction, cube: WhitneyCube, eta_tilde: GridFunction, d: int) -> np.ndarray:
    """Independent dense Gram solve, for full-rank cases."""
    alphas = multi_indices(f.grid.dim, d)
    w = eta_tilde.values.ravel()
    X = [x.ravel() for x in f.grid.coords()]
    m = len(alphas)
    G = np.zeros((m, m))
    r = np.zeros(m)
    for i, a in enumerate(alphas):
        pa = np.prod([((x - c) / cube.side) ** e for x, c, e in zip(X, cube.center, a)], axis=0)
        r[i] = np.sum(w * pa * f.values.ravel())
        for j, b in enumerate(alphas):
            pb = np.prod([((x - c) / cube.side) ** e for x, c, e in zip(X, cube.center, b)], axis=0)
            G[i, j] = np.sum(w * pa * pb)
    return np.linalg.solve(G, r)


def moments(b: GridFunction, center, scale: float, d: int) -> np.ndarray:
    """Integrals of b against scaled monomials about ``center`` of order <= d."""
    g = b.grid
    V = _design(g, center, scale, multi_indices(g.dim, d))
    return g.cell_volume * (b.values.ravel() @ V)


# --- Calderon-Zygmund decomposition --------------------------------------------

@dataclass
class CZResult:
    lam: float
    omega: np.ndarray
    cubes: list[WhitneyCube]
    g: GridFunction
    bs: list[GridFunction]
    d: int
    partition: list[GridFunction]
    projections: list[Projection] = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    scales: list[float] = field(default_factory=list)  # ||f eta_k||_1

    def residual(self, f: GridFunction) -> float:
        total = self.g.values + sum((b.values for b in self.bs), np.zeros(f.grid.shape))
        return float(np.max(np.abs(total - f.values)))

    def moment_errors(self) -> list[float]:
        """max_alpha |int b_k ((x - x_k)/l_k)^alpha| / (||b_k||_1 + ||f eta_k||_1) for each k.

        The second term keeps the ratio meaningful when the projection reproduces
        f exactly and b_k is pure rounding noise.
        """
        errs = []
        for q, b, s in zip(self.cubes, self.bs, self.scales):
            l1 = b.grid.cell_volume * float(np.sum(np.abs(b.values))) + s
            if l1 == 0:
                errs.append(0.0)
                continue
            errs.append(float(np.max(np.abs(moments(b, q.center, q.side, self.d)))) / l1)
        return errs

    def support_ok(self) -> bool:
        return all(np.all(b.values[~q.star_mask] == 0) for q, b in zip(self.cubes, self.bs))

    def overlap(self) -> int:
        if not self.cubes:
            return 0
        return int(np.sum([q.star_mask for q in self.cubes], axis=0).max())

    def manifest(self) -> dict:
        return {"lambda": self.lam, "d": self.d, "cubes": [q.to_dict() for q in self.cubes],
                "constants": self.constants, "rank_deficient": [p.rank_deficient for p in self.projections]}

    def dump(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "cz.json"), "w") as fh:
            json.dump(self.manifest(), fh, indent=1, sort_keys=True)
        save_csv(self.g, os.path.join(directory, "g.csv"))
        for k, b in enumerate(self.bs):
            save_csv(b, os.path.join(directory, f"b_{k:04d}.csv"))


def far_constant(q: WhitneyCube, algorithm: str = "fast") -> float:
    """min over lattice x outside Q* of M(chi_Q*)(x) |x - x_k|^n / l_k^n."""
    g = q.grid
    star = q.star_mask
    M = hl_maximal(GridFunction(g, star.astype(float)), algorithm).values
    r = g.radius(q.center)
    out = ~star
    if not out.any():
        return math.inf
    return float(np.min(M[out] * r[out] ** g.dim / q.side**g.dim))


def cz_decompose(f: GridFunction, lam: float, ctx: MP0Context, dictionary: TestDictionary,
                 with_constants: bool = True, grand: GridFunction | None = None) -> CZResult:
    """Split f into g plus pieces b_k = (f - c_k) eta_k supported on Whitney dilates."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    grid = f.grid
    d = max(ctx.d, 0)
    G = grand if grand is not None else grand_max(f, dictionary)
    omega = G.values > lam
    if not omega.any():
        return CZResult(lam, omega, [], f, [], d, [], [], {"c_g": f.sup() / lam})
    if omega.all():
        raise ValueError("level set is the whole lattice; raise lambda")
    cubes = whitney_decompose(omega, grid)
    etas = partition_of_unity(cubes)
    bs, projs, scales = [], [], []
    for q, eta in zip(cubes, etas):
        scales.append(grid.cell_volume * float(np.sum(np.abs(f.values) * eta.values)))
        mass = float(np.sum(eta.values))
        proj = poly_project(f, q, eta / mass, d)
        c = proj.evaluate(grid)
        bs.append(GridFunction(grid, (f.values - c.values) * eta.values))
        projs.append(proj)
    gvals = f.values.copy()
    for b in bs:
        gvals = gvals - b.values
    res = CZResult(lam, omega, cubes, GridFunction(grid, gvals), bs, d, etas, projs, scales=scales)
    res.constants["c_g"] = float(np.max(np.abs(gvals))) / lam
    res.constants["overlap"] = res.overlap()
    if with_constants:
        res.constants.update(cz_constants(f, res, ctx, dictionary, G))
    return res


def cz_constants(f: GridFunction, res: CZResult, ctx: MP0Context, dictionary: TestDictionary,
                 G: GridFunction | None = None) -> dict:
    """Measured constants of the maximal estimates for each bad piece."""
    grid = f.grid
    G = G if G is not None else grand_max(f, dictionary)
    phi = dictionary.primary
    p = ctx.exponent
    expo = grid.dim + res.d + 1
    near, far, ratio_norm, far_m = [], [], [], []
    for q, b in zip(res.cubes, res.bs):
        star = q.star_mask
        if b.is_zero():
            near.append(0.0)
            far.append(0.0)
            ratio_norm.append(0.0)
            continue
        Mb = radial_max(b, phi, dictionary.ladder).values
        near.append(float(np.max(Mb[star] / G.values[star])))
        r = grid.radius(q.center)
        off = ~star
        if off.any():
            bound = res.lam * (q.side / r[off]) ** expo
            far.append(float(np.max(Mb[off] / bound)))
        denom = luxemburg_norm(GridFunction(grid, G.values * star), p)
        ratio_norm.append(luxemburg_norm(GridFunction(grid, Mb), p) / denom)
    for q in res.cubes:
        far_m.append(far_constant(q))
    return {
        "cz_bk": max(near, default=0.0),
        "cz_bk2": max(far, default=0.0),
        "mr_mg": max(ratio_norm, default=0.0),
        "maxest_far": min(far_m, default=math.inf),
        "per_cube": {"cz_bk": near, "cz_bk2": far, "mr_mg": ratio_norm},
    }
