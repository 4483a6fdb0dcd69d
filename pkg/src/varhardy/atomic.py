"""Atoms, their validation, the canonical level-set decomposition into
(p(.), inf) atoms, atomic norms, and regrouping into a finite decomposition.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .czwhitney import A_STAR, CZResult, cz_decompose, moments, multi_indices, poly_project
from .grid import Grid, GridFunction, save_csv
from .smoothmax import TestDictionary, grand_max
from .vlebesgue import ExponentFunction, MP0Context, luxemburg_norm

SIZE_RTOL = 1e-12
MOMENT_TOL = 1e-8


class DecompositionError(RuntimeError):
    pass


def ball_lattice_mask(grid: Grid, center, radius: float) -> np.ndarray:
    return grid.radius(center) <= radius * (1 + 1e-12)


@dataclass(frozen=True, eq=False)
class Atom:
    center: tuple[float, ...]
    radius: float
    values: GridFunction
    q: float = math.inf
    d: int = 0

    @property
    def grid(self) -> Grid:
        return self.values.grid

    @property
    def ball(self) -> np.ndarray:
        return ball_lattice_mask(self.grid, self.center, self.radius)

    def ball_measure(self) -> float:
        return float(np.count_nonzero(self.ball)) * self.grid.cell_volume

    def chi_norm(self, p: ExponentFunction) -> float:
        return luxemburg_norm(GridFunction(self.grid, self.ball.astype(float)), p)

    def lq_norm(self, q: float | None = None) -> float:
        q = self.q if q is None else q
        v = np.abs(self.values.values)
        if math.isinf(q):
            return float(v.max())
        return float((self.grid.cell_volume * np.sum(v**q)) ** (1 / q))


@dataclass
class AtomReport:
    support_ok: bool
    size_ok: bool
    moments_ok: bool
    size_slack: float  # allowed minus actual, relative to allowed
    moment_error: float  # worst |moment| relative to the admissible atom mass
    outside: list = field(default_factory=list)  # lattice indices outside B with a != 0

    @property
    def passed(self) -> bool:
        return self.support_ok and self.size_ok and self.moments_ok


def validate_atom(a: Atom, p: ExponentFunction, ctx: MP0Context, q: float | None = None) -> AtomReport:
    """Support, size and vanishing-moment checks for a (p(.), q) atom.

    Moments are taken against monomials centred at the ball centre and scaled
    by its radius; they are compared with |B| / ||chi_B||, the largest L^1 mass
    an admissible atom on B can carry.
    """
    if a.d != ctx.d:
        raise ValueError(f"atom declares d={a.d} but the context requires d={ctx.d}")
    q = a.q if q is None else q
    ball = a.ball
    nz = a.values.values != 0
    bad = np.argwhere(nz & ~ball)
    support_ok = bad.size == 0
    chi = a.chi_norm(p)
    meas = a.ball_measure()
    allowed = (1.0 if math.isinf(q) else meas ** (1 / q)) / chi
    actual = a.lq_norm(q)
    size_ok = actual <= allowed * (1 + SIZE_RTOL)
    moment_err = 0.0
    if a.d >= 0:
        m = moments(a.values, a.center, a.radius, a.d)
        moment_err = float(np.max(np.abs(m))) / (meas / chi)
    return AtomReport(support_ok, bool(size_ok), moment_err <= MOMENT_TOL,
                      float((allowed - actual) / allowed), moment_err,
                      [tuple(int(i) for i in b) for b in bad[:10]])


@dataclass
class AtomicDecomposition:
    atoms: list[Atom]
    coefficients: list[float]
    provenance: list[tuple]  # (level j, cube k) or a label
    residual: GridFunction
    constants: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)  # j -> lattice mask of E_j

    def __len__(self):
        return len(self.atoms)

    def reconstruct(self, grid: Grid) -> GridFunction:
        out = np.zeros(grid.shape)
        for lam, a in zip(self.coefficients, self.atoms):
            out += lam * a.values.values
        return GridFunction(grid, out)

    def manifest(self) -> dict:
        return {
            "atoms": [{"center": list(a.center), "r": a.radius, "q": a.q if math.isfinite(a.q) else "inf",
                       "d": a.d, "lambda": lam, "level": prov[0], "cube": prov[1]}
                      for a, lam, prov in zip(self.atoms, self.coefficients, self.provenance)],
            "constants": self.constants,
            "residual_sup": self.residual.sup(),
        }

    def dump(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "atoms.json"), "w") as fh:
            json.dump(self.manifest(), fh, indent=1, sort_keys=True, default=str)
        for i, a in enumerate(self.atoms):
            save_csv(a.values, os.path.join(directory, f"atom_{i:04d}.csv"))


def atomic_norm(dec: AtomicDecomposition, p: ExponentFunction) -> float:
    """|| sum_j lambda_j chi_{B_j} / ||chi_{B_j}|| ||_p."""
    if not dec.atoms:
        return 0.0
    field_ = np.zeros(p.grid.shape)
    for lam, a in zip(dec.coefficients, dec.atoms):
        ball = a.ball
        field_ += lam * ball / a.chi_norm(p)
    return luxemburg_norm(GridFunction(p.grid, field_), p)


# --- canonical decomposition ----------------------------------------------------

def ball_inflation(n: int) -> float:
    """Radius of the ball around Q* in units of the cube side."""
    return math.sqrt(n) * A_STAR / 2 * (1 + 1 / 8)


def _pieces(f: GridFunction, lo: CZResult, hi: CZResult) -> list[np.ndarray]:
    """A_k for the level pair (j, j+1); they sum to b^j - b^{j+1}."""
    grid = f.grid
    d = lo.d
    hi_sum = np.zeros(grid.shape)
    for b in hi.bs:
        hi_sum += b.values
    out = []
    hi_supports = [e.values > 0 for e in hi.partition]
    hi_polys = [pr.evaluate(grid).values for pr in hi.projections]
    hi_mass = [float(np.sum(e.values)) for e in hi.partition]
    for b, eta in zip(lo.bs, lo.partition):
        A = b.values - hi_sum * eta.values
        supp = eta.values > 0
        for q_l, eta_l, sup_l, c_l, m_l in zip(hi.cubes, hi.partition, hi_supports, hi_polys, hi_mass):
            if not np.any(supp & sup_l):
                continue
            u = GridFunction(grid, (f.values - c_l) * eta.values)
            c_kl = poly_project(u, q_l, eta_l / m_l, d).evaluate(grid).values
            A = A + c_kl * eta_l.values
        out.append(A)
    return out


@dataclass(frozen=True)
class RootCube:
    """The whole grid, used as the single cube of the bottom level."""

    grid: Grid

    @property
    def center(self) -> tuple[float, ...]:
        return (0.0,) * self.grid.dim

    @property
    def side(self) -> float:
        return 2 * self.grid.L + self.grid.h


def _root_level(f: GridFunction, j: int, d: int) -> CZResult:
    """Bottom level: one cube, eta = 1, b = f - Pf, g = Pf (zero when f has vanishing moments)."""
    grid = f.grid
    root = RootCube(grid)
    ones = GridFunction(grid, np.ones(grid.shape))
    proj = poly_project(f, root, ones / grid.size, d)
    c = proj.evaluate(grid)
    return CZResult(2.0**j, np.ones(grid.shape, dtype=bool), [root], c, [f - c], d, [ones], [proj],
                    scales=[grid.cell_volume * float(np.sum(np.abs(f.values)))])


def canonical_decompose(f: GridFunction, p: ExponentFunction, ctx: MP0Context, dictionary: TestDictionary,
                        j_min: int | None = None, j_max: int | None = None,
                        rtol: float = 1e-8) -> AtomicDecomposition:
    """Level-set decomposition f = sum_j sum_k A_k^j + residual, normalised into (p(.), inf) atoms.

    Levels run down from j_max until the bad part at the current level leaves a
    residual below rtol * sup|f|.  When the level set fills the lattice, or stops
    growing because the level fell below the smallest positive value of the
    grand maximal function, the bottom level uses the whole grid as its only cube.
    """
    grid = f.grid
    if f.is_zero():
        return AtomicDecomposition([], [], [], grid.zeros(), {"c": 0.0})
    G = grand_max(f, dictionary)
    fsup = f.sup()
    if j_max is None:
        j_max = int(math.ceil(math.log2(G.sup())))
    positive = G.values[G.values > 0]
    gmin_pos = float(positive.min())
    gmin = float(G.values.min())
    levels: dict[int, CZResult] = {}
    j = j_max
    root_level = None
    while True:
        if j_min is not None and j < j_min:
            break
        if gmin > 2.0**j or 2.0 ** (j + 1) < gmin_pos:
            if j_min is not None:
                raise DecompositionError(
                    f"level set at 2^{j} no longer shrinks; use j_min >= {j + 1} or leave j_min unset")
            levels[j] = _root_level(f, j, max(ctx.d, 0))
            root_level = j
            break
        levels[j] = cz_decompose(f, 2.0**j, ctx, dictionary, with_constants=False, grand=G)
        if j_min is None and j < j_max and levels[j].g.sup() <= rtol * fsup:
            break
        j -= 1
        if j < j_max - 2000:
            raise DecompositionError("level range exhausted")
    j_min = min(levels)

    raw = []  # (j, k, A, cube)
    for j in range(j_min, j_max):
        lo, hi = levels[j], levels[j + 1]
        for k, A in enumerate(_pieces(f, lo, hi)):
            raw.append((j, k, A, lo.cubes[k]))
    c = max((float(np.max(np.abs(A))) * 2.0**-j for j, _, A, _ in raw), default=0.0)
    inflate = ball_inflation(grid.dim)
    atoms, coefs, prov, ratios = [], [], [], []
    total = np.zeros(grid.shape)
    for j, k, A, cube in raw:
        if not np.any(A):
            continue
        r_supp = float(np.max(grid.radius(cube.center)[A != 0]))
        radius = max(inflate * cube.side, r_supp * (1 + 1e-9))
        proto = Atom(cube.center, radius, GridFunction(grid, A), math.inf, ctx.d)
        chi = proto.chi_norm(p)
        lam = c * 2.0**j * chi
        atoms.append(Atom(cube.center, radius, GridFunction(grid, A / lam), math.inf, ctx.d))
        coefs.append(lam)
        prov.append((j, k))
        ratios.append(_ball_volume(grid.dim, radius) / (A_STAR * cube.side) ** grid.dim)
        total += A
    residual = GridFunction(grid, f.values - total)
    consts = {"c": c, "j_min": j_min, "j_max": j_max, "root_level": root_level,
              "ball_over_cube_max": max(ratios, default=0.0),
              "ball_inflation": inflate, "residual_sup": residual.sup()}
    return AtomicDecomposition(atoms, coefs, prov, residual, consts,
                               {j: levels[j].omega for j in range(j_min, j_max + 1)})


def _ball_volume(n: int, r: float) -> float:
    return 2 * r if n == 1 else math.pi * r * r


def level_sum(dec: AtomicDecomposition) -> np.ndarray:
    """sum_j 2^j chi_{E_j} over the levels used by a canonical decomposition."""
    out = None
    for j, om in dec.levels.items():
        out = 2.0**j * om if out is None else out + 2.0**j * om
    return out


# --- finite regrouping ------------------------------------------------------------

def q_threshold(ctx: MP0Context) -> float:
    """max(1, p_+, p0 (1 + 2^{n+3} ||M||)), with ||M|| estimated as B/2."""
    n = ctx.n
    return max(1.0, ctx.exponent.p_plus, ctx.p0 * (1 + 2 ** (n + 3) * ctx.B / 2))


def _tail_is_atom(tail: np.ndarray, grid: Grid, R4: float, p: ExponentFunction, ctx: MP0Context, q: float) -> bool:
    a = Atom((0.0,) * grid.dim, R4, GridFunction(grid, tail), q, ctx.d)
    return validate_atom(a, p, ctx).passed


def finite_regroup(f: GridFunction, p: ExponentFunction, ctx: MP0Context, dictionary: TestDictionary,
                   q: float, R: float | None = None, j_prime: int | None = None,
                   canonical: AtomicDecomposition | None = None) -> AtomicDecomposition:
    """Rewrite f as a scaled (p, inf) atom on B(0, 4R), a tail (p, q) atom and finitely many canonical atoms."""
    grid = f.grid
    if f.is_zero():
        return AtomicDecomposition([], [], [], grid.zeros(), {})
    thr = q_threshold(ctx)
    if not q > thr:
        raise ValueError(f"q={q} must exceed {thr:.4g}")
    r = grid.radius()
    if R is None:
        R = max(1.0, float(np.max(r[f.values != 0]))) * (1 + 1e-9)
    if np.any(f.values[r > R] != 0):
        raise ValueError("f is not supported in B(0, R)")
    R4 = 4 * R
    dec = canonical if canonical is not None else canonical_decompose(f, p, ctx, dictionary)
    G = grand_max(f, dictionary)
    chi_R = luxemburg_norm(GridFunction(grid, (r <= R).astype(float)), p)
    outside = G.values[r > R4]
    sup_out = float(outside.max()) if outside.size else 0.0
    if j_prime is None:
        j_prime = (int(math.ceil(math.log2(sup_out))) - 1) if sup_out > 0 else dec.constants["j_min"] - 1
    decay_c = 2.0**j_prime * chi_R

    high = [i for i, (j, k) in enumerate(dec.provenance) if j > j_prime]
    ell = np.zeros(grid.shape)
    for i in high:
        ell += dec.coefficients[i] * dec.atoms[i].values.values
    h = f.values - ell
    atoms, coefs, prov = [], [], []
    hsup = float(np.max(np.abs(h)))
    if hsup <= 1e-12 * f.sup():
        # every canonical atom is high: what is left is rounding, kept in the residual
        hsup = 0.0
    B4 = r <= R4 * (1 + 1e-12)
    if hsup > 0:
        if np.any(h[~B4] != 0):
            raise DecompositionError("low-level part leaves B(0, 4R)")
        chi4 = luxemburg_norm(GridFunction(grid, B4.astype(float)), p)
        lam_h = hsup * chi4
        atoms.append(Atom((0.0,) * grid.dim, R4, GridFunction(grid, h / lam_h), math.inf, ctx.d))
        coefs.append(lam_h)
        prov.append(("h", None))

    order = sorted(high, key=lambda i: abs(dec.provenance[i][0]) + abs(dec.provenance[i][1]))
    keys = [abs(dec.provenance[i][0]) + abs(dec.provenance[i][1]) for i in order]
    candidates = sorted(set(keys))
    start = (min(candidates) - 1) if candidates else 0
    chosen = None
    tail = ell.copy()
    taken = 0
    for i_val in [start] + candidates:
        while taken < len(order) and keys[taken] <= i_val:
            idx = order[taken]
            tail -= dec.coefficients[idx] * dec.atoms[idx].values.values
            taken += 1
        if not np.any(tail) or _tail_is_atom(tail, grid, R4, p, ctx, q):
            chosen = i_val
            break
    if chosen is None:
        raise DecompositionError(f"tail never became a (p, q) atom; final L^q norm {np.abs(tail).max():.3g}")
    if np.any(tail):
        atoms.append(Atom((0.0,) * grid.dim, R4, GridFunction(grid, tail), q, ctx.d))
        coefs.append(1.0)
        prov.append(("tail", chosen))
    for idx in order[:taken]:
        atoms.append(dec.atoms[idx])
        coefs.append(dec.coefficients[idx])
        prov.append(dec.provenance[idx])
    total = np.zeros(grid.shape)
    for lam, a in zip(coefs, atoms):
        total += lam * a.values.values
    consts = {"j_prime": j_prime, "decay_constant": decay_c, "i": chosen, "R": R, "q": q,
              "h_scale": (1 / (hsup * luxemburg_norm(GridFunction(grid, B4.astype(float)), p))) if hsup > 0 else None}
    return AtomicDecomposition(atoms, coefs, prov, GridFunction(grid, f.values - total), consts)


def random_atom(grid: Grid, p: ExponentFunction, d: int, center, radius: float, rng: np.random.Generator,
                q: float = math.inf) -> Atom:
    """Random values on a ball, moments removed by projection, scaled to the size limit."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if c.size == 1 and grid.dim > 1:
        c = np.repeat(c, grid.dim)
    center = tuple(float(v) for v in c)
    ball = ball_lattice_mask(grid, center, radius)
    vals = np.where(ball, rng.standard_normal(grid.shape), 0.0)
    if d >= 0:
        X = [x[ball] for x in grid.coords()]
        V = np.stack([np.prod([((x - ci) / radius) ** e for x, ci, e in zip(X, center, al)], axis=0)
                      for al in multi_indices(grid.dim, d)], axis=1)
        coef, *_ = np.linalg.lstsq(V, vals[ball], rcond=None)
        vals[ball] = vals[ball] - V @ coef
    proto = Atom(center, radius, GridFunction(grid, vals), q, d)
    chi = proto.chi_norm(p)
    meas = proto.ball_measure()
    allowed = (1.0 if math.isinf(q) else meas ** (1 / q)) / chi
    scale = allowed / proto.lq_norm(q)
    return Atom(proto.center, radius, GridFunction(grid, vals * scale), q, d)
