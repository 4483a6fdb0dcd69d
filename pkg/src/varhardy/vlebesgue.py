"""Variable Lebesgue spaces on the lattice: exponents, modular, Luxemburg norm.

Also hosts the numerical checks of the basic norm inequalities
(norm/modular bounds, p_- Minkowski, embedding, Hoelder, monotone convergence).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import Grid, GridFunction, load_csv


class NormSolverError(RuntimeError):
    """Raised when two independent norm evaluations disagree."""


@dataclass(frozen=True, eq=False)
class ExponentFunction:
    """A variable exponent p(.) on a grid; ``inf`` entries form the set omega_inf."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError("exponent shape does not match grid")
        if np.any(np.isnan(v)) or np.any(v <= 0):
            raise ValueError("exponent must be positive")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def omega_inf(self) -> np.ndarray:
        return np.isinf(self.values)

    @property
    def p_minus(self) -> float:
        return float(np.min(self.values))

    @property
    def p_plus(self) -> float:
        return float(np.max(self.values))

    def in_P0(self) -> bool:
        return bool(np.isfinite(self.p_plus))

    def scaled(self, s: float) -> "ExponentFunction":
        return ExponentFunction(self.grid, self.values * s)

    @classmethod
    def constant(cls, grid: Grid, p: float) -> "ExponentFunction":
        return cls(grid, np.full(grid.shape, float(p)))

    @classmethod
    def from_function(cls, f: GridFunction) -> "ExponentFunction":
        return cls(f.grid, f.values)


def parse_exponent(spec: str, grid: Grid) -> ExponentFunction:
    """Built-in exponents by name, or a CSV path.

    const:<p>                p
    step:<p1>,<p2>           p1 for x_1 <= 0, p2 for x_1 > 0
    sin:<base>,<amp>         base + amp sin(x_1 + ... + x_n)
    logsmooth:<base>,<amp>   base + amp / log(e + |x|)
    sigmoid:<base>,<amp>     base + amp / (1 + exp(-x_1))
    """
    kind, _, args = spec.partition(":")
    nums = [float(a) for a in args.split(",")] if args else []
    X = grid.coords()
    if kind == "const":
        vals = np.full(grid.shape, nums[0])
    elif kind == "step":
        vals = np.where(X[0] > 0, nums[1], nums[0])
    elif kind == "sin":
        vals = nums[0] + nums[1] * np.sin(sum(X))
    elif kind == "logsmooth":
        vals = nums[0] + nums[1] / np.log(np.e + grid.radius())
    elif kind == "sigmoid":
        vals = nums[0] + nums[1] / (1 + np.exp(-X[0]))
    else:
        f = load_csv(spec)
        if f.grid != grid:
            raise ValueError(f"exponent file {spec} is on grid {f.grid}, expected {grid}")
        return ExponentFunction.from_function(f)
    return ExponentFunction(grid, np.broadcast_to(vals, grid.shape))


def _abs_values(f) -> np.ndarray:
    return np.abs(f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float))


def modular(f: GridFunction, p: ExponentFunction, lam: float = 1.0) -> float:
    """rho(f/lam): quadrature of (|f|/lam)^p off omega_inf plus sup|f|/lam on omega_inf."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    a = _abs_values(f) / lam
    pv = p.values
    inf = p.omega_inf
    if inf.any():
        fin = ~inf
        integral = np.sum(a[fin] ** pv[fin]) * p.grid.cell_volume
        return float(integral + (np.max(a[inf]) if inf.any() else 0.0))
    return float(np.sum(a**pv) * p.grid.cell_volume)


def luxemburg_norm(f: GridFunction, p: ExponentFunction, rtol: float = 1e-13, max_iter: int = 200) -> float:
    """Smallest lambda with rho(f/lambda) <= 1, by bracketed bisection in log(lambda)."""
    a = _abs_values(f)
    if not np.any(a):
        return 0.0
    grid = p.grid
    measure = np.count_nonzero(a) * grid.cell_volume
    pmin = p.p_minus if np.isfinite(p.p_minus) else 1.0
    lam = float(np.max(a)) * measure ** (1.0 / pmin)
    if lam <= 0 or not np.isfinite(lam):
        lam = float(np.max(a))
    lo = hi = lam
    # grow/shrink until rho(f/lo) > 1 >= rho(f/hi)
    for _ in range(max_iter):
        if modular(a, p, hi) <= 1:
            break
        lo, hi = hi, hi * 2
    for _ in range(max_iter):
        if modular(a, p, lo) > 1:
            break
        lo, hi = lo / 2, lo
    if hi == lo:
        lo = hi / 2
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(max_iter):
        if lhi - llo <= rtol:
            break
        mid = 0.5 * (llo + lhi)
        if modular(a, p, math.exp(mid)) > 1:
            llo = mid
        else:
            lhi = mid
    return math.exp(lhi)


def conjugate(p: ExponentFunction) -> ExponentFunction:
    """Pointwise conjugate exponent; p = 1 maps to inf, p = inf maps to 1."""
    v = p.values
    if np.any(v < 1):
        raise ValueError("conjugate exponent undefined where p(x) < 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(v == 1, np.inf, np.where(np.isinf(v), 1.0, v / (v - 1)))
    return ExponentFunction(p.grid, out)


@dataclass(frozen=True)
class LogHolderReport:
    C0: float
    C_inf: float
    p_inf: float


def check_log_holder(p: ExponentFunction) -> LogHolderReport:
    """Smallest local and decay log-Hoelder constants realised on the lattice."""
    g = p.grid
    v = p.values
    kmax = int(math.ceil(0.5 / g.h))
    C0 = 0.0
    if g.dim == 1:
        for m in range(1, kmax + 1):
            dist = m * g.h
            if dist >= 0.5:
                break
            diff = np.abs(v[m:] - v[:-m])
            if diff.size:
                C0 = max(C0, float(diff.max()) * -math.log(dist))
    else:
        for a in range(0, kmax + 1):
            for b in range(-kmax, kmax + 1):
                if a == 0 and b <= 0:
                    continue
                dist = g.h * math.hypot(a, b)
                if dist >= 0.5:
                    continue
                s1 = v[a:, max(b, 0): g.n + min(b, 0)]
                s2 = v[: g.n - a, max(-b, 0): g.n - max(b, 0)]
                diff = np.abs(s1 - s2)
                if diff.size:
                    C0 = max(C0, float(diff.max()) * -math.log(dist))
    r = g.radius()
    far = np.flatnonzero(r.ravel() == r.max())[0]
    p_inf = float(v.ravel()[far])
    C_inf = float(np.max(np.abs(v - p_inf) * np.log(np.e + r)))
    return LogHolderReport(C0, C_inf, p_inf)


def verify_holder_pair(f: GridFunction, g: GridFunction, p: ExponentFunction) -> float:
    """int |fg| / (||f||_p ||g||_p'); the standard bound is 2."""
    if p.p_minus < 1:
        raise ValueError("Hoelder pairing needs p_- >= 1")
    nf = luxemburg_norm(f, p)
    ng = luxemburg_norm(g, conjugate(p))
    if nf == 0 or ng == 0:
        return 0.0
    return float(np.sum(np.abs(f.values * g.values)) * f.grid.cell_volume / (nf * ng))


def norm_of_power(f: GridFunction, p: ExponentFunction, s: float, rtol: float = 1e-8) -> float:
    """|| |f|^s ||_p, cross-checked against ||f||_{sp}^s."""
    lhs = luxemburg_norm(abs(f) ** s, p)
    rhs = luxemburg_norm(f, p.scaled(s)) ** s
    if abs(lhs - rhs) > rtol * max(abs(lhs), abs(rhs), 1e-300):
        raise NormSolverError(f"homogeneity mismatch: {lhs!r} vs {rhs!r}")
    return lhs


# --- lemma checks -------------------------------------------------------------
# each returns the relative violation (<= 0 means the inequality holds)

def norm_modular_violation(f: GridFunction, p: ExponentFunction, tol: float = 1e-9) -> float:
    nrm = luxemburg_norm(f, p)
    rho = modular(f, p)
    if nrm == 0:
        return 0.0
    lo_e, hi_e = (1 / p.p_minus, 1 / p.p_plus) if nrm <= 1 else (1 / p.p_plus, 1 / p.p_minus)
    lo, hi = rho**lo_e, rho**hi_e
    return max(lo - nrm, nrm - hi) / nrm - tol


def minkowski_violation(f: GridFunction, g: GridFunction, p: ExponentFunction, tol: float = 1e-9) -> float:
    """p_- Minkowski when p_- <= 1, ordinary triangle inequality otherwise."""
    e = min(p.p_minus, 1.0)
    lhs = luxemburg_norm(f + g, p) ** e
    rhs = luxemburg_norm(f, p) ** e + luxemburg_norm(g, p) ** e
    return (lhs - rhs) / max(rhs, 1e-300) - tol


def embedding_violation(f: GridFunction, E: np.ndarray, p: ExponentFunction, q: ExponentFunction,
                        tol: float = 1e-9) -> float:
    """||f chi_E||_p <= (1 + |E|) ||f chi_E||_q for p <= q."""
    if np.any(p.values > q.values):
        raise ValueError("embedding needs p <= q pointwise")
    fe = f * E.astype(float)
    measure = np.count_nonzero(E) * f.grid.cell_volume
    lhs = luxemburg_norm(fe, p)
    rhs = (1 + measure) * luxemburg_norm(fe, q)
    return (lhs - rhs) / max(rhs, 1e-300) - tol


def monotone_violation(seq: Sequence[GridFunction], limit: GridFunction, p: ExponentFunction,
                       tol: float = 1e-9) -> float:
    """Norms of an increasing sequence increase and stay below the norm of the limit."""
    norms = [luxemburg_norm(f, p) for f in seq] + [luxemburg_norm(limit, p)]
    worst = -np.inf
    for a, b in zip(norms, norms[1:]):
        worst = max(worst, (a - b) / max(b, 1e-300))
    return float(worst) - tol


def kopaliani_ratio(p: ExponentFunction, balls: Sequence[tuple]) -> float:
    """sup over balls of ||chi_B||_p ||chi_B||_p' / |B| (needs p >= 1)."""
    from .grid import ball_indicator

    pc = conjugate(p)
    best = 0.0
    for center, r in balls:
        chi = ball_indicator(p.grid, center, r)
        meas = float(np.sum(chi.values)) * p.grid.cell_volume
        best = max(best, luxemburg_norm(chi, p) * luxemburg_norm(chi, pc) / meas)
    return best


# --- M P_0 context ------------------------------------------------------------

@dataclass(frozen=True)
class MP0Context:
    """Exponent plus the auxiliary p0, maximal-norm bound B, moment degree d and gamma."""

    exponent: ExponentFunction
    p0: float
    B: float
    d: int
    gamma: float

    @property
    def n(self) -> int:
        return self.exponent.grid.dim

    @property
    def dual_exponent(self) -> ExponentFunction:
        """(p(.)/p0)', the space on which the Rubio de Francia iteration runs."""
        return conjugate(self.exponent.scaled(1 / self.p0))

    @classmethod
    def create(cls, p: ExponentFunction, p0: float | None = None, B: float | None = None,
               probes: Sequence[GridFunction] | None = None, algorithm: str = "fast") -> "MP0Context":
        if not p.in_P0():
            raise ValueError("exponent must be bounded")
        if p0 is None:
            p0 = p.p_minus / 2
        if not 0 < p0 < p.p_minus:
            raise ValueError(f"need 0 < p0 < p_- = {p.p_minus}, got {p0}")
        n = p.grid.dim
        d = moment_degree(n, p0)
        gamma = (n + d + 1) / n
        if B is None:
            from .maximal import default_probes, probe_operator_norm

            dual = conjugate(p.scaled(1 / p0))
            B = 2 * probe_operator_norm(dual, probes or default_probes(p.grid), algorithm=algorithm)
        return cls(p, float(p0), float(B), d, gamma)


def moment_degree(n: int, p0: float) -> int:
    """floor(n (1/p0 - 1)), guarded against representation error."""
    x = n * (1 / p0 - 1)
    return int(math.floor(x + 1e-12))
