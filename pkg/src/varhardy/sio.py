"""Convolution singular integrals: kernel checks, principal-value application,
decay of atom images, the Kolmogorov inequality and boundedness experiments.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import signal as sps

from .atomic import Atom, validate_atom
from .grid import Grid, GridFunction, ball_indicator
from .smoothmax import TestDictionary, grand_max, radial_max
from .vlebesgue import ExponentFunction, MP0Context, luxemburg_norm
from .weights import Weight, a1_constant, weighted_norm


@dataclass(frozen=True)
class SIOKernel:
    name: str
    func: Callable[..., np.ndarray]  # K evaluated away from the origin
    dim: int
    k: int
    C_reg: float | None = None
    odd: bool = False
    fourier: Callable[..., np.ndarray] | None = None  # analytic multiplier, when known
    first_moment: Callable[[float], np.ndarray] | None = field(default=None, compare=False)
    # first_moment(h)[i] = integral over the centred cell of z_i K(z) dz (principal value)

    def __call__(self, *x):
        if np.any(sum(np.asarray(xi, dtype=float) ** 2 for xi in x) == 0):
            raise ValueError("kernel evaluated at the origin")
        return self.func(*x)


def _hilbert_moment(h: float) -> np.ndarray:
    return np.array([h / math.pi])


def hilbert_kernel() -> SIOKernel:
    return SIOKernel("hilbert", lambda x: 1.0 / (math.pi * x), 1, 2, 1 / math.pi, True,
                     lambda xi: -1j * np.sign(xi), _hilbert_moment)


def _riesz_cell_constant() -> float:
    # int over the unit cell of u^2 / |u|^3: by symmetry half of int 1/|u|, which is 4 asinh(1)
    return 2 * math.asinh(1.0)


def _riesz_moment(i: int):
    def moment(h: float) -> np.ndarray:
        val = _riesz_cell_constant() / (2 * math.pi) * h
        out = np.zeros(2)
        out[i] = val
        return out

    return moment


def riesz_kernel(i: int) -> SIOKernel:
    """R_i with K(x) = x_i / (2 pi |x|^3) in the plane."""
    if i not in (0, 1):
        raise ValueError("Riesz index must be 0 or 1")

    def K(x, y):
        r = np.hypot(x, y)
        return (x if i == 0 else y) / (2 * math.pi * r**3)

    def mult(a, b):
        r = np.hypot(a, b)
        return -1j * (a if i == 0 else b) / np.where(r > 0, r, 1.0)

    return SIOKernel(f"riesz{i + 1}", K, 2, 2, None, True, mult, _riesz_moment(i))


def gaussian_kernel(dim: int = 1) -> SIOKernel:
    """Smooth, integrable, not homogeneous: kept as a non-example."""
    if dim == 1:
        return SIOKernel("gaussian", lambda x: np.exp(-x * x), 1, 2)
    return SIOKernel("gaussian", lambda x, y: np.exp(-(x * x + y * y)), 2, 2)


def zero_kernel(dim: int = 1) -> SIOKernel:
    if dim == 1:
        return SIOKernel("zero", lambda x: np.zeros_like(np.asarray(x, dtype=float)), 1, 2)
    return SIOKernel("zero", lambda x, y: np.zeros_like(np.asarray(x, dtype=float)), 2, 2)


KERNELS = {"hilbert": hilbert_kernel, "riesz1": lambda: riesz_kernel(0), "riesz2": lambda: riesz_kernel(1)}


# --- kernel regularity ------------------------------------------------------------

_STENCILS = {
    0: ([0], [1.0]),
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
    4: ([-2, -1, 0, 1, 2], [1.0, -4.0, 6.0, -4.0, 1.0]),
}


def _derivative(kernel: SIOKernel, pts: np.ndarray, beta: tuple[int, ...], step: np.ndarray) -> np.ndarray:
    """Central finite-difference partial derivative D^beta K at each row of ``pts``."""
    stencils = [_STENCILS[b] for b in beta]
    out = np.zeros(pts.shape[0])
    for combo in itertools.product(*[list(zip(*s)) for s in stencils]):
        shift = np.array([o for o, _ in combo], dtype=float)
        wgt = math.prod(c for _, c in combo)
        x = pts + shift[None, :] * step[:, None]
        out += wgt * kernel.func(*x.T)
    return out / step ** sum(beta)


@dataclass
class RegularityReport:
    C: float
    per_order: dict
    fourier_sup: float
    homogeneous: bool
    non_example: bool


def _annulus_points(dim: int, radii: Sequence[float]) -> np.ndarray:
    pts = []
    for r in radii:
        if r <= 0:
            raise ValueError("kernel evaluated at the origin")
        if dim == 1:
            pts += [(-r,), (r,)]
        else:
            th = np.linspace(0, 2 * np.pi, 48, endpoint=False) + 0.1
            pts += [(r * math.cos(t), r * math.sin(t)) for t in th]
    return np.array(pts, dtype=float)


def fourier_band_sup(kernel: SIOKernel, h: float = 1 / 64, R: float = 64.0, band: float = 20.0,
                     samples: int = 64) -> float:
    """max over |xi| <= band of the principal-value lattice sum of K(x) e^{-i x xi} h^n (diagonal omitted)."""
    m = np.arange(1, int(R / h) + 1) * h
    xis = np.linspace(-band, band, samples)
    if kernel.dim == 1:
        x = np.concatenate([-m[::-1], m])
        Kx = kernel.func(x)
        vals = np.exp(-1j * np.outer(xis, x)) @ Kx * h
        return float(np.max(np.abs(vals)))
    Rc = min(R, 8.0)
    ax = np.arange(-int(Rc / h), int(Rc / h) + 1) * h
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    mask = (X != 0) | (Y != 0)
    Kx = np.where(mask, kernel.func(np.where(mask, X, 1.0), np.where(mask, Y, 1.0)), 0.0)
    best = 0.0
    for a in xis[:: max(1, samples // 16)]:
        ex = np.exp(-1j * a * ax)
        for b in xis[:: max(1, samples // 16)]:
            ey = np.exp(-1j * b * ax)
            best = max(best, abs(ex @ Kx @ ey) * h * h)
    return float(best)


def verify_kernel_regularity(kernel: SIOKernel, radii: Sequence[float], order: int) -> RegularityReport:
    """Smallest C with |D^beta K(x)| <= C |x|^{-(n+|beta|)} on the annulus mesh, |beta| <= order+1."""
    if order > kernel.k:
        raise ValueError(f"order {order} exceeds kernel regularity k={kernel.k}")
    n = kernel.dim
    pts = _annulus_points(n, radii)
    rad = np.sqrt(np.sum(pts**2, axis=1))
    step = 1e-2 * rad
    per = {}
    for m in range(order + 2):
        betas = [(m,)] if n == 1 else [(m - j, j) for j in range(m + 1)]
        c = 0.0
        for beta in betas:
            D = _derivative(kernel, pts, beta, step) if m else kernel.func(*pts.T)
            c = max(c, float(np.max(np.abs(D) * rad ** (n + m))))
        per[m] = c
    # a kernel homogeneous of degree -n satisfies K(2x) 2^n = K(x)
    base = kernel.func(*pts.T)
    scaled = kernel.func(*(2 * pts).T) * 2**n
    scale = max(float(np.max(np.abs(base))), 1e-300)
    homogeneous = bool(np.max(np.abs(scaled - base)) <= 1e-9 * scale)
    fsup = fourier_band_sup(kernel) if np.any(base) else 0.0
    C = max(per.values())
    return RegularityReport(C, per, fsup, homogeneous, not homogeneous and C > 0)


# --- application -------------------------------------------------------------------

def kernel_array(kernel: SIOKernel, grid: Grid) -> np.ndarray:
    """K on all lattice offsets reachable inside the grid, zero at the origin."""
    m = np.arange(-(grid.n - 1), grid.n) * grid.h
    if grid.dim == 1:
        safe = np.where(m == 0, 1.0, m)
        K = kernel.func(safe)
        K[grid.n - 1] = 0.0
        return K
    X, Y = np.meshgrid(m, m, indexing="ij")
    origin = (X == 0) & (Y == 0)
    K = kernel.func(np.where(origin, 1.0, X), np.where(origin, 1.0, Y))
    K[grid.n - 1, grid.n - 1] = 0.0
    return K


def apply_sio(kernel: SIOKernel, f: GridFunction, correct: bool = True) -> GridFunction:
    """Principal-value lattice convolution K * f, diagonal cell omitted.

    With ``correct`` and a registered first moment, the omitted cell contributes
    -grad f(x) . int_cell z K(z) dz, the leading term of the cell integral for odd kernels.
    """
    g = f.grid
    if f.is_zero():
        return g.zeros()
    K = kernel_array(kernel, g)
    out = sps.fftconvolve(f.values, K, mode="same") * g.cell_volume
    if correct and kernel.odd and kernel.first_moment is not None:
        mom = kernel.first_moment(g.h)
        grads = np.gradient(f.values, g.h) if g.dim > 1 else [np.gradient(f.values, g.h)]
        for gi, mi in zip(grads, mom):
            out = out - gi * mi
    return GridFunction(g, out)


def hilbert_indicator_exact(x: np.ndarray, a: float = 1.0) -> np.ndarray:
    """(1/pi) log |x + a| / |x - a|, the Hilbert transform of chi_[-a, a]."""
    return np.log(np.abs(x + a) / np.abs(x - a)) / math.pi


# --- atom images ---------------------------------------------------------------------

def _fit_power(r: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Least-squares fit of log v = log c - e log r; returns (e, c)."""
    good = v > 0
    A = np.stack([np.ones(np.count_nonzero(good)), -np.log(r[good])], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(v[good]), rcond=None)
    return float(coef[1]), float(math.exp(coef[0]))


@dataclass
class AtomImageReport:
    exponent: float
    expected: float
    C: float
    grand_exponent: float | None = None
    grand_C: float | None = None


def atom_image_bounds(kernel: SIOKernel, a: Atom, ctx: MP0Context, dictionary: TestDictionary | None = None,
                      inner: float = 2.0, outer_margin: float = 0.25) -> AtomImageReport:
    """Decay of |Ta| away from the atom's ball, fitted on inner*r < |x - x0| < L - margin*L."""
    if kernel.k < ctx.d:
        raise ValueError(f"kernel regularity {kernel.k} below moment degree {ctx.d}")
    rep = validate_atom(a, ctx.exponent, ctx)
    if not rep.passed:
        raise ValueError(f"atom fails validation: {rep}")
    g = a.grid
    n = g.dim
    d = max(ctx.d, 0)
    expected = n + d + 1
    if a.values.is_zero():
        return AtomImageReport(math.inf, expected, 0.0)
    Ta = apply_sio(kernel, a.values)
    r = g.radius(a.center)
    far = (r > inner * a.radius) & (r < (1 - outer_margin) * g.L)
    if n == 2:
        far &= np.max(np.abs(np.stack(g.coords())), axis=0) < (1 - outer_margin) * g.L
    e, _ = _fit_power(r[far], np.abs(Ta.values[far]))
    B = a.ball_measure()
    chi = a.chi_norm(ctx.exponent)
    scale = B ** (1 + (d + 1) / n) / chi
    C = float(np.max(np.abs(Ta.values[far]) * r[far] ** expected / scale))
    rep_out = AtomImageReport(e, expected, C)
    if dictionary is not None:
        GT = grand_max(Ta, dictionary).values
        ge, _ = _fit_power(r[far], GT[far])
        rep_out.grand_exponent = ge
        rep_out.grand_C = float(np.max(GT[far] * r[far] ** expected / scale))
    return rep_out


# --- Kolmogorov inequality and J estimate ----------------------------------------

def kolmogorov_check(kernel: SIOKernel, f: GridFunction, w: Weight, p: float, ball) -> tuple[float, float]:
    """(int_B |Tf|^p w, w(B)^{1-p} (int |f| w)^p)."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    center, radius = ball
    g = f.grid
    if f.is_zero():
        return 0.0, 0.0
    mask = ball_indicator(g, center, radius).values > 0
    Tf = apply_sio(kernel, f).values
    lhs = float(np.sum(np.abs(Tf[mask]) ** p * w.values.values[mask])) * g.cell_volume
    wB = w.measure(mask)
    rhs = wB ** (1 - p) * (float(np.sum(np.abs(f.values) * w.values.values)) * g.cell_volume) ** p
    return lhs, rhs


def estimate_J(w: Weight, center, radius: float, p0: float, d: int) -> tuple[float, float]:
    """J over the dyadic annuli 2^{i+1}B minus 2^i B inside the grid, and J |B|^{p0 (n+d+1)/n} / ([w] w(B))."""
    g = w.grid
    n = g.dim
    e = p0 * (n + d + 1)
    r = g.radius(center)
    J = 0.0
    i = 1
    while 2**i * radius <= r.max():
        ring = (r > 2**i * radius) & (r <= 2 ** (i + 1) * radius)
        J += float(np.sum(w.values.values[ring] / r[ring] ** e)) * g.cell_volume
        i += 1
    ball = ball_indicator(g, center, radius).values > 0
    B = float(np.count_nonzero(ball)) * g.cell_volume
    const = J * B ** (e / n) / (a1_constant(w) * w.measure(ball))
    return J, const


# --- boundedness experiments --------------------------------------------------------

@dataclass
class BoundednessReport:
    mode: str
    ratios: list
    sup: float
    weighted: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "ratios": self.ratios, "sup": self.sup, "weighted": self.weighted}


def boundedness_experiment(kernel: SIOKernel, corpus: Sequence[GridFunction], p: ExponentFunction,
                           ctx: MP0Context, dictionary: TestDictionary, mode: str = "L",
                           atoms: Sequence[Atom] = (), weights: Sequence[Weight] = ()) -> BoundednessReport:
    """sup over the corpus of ||Tf||_p / ||G f||_p (mode L) or ||G Tf||_p / ||G f||_p (mode H)."""
    if mode not in ("L", "H"):
        raise ValueError("mode must be 'L' or 'H'")
    ratios = []
    for f in corpus:
        if f.is_zero():
            ratios.append(0.0)
            continue
        Gf = luxemburg_norm(grand_max(f, dictionary), p)
        Tf = apply_sio(kernel, f)
        top = luxemburg_norm(Tf, p) if mode == "L" else luxemburg_norm(grand_max(Tf, dictionary), p)
        ratios.append(top / Gf)
    weighted = {}
    if atoms and weights:
        p0 = ctx.p0
        phi = dictionary.primary
        lp, hp, js = [], [], []
        for a in atoms:
            Ta = apply_sio(kernel, a.values)
            chi = a.chi_norm(p)
            MTa = radial_max(Ta, phi, dictionary.ladder) if mode == "H" else None
            for w in weights:
                bound = w.measure(a.ball) ** (1 / p0) / chi
                lp.append(weighted_norm(Ta, w, p0) / bound)
                if MTa is not None:
                    hp.append(weighted_norm(MTa, w, p0) / bound)
                js.append(estimate_J(w, a.center, a.radius, p0, max(ctx.d, 0))[1])
        weighted = {"hp_lp": max(lp), "est_J": max(js)}
        if hp:
            weighted["hp_hp"] = max(hp)
    return BoundednessReport(mode, ratios, max(ratios, default=0.0), weighted)
