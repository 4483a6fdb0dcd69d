"""Maximal operators built from smooth test functions.

The grand maximal function is a supremum over the Schwartz seminorm ball, which
cannot be computed.  We replace it by a finite dictionary of compactly supported
bumps and their derivatives, each rescaled into the seminorm ball using seminorm
tables that are evaluated exactly from the closed form of the derivatives.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy import signal as sps

from .grid import Grid, GridFunction, Profile, ScaleLadder, convolve_at_scale
from .maximal import hl_maximal
from .vlebesgue import ExponentFunction, luxemburg_norm

REF_POINTS = 20001


# --- the bump exp(-1/(1-x^2)) and its derivatives -----------------------------

def _padd(a, b):
    out = [0] * max(len(a), len(b))
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] += c
    return out


def _pmul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _pder(a):
    return [i * c for i, c in enumerate(a)][1:] or [0]


@lru_cache(maxsize=None)
def bump_derivative_poly(k: int) -> tuple[int, ...]:
    """Integer coefficients of P_k with psi^(k) = P_k(x) (1-x^2)^(-2k) psi(x)."""
    if k == 0:
        return (1,)
    P = list(bump_derivative_poly(k - 1))
    j = k - 1
    one_minus = [1, 0, -1]
    t1 = _pmul(_pder(P), _pmul(one_minus, one_minus))
    t2 = _pmul([0, 4 * j], _pmul(P, one_minus))
    t3 = _pmul([0, -2], P)
    out = _padd(_padd(t1, t2), t3)
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


def bump_derivative(k: int, x: np.ndarray) -> np.ndarray:
    """k-th derivative of psi(x) = exp(-1/(1-x^2)) on |x| < 1, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    xi = x[inside]
    s = 1.0 - xi * xi
    coeffs = [float(c) for c in bump_derivative_poly(k)]
    poly = np.polynomial.polynomial.polyval(xi, coeffs)
    out[inside] = poly * np.exp(-1.0 / s - 2 * k * np.log(s))
    return out


@dataclass(frozen=True)
class Factor:
    """One 1D factor x -> psi^(order)(x/scale - shift)."""

    order: int
    scale: float = 1.0
    shift: float = 0.0

    @property
    def support(self) -> tuple[float, float]:
        return (self.scale * (self.shift - 1), self.scale * (self.shift + 1))

    def __call__(self, x):
        return bump_derivative(self.order, np.asarray(x) / self.scale - self.shift)

    def table(self, N: int) -> np.ndarray:
        """T[a, b] = sup_x |x^a D^b factor(x)| for a, b <= N, evaluated on a fine mesh."""
        u = np.linspace(-1, 1, REF_POINTS)
        x = self.scale * (u + self.shift)
        T = np.zeros((N + 1, N + 1))
        for b in range(N + 1):
            db = bump_derivative(self.order + b, u) * self.scale ** (-b)
            for a in range(N + 1):
                T[a, b] = float(np.max(np.abs(x**a * db)))
        return T

    def integral(self) -> float:
        u = np.linspace(-1, 1, REF_POINTS)
        vals = bump_derivative(self.order, u)
        return float(np.trapezoid(vals, u) * self.scale)


@dataclass(frozen=True)
class TestProfile(Profile):
    """A dictionary member: amplitude * product of 1D bump factors."""

    factors: tuple[Factor, ...] = ()
    amplitude: float = 1.0
    N: int = 0
    seminorms: np.ndarray = field(default=None, compare=False, repr=False)
    integral: float = 0.0

    __test__ = False

    @property
    def max_seminorm(self) -> float:
        return float(np.max(self.seminorms))

    def params(self) -> dict:
        return {"factors": [[f.order, f.scale, f.shift] for f in self.factors], "amplitude": self.amplitude}


def _seminorm_table(factors: Sequence[Factor], N: int) -> np.ndarray:
    tabs = [f.table(N) for f in factors]
    if len(tabs) == 1:
        return tabs[0]
    T1, T2 = tabs
    # S[|alpha|, |beta|] = max over multi-indices of that order pair
    S = np.zeros((N + 1, N + 1))
    for a1 in range(N + 1):
        for a2 in range(N + 1 - a1):
            for b1 in range(N + 1):
                for b2 in range(N + 1 - b1):
                    v = T1[a1, b1] * T2[a2, b2]
                    if v > S[a1 + a2, b1 + b2]:
                        S[a1 + a2, b1 + b2] = v
    return S


def make_profile(factors: Sequence[Factor], N: int, normalize: bool = True, name: str | None = None) -> TestProfile:
    factors = tuple(factors)
    dim = len(factors)
    S = _seminorm_table(factors, N)
    amp = 1.0 / float(S.max()) if normalize else 1.0
    integral = amp * math.prod(f.integral() for f in factors)
    radius = math.sqrt(sum(max(abs(lo), abs(hi)) ** 2 for lo, hi in (f.support for f in factors)))
    if dim == 1:
        f0 = factors[0]
        func = lambda x, f0=f0, amp=amp: amp * f0(x)
    else:
        f0, f1 = factors
        func = lambda x, y, f0=f0, f1=f1, amp=amp: amp * f0(x) * f1(y)
    if name is None:
        name = "bump" + "".join(f"[{f.order},{f.scale:g},{f.shift:g}]" for f in factors)
    return TestProfile(name=name, func=func, support_radius=radius, dim=dim, factors=factors,
                       amplitude=amp, N=N, seminorms=S * amp, integral=integral)


def default_order(n: int, p0: float) -> int:
    """floor(n/p0) + n + 2, which exceeds n/p0 + n + 1."""
    return int(math.floor(n / p0 + 1e-12)) + n + 2


VARIANTS = ((1.0, 0.0), (0.5, 0.5), (1.5, -0.25))


@dataclass(frozen=True)
class TestDictionary:
    N: int
    profiles: tuple[TestProfile, ...]
    ladder: ScaleLadder

    __test__ = False

    def __post_init__(self):
        if not self.profiles:
            raise ValueError("dictionary is empty")
        if all(p.integral == 0 for p in self.profiles):
            raise ValueError("dictionary needs a member with nonzero integral")

    @property
    def primary(self) -> TestProfile:
        """The first member with nonzero integral (the normalized bump)."""
        return next(p for p in self.profiles if abs(p.integral) > 1e-12)

    def manifest(self) -> dict:
        return {
            "N": self.N,
            "ladder": [self.ladder.t_min, self.ladder.t_max, self.ladder.refine],
            "profiles": [
                {"name": p.name, "parameters": p.params(), "N": p.N,
                 "seminorms": p.seminorms.tolist(), "integral": p.integral}
                for p in self.profiles
            ],
        }

    def manifest_hash(self) -> str:
        blob = json.dumps(self.manifest(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "TestDictionary":
        with open(path) as fh:
            man = json.load(fh)
        N = int(man["N"])
        profs = []
        for entry in man["profiles"]:
            facs = [Factor(int(o), float(s), float(c)) for o, s, c in entry["parameters"]["factors"]]
            profs.append(make_profile(facs, N, name=entry["name"]))
        return cls(N, tuple(profs), ScaleLadder(*man["ladder"]))


def make_dictionary(dim: int, N: int, ladder: ScaleLadder, max_order: int | None = None) -> TestDictionary:
    """Normalized bump, its coordinate derivatives up to order N, and two variants of each."""
    top = N if max_order is None else min(N, max_order)
    profs = []
    for scale, shift in VARIANTS:
        for m in range(top + 1):
            if dim == 1:
                profs.append(make_profile([Factor(m, scale, shift)], N))
            else:
                profs.append(make_profile([Factor(m, scale, shift), Factor(0, scale, shift)], N))
                if m > 0:
                    profs.append(make_profile([Factor(0, scale, shift), Factor(m, scale, shift)], N))
    return TestDictionary(N, tuple(profs), ladder)


def unit_bump(dim: int) -> TestProfile:
    """Bump with integral one (not normalized into the seminorm ball)."""
    base = make_profile([Factor(0)] * dim, 0, normalize=False)
    scale = 1.0 / base.integral
    func = base.func
    if dim == 1:
        f = lambda x: scale * func(x)
    else:
        f = lambda x, y: scale * func(x, y)
    return TestProfile(name="unit_bump", func=f, support_radius=base.support_radius, dim=dim,
                       factors=base.factors, amplitude=scale, N=0, seminorms=base.seminorms * scale,
                       integral=1.0)


# --- maximal operators ------------------------------------------------------

def _require(ladder: ScaleLadder):
    if ladder is None or len(ladder) == 0:
        raise ValueError("empty scale ladder")


def smoothed_family(f: GridFunction, phi: Profile, ladder: ScaleLadder):
    for t in ladder:
        if t < f.grid.h / 2:
            continue
        yield t, np.abs(convolve_at_scale(f, phi, t).values)


def radial_max(f: GridFunction, phi: Profile, ladder: ScaleLadder) -> GridFunction:
    """sup over ladder scales of |f * Phi_t|."""
    _require(ladder)
    out = np.zeros(f.grid.shape)
    for _, U in smoothed_family(f, phi, ladder):
        np.maximum(out, U, out=out)
    return GridFunction(f.grid, out)


def _aperture_footprint(t: float, h: float, dim: int) -> np.ndarray:
    half = max(int(math.ceil(t / h)) - 1, 0)
    m = np.arange(-half, half + 1)
    if dim == 1:
        fp = np.abs(m) * h < t
    else:
        fp = np.hypot(m[:, None], m[None, :]) * h < t
    fp[(half,) * dim] = True
    return fp


def _cone_max(U: np.ndarray, t: float, h: float) -> np.ndarray:
    fp = _aperture_footprint(t, h, U.ndim)
    if U.ndim == 1:
        return ndimage.maximum_filter1d(U, size=fp.shape[0], mode="constant", cval=0.0)
    return ndimage.maximum_filter(U, footprint=fp, mode="constant", cval=0.0)


def nontangential_max(f: GridFunction, phi: Profile, ladder: ScaleLadder) -> GridFunction:
    """sup over ladder t and lattice y with |x-y| < t of |f * Phi_t(y)|."""
    _require(ladder)
    out = np.zeros(f.grid.shape)
    for t, U in smoothed_family(f, phi, ladder):
        np.maximum(out, _cone_max(U, t, f.grid.h), out=out)
    return GridFunction(f.grid, out)


def _offsets_by_distance(n: int, dim: int, h: float):
    m = np.arange(-(n - 1), n)
    if dim == 1:
        offs = m[:, None]
    else:
        A, B = np.meshgrid(m, m, indexing="ij")
        offs = np.stack([A.ravel(), B.ravel()], axis=1)
    dist = np.sqrt(np.sum(offs.astype(float) ** 2, axis=1)) * h
    order = np.argsort(dist, kind="stable")
    return offs[order], dist[order]


def _shifted(U: np.ndarray, off) -> np.ndarray:
    """V[x] = U[x - off] with zero outside the grid."""
    out = np.zeros_like(U)
    src = []
    dst = []
    for o, n in zip(off, U.shape):
        o = int(o)
        if o >= 0:
            dst.append(slice(o, n))
            src.append(slice(0, n - o))
        else:
            dst.append(slice(0, n + o))
            src.append(slice(-o, n))
    out[tuple(dst)] = U[tuple(src)]
    return out


def tangential_max(f: GridFunction, phi: Profile, T: float, ladder: ScaleLadder) -> GridFunction:
    """sup over lattice y and ladder t of |Phi_t * f(x-y)| (1 + |y|/t)^{-T}."""
    if T <= 0:
        raise ValueError("T must be positive")
    _require(ladder)
    g = f.grid
    offs, dist = _offsets_by_distance(g.n, g.dim, g.h)
    out = np.zeros(g.shape)
    for t, U in smoothed_family(f, phi, ladder):
        umax = float(U.max())
        if umax == 0:
            continue
        np.maximum(out, U, out=out)
        weights = (1 + dist / t) ** (-T)
        for off, w in zip(offs[1:], weights[1:]):
            # weights decrease with |y|: nothing further can beat the current floor
            if w * umax <= out.min():
                break
            np.maximum(out, w * _shifted(U, off), out=out)
    return GridFunction(g, out)


def grand_max(f: GridFunction, dictionary: TestDictionary, ladder: ScaleLadder | None = None) -> GridFunction:
    """Pointwise max of radial maximal functions over the dictionary."""
    ladder = ladder or dictionary.ladder
    out = np.zeros(f.grid.shape)
    if f.is_zero():
        return GridFunction(f.grid, out)
    for phi in dictionary.profiles:
        np.maximum(out, radial_max(f, phi, ladder).values, out=out)
    return GridFunction(f.grid, out)


def hardy_norm(f: GridFunction, p: ExponentFunction, dictionary: TestDictionary) -> float:
    """||grand_max f||_p, the H^{p(.)} norm surrogate."""
    return luxemburg_norm(grand_max(f, dictionary), p)


# --- Poisson kernel ---------------------------------------------------------

POISSON_CUTOFF = 1e-12


def poisson_constant(n: int) -> float:
    return math.gamma((n + 1) / 2) / math.pi ** ((n + 1) / 2)


def poisson_kernel(x: np.ndarray, t: float, n: int) -> np.ndarray:
    """P_t(x) = t^{-n} c_n (1 + |x/t|^2)^{-(n+1)/2}; ``x`` holds |x|."""
    r = np.asarray(x, dtype=float) / t
    return poisson_constant(n) * (1 + r * r) ** (-(n + 1) / 2) / t**n


def poisson_truncation_radius(n: int) -> float:
    return math.sqrt(POISSON_CUTOFF ** (-2 / (n + 1)) - 1)


def poisson_truncated_mass(n: int) -> float:
    R = poisson_truncation_radius(n)
    if n == 1:
        return 2 / math.pi * math.atan(R)
    return 1 - 1 / math.sqrt(1 + R * R)


def poisson_smooth(f: GridFunction, t: float) -> GridFunction:
    """f * P_t with the kernel cut where it falls below 1e-12 of its peak, renormalized to unit mass."""
    g = f.grid
    if f.is_zero():
        return g.zeros()
    m = np.arange(-(g.n - 1), g.n) * g.h
    r = np.abs(m) if g.dim == 1 else np.hypot(m[:, None], m[None, :])
    K = poisson_kernel(r, t, g.dim)
    K[r > poisson_truncation_radius(g.dim) * t] = 0.0
    K /= poisson_truncated_mass(g.dim)
    out = sps.fftconvolve(f.values, K, mode="same") * g.cell_volume
    return GridFunction(g, out)


def poisson_max(f: GridFunction, ladder: ScaleLadder) -> GridFunction:
    """Non-tangential sup of the Poisson extension over ladder scales."""
    _require(ladder)
    out = np.zeros(f.grid.shape)
    for t in ladder:
        U = np.abs(poisson_smooth(f, t).values)
        np.maximum(out, _cone_max(U, t, f.grid.h), out=out)
    return GridFunction(f.grid, out)


def poisson_semigroup_error(s: float, t: float, h: float = 0.02, extent: float = 2000.0,
                            window: float = 5.0) -> float:
    """max |P_s * P_t - P_{s+t}| / P_{s+t}(0) in 1D, by direct quadrature of the kernels."""
    y = np.arange(-extent, extent + h / 2, h)
    xs = np.arange(-window, window + h / 2, 0.25)
    Pt = poisson_kernel(np.abs(y), t, 1)
    worst = 0.0
    for x in xs:
        conv = float(np.sum(poisson_kernel(np.abs(x - y), s, 1) * Pt) * h)
        exact = float(poisson_kernel(abs(x), s + t, 1))
        worst = max(worst, abs(conv - exact))
    return worst / float(poisson_kernel(0.0, s + t, 1))


# --- truncated operators ------------------------------------------------------

def truncation_exponent(n: int, p0: float) -> float:
    """max(2 ceil(2n/p0), 4n): satisfies L/(2n) > 1/p0."""
    return float(max(2 * math.ceil(2 * n / p0), 4 * n))


def truncated_radial_max(f: GridFunction, phi: Profile, eps: float, Lexp: float,
                         ladder: ScaleLadder) -> GridFunction:
    """sup over t of |f * Phi_t(x)| t^L / (t + eps + eps|x|)^L."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if Lexp <= 0:
        raise ValueError("L must be positive")
    r = f.grid.radius()
    out = np.zeros(f.grid.shape)
    for t, U in smoothed_family(f, phi, ladder):
        np.maximum(out, U * (t / (t + eps + eps * r)) ** Lexp, out=out)
    return GridFunction(f.grid, out)


# --- comparisons ------------------------------------------------------------

def comparability_ratios(f: GridFunction, p: ExponentFunction, dictionary: TestDictionary,
                         ladder: ScaleLadder | None = None) -> dict:
    """Norm ratios radial/grand, grand/poisson, poisson/radial."""
    ladder = ladder or dictionary.ladder
    phi = dictionary.primary
    rad = luxemburg_norm(radial_max(f, phi, ladder), p)
    grd = luxemburg_norm(grand_max(f, dictionary, ladder), p)
    poi = luxemburg_norm(poisson_max(f, ladder), p)
    return {"radial/grand": rad / grd, "grand/poisson": grd / poi, "poisson/radial": poi / rad}


def tangential_domination(f: GridFunction, phi: Profile, T: float, ladder: ScaleLadder) -> float:
    """max over x of M_T f(x)^q / M((M_1 f)^q)(x) - 1 with q = n/T (the slack)."""
    q = f.grid.dim / T
    mt = tangential_max(f, phi, T, ladder).values
    m1 = nontangential_max(f, phi, ladder).values
    rhs = hl_maximal(GridFunction(f.grid, m1**q)).values
    lhs = mt**q
    mask = lhs > 0
    if not mask.any():
        return 0.0
    return float(np.max(lhs[mask] / rhs[mask]) - 1)
