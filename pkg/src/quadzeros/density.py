"""One-level density of the rescaled zeros and its prediction curves.

Ordinates gamma are rescaled to tau = gamma log(X) / (2 pi).  Three curves are
compared against the histogram:

* the symplectic main term 1 - sin(2 pi tau)/(2 pi tau),
* the explicit-formula curve, adding the O(1/log X) bracket
  -log(pi) + Re psi(3/4 + i pi tau/L) + 2 Re zeta'/zeta(1 + 2r) + 2 Re A'(r),
* the ratios curve, which replaces -sin(2 pi tau)/(2 pi tau) by Re R_est.

Here L = log X and r = 2 pi i tau / L throughout.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate

from .discriminants import primes_up_to
from .special import (STIELTJES, ctx, digamma, log_gamma_array, zeta_array,
                      zeta_log_derivative)

TAU_MIN = 0.05
DEFAULT_P_MAX = 10**6
DEFAULT_BIN_WIDTH = 0.05
EULER_GAMMA = float(STIELTJES[0])
RATIOS_VARIANTS = ("derived", "printed")


class EmptyDatasetError(ValueError):
    pass


class SingularityError(ValueError):
    """tau is inside the excised neighbourhood of 0."""


@dataclass(frozen=True)
class Family:
    """Fundamental discriminants with X <= |d| < X + dX."""

    X: int
    dX: int
    cardinality: int | None = None

    def __post_init__(self):
        if self.X < 2 or self.dX < 1:
            raise ValueError("family needs X >= 2 and dX >= 1")
        if not (math.sqrt(self.X) * math.log(self.X) < self.dX < self.X):
            warnings.warn("family width outside sqrt(X) log X < dX < X; "
                          "lower-order terms may not apply", stacklevel=2)

    @property
    def log_x(self) -> float:
        return math.log(self.X)

    @property
    def rescale(self) -> float:
        return self.log_x / (2 * math.pi)


@dataclass(frozen=True)
class Histogram:
    rescale: float
    bin_width: float
    centers: np.ndarray
    counts: np.ndarray
    cardinality: int
    total_zeros: int
    lowest_only: bool = False

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.cardinality * self.bin_width)

    @property
    def sigma(self) -> np.ndarray:
        """One Poisson standard deviation of each bin's density."""
        return np.sqrt(self.counts) / (self.cardinality * self.bin_width)

    @property
    def bins(self) -> list[tuple[float, float]]:
        return list(zip(self.centers.tolist(), self.density.tolist()))


@dataclass(frozen=True)
class TestFunction:
    """g(tau) = amplitude * (sin(pi sigma tau) / (pi sigma tau))^2.

    Its Fourier transform is a triangle supported on (-sigma, sigma).
    """

    __test__ = False  # not a pytest class

    sigma: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not 0 < self.sigma < 0.5:
            raise ValueError("sigma must lie in (0, 1/2)")

    @property
    def g0(self) -> float:
        return self.amplitude

    def evaluate(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.amplitude * np.sinc(self.sigma * tau) ** 2

    def envelope(self, tau):
        return self.amplitude / (math.pi * self.sigma * np.asarray(tau, dtype=float)) ** 2


@dataclass
class DensityCurveSet:
    tau: np.ndarray
    main: np.ndarray
    explicit_curve: np.ndarray
    ratios_curve: np.ndarray
    term_gamma: np.ndarray
    term_zeta: np.ndarray
    term_aprime: np.ndarray
    r_est: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------

def build_histogram(dataset: Mapping[int, Sequence[float]], family: Family,
                    bin_width: float = DEFAULT_BIN_WIDTH, tau_max: float | None = None,
                    lowest_only: bool = False) -> Histogram:
    """Density of rescaled ordinates per discriminant per unit tau.

    ``dataset`` maps each discriminant to its ordinates (possibly none).
    Bins are [k w, (k+1) w) starting at 0; ordinates at or above tau_max are
    dropped.
    """
    if not dataset:
        raise EmptyDatasetError("no discriminants in dataset")
    rescale = family.rescale
    taus = []
    for ords in dataset.values():
        ords = sorted(ords)
        if lowest_only:
            ords = ords[:1]
        taus.extend(t * rescale for t in ords)
    taus = np.asarray(taus, dtype=float)
    if tau_max is None:
        tau_max = bin_width * (math.floor(taus.max() / bin_width) + 1) if taus.size else bin_width
    nbins = int(round(tau_max / bin_width))
    idx = np.floor(taus / bin_width).astype(int)
    idx = idx[(idx >= 0) & (idx < nbins)]
    counts = np.bincount(idx, minlength=nbins).astype(float)
    centers = (np.arange(nbins) + 0.5) * bin_width
    return Histogram(rescale=rescale, bin_width=bin_width, centers=centers, counts=counts,
                     cardinality=len(dataset), total_zeros=int(idx.size), lowest_only=lowest_only)


# ---------------------------------------------------------------------------
# curve ingredients
# ---------------------------------------------------------------------------

def main_term(tau):
    """1 - sin(2 pi tau) / (2 pi tau)."""
    return 1 - np.sinc(2 * np.asarray(tau, dtype=float))


def a_prime_tail_bound(p_max: int) -> float:
    """Estimate of sum_{p > p_max} log p / p^2."""
    return (math.log(p_max) + 1) / p_max


def a_prime(r, p_max: int = DEFAULT_P_MAX):
    """A'(r) = sum_p log p / ((p + 1)(p^{1+2r} - 1)), truncated at p_max.

    Accepts a scalar or an array of r; see a_prime_tail_bound for the
    truncation error.
    """
    if p_max < 10**5:
        raise ValueError("p_max must be at least 1e5")
    r_arr = np.atleast_1d(np.asarray(r, dtype=complex))
    if np.any(r_arr.real <= -0.25):
        raise ValueError("A'(r) needs re(r) > -1/4")
    p = primes_up_to(p_max).astype(float)
    logp = np.log(p)
    weight = logp / (p + 1)
    out = np.empty(r_arr.shape, dtype=complex)
    for i, rv in enumerate(r_arr):
        out[i] = np.sum(weight / np.expm1((1 + 2 * rv) * logp))
    return out[0] if np.ndim(r) == 0 else out


def _r_of(tau, log_x):
    return 2j * math.pi * np.asarray(tau, dtype=float) / log_x


def term_curves(tau, X: int, p_max: int = DEFAULT_P_MAX):
    """The three non-constant summands of the explicit-formula bracket.

    Returns (term_gamma, term_zeta, term_aprime) without the 1/log X factor.
    term_zeta at tau = 0 is the Laurent limit 2 gamma.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    log_x = math.log(X)
    tg = np.empty(tau.shape)
    tz = np.empty(tau.shape)
    for i, tv in enumerate(tau.tolist()):
        tg[i] = float(ctx.re(digamma(ctx.mpc(0.75, math.pi * tv / log_x))))
        if tv == 0:
            tz[i] = 2 * EULER_GAMMA
        else:
            tz[i] = 2 * float(ctx.re(zeta_log_derivative(ctx.mpc(1, 4 * math.pi * tv / log_x))))
    ta = 2 * a_prime(_r_of(tau, log_x), p_max).real
    return tg, tz, ta


def explicit_bracket(tau, X: int, p_max: int = DEFAULT_P_MAX) -> np.ndarray:
    tg, tz, ta = term_curves(tau, X, p_max)
    return -math.log(math.pi) + tg + tz + ta


def explicit_curve(tau, X: int, p_max: int = DEFAULT_P_MAX):
    """Main term plus the explicit-formula bracket over log X."""
    scalar = np.ndim(tau) == 0
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    out = main_term(tau) + explicit_bracket(tau, X, p_max) / math.log(X)
    return float(out[0]) if scalar else out


def _partial_sum_s(Y: float, r, log_x: float):
    return (3 * Y / math.pi**2) * np.exp(-r * math.log(Y / math.pi)) / (1 - r)


def ratios_r_est(tau, family: Family, variant: str = "derived", tau_min: float = TAU_MIN):
    """The ratios-conjecture replacement R_est(tau, X) for -sin(2 pi tau)/(2 pi tau).

    R_est = (-2/L) <(|d|/pi)^{-r}> Gamma(3/4 - r/2)/Gamma(3/4 + r/2) zeta(1 - 2r) A(-r; r)
    where <.> is the family average from partial summation and
    A(-r; r) = zeta(2) / zeta(2 - 2r).  ``variant="printed"`` uses
    zeta(-2 - 2r) in the denominator instead.
    """
    if variant not in RATIOS_VARIANTS:
        raise ValueError(f"variant must be one of {RATIOS_VARIANTS}")
    scalar = np.ndim(tau) == 0
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(np.abs(tau) < tau_min):
        raise SingularityError(f"|tau| must be at least {tau_min}")
    log_x = family.log_x
    r = _r_of(tau, log_x)
    X, dX = float(family.X), float(family.dX)
    avg = (_partial_sum_s(X + dX, r, log_x) - _partial_sum_s(X, r, log_x)) / (3 * dX / math.pi**2)
    gamma_ratio = np.exp(log_gamma_array(0.75 - r / 2) - log_gamma_array(0.75 + r / 2))
    denom = zeta_array(2 - 2 * r) if variant == "derived" else zeta_array(-2 - 2 * r)
    value = (-2 / log_x) * avg * gamma_ratio * (math.pi**2 / 6) * zeta_array(1 - 2 * r) / denom
    return complex(value[0]) if scalar else value


def ratios_curve(tau, family: Family, variant: str = "derived", p_max: int = DEFAULT_P_MAX,
                 tau_min: float = TAU_MIN):
    """1 + Re R_est plus the explicit-formula bracket over log X."""
    scalar = np.ndim(tau) == 0
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    rest = ratios_r_est(tau, family, variant, tau_min).real
    out = 1 + rest + explicit_bracket(tau, family.X, p_max) / family.log_x
    return float(out[0]) if scalar else out


def density_curves(tau, family: Family, variant: str = "derived",
                   p_max: int = DEFAULT_P_MAX) -> DensityCurveSet:
    tau = np.asarray(tau, dtype=float)
    tg, tz, ta = term_curves(tau, family.X, p_max)
    bracket = -math.log(math.pi) + tg + tz + ta
    r_est = ratios_r_est(tau, family, variant)
    return DensityCurveSet(tau=tau, main=main_term(tau),
                           explicit_curve=main_term(tau) + bracket / family.log_x,
                           ratios_curve=1 + r_est.real + bracket / family.log_x,
                           term_gamma=tg, term_zeta=tz, term_aprime=ta, r_est=r_est)


def local_extrema(x: np.ndarray, y: np.ndarray) -> list[float]:
    """Abscissae of interior local extrema, refined by a parabola through 3 points."""
    out = []
    for i in range(1, len(y) - 1):
        if (y[i] - y[i - 1]) * (y[i + 1] - y[i]) < 0:
            denom = y[i - 1] - 2 * y[i] + y[i + 1]
            shift = 0.5 * (y[i - 1] - y[i + 1]) / denom if denom else 0.0
            out.append(float(x[i] + shift * (x[i + 1] - x[i])))
    return out


# ---------------------------------------------------------------------------
# integral against a band-limited test function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegralReport:
    value: float
    reference: float
    t_cut: float
    excisions: tuple[tuple[float, float], ...]   # (delta, value)


def _tail_cut(g: TestFunction, rest_bound: float, tol: float) -> float:
    # 2 * int_T^inf g0 / (pi sigma t)^2 * rest_bound / t dt < tol
    return math.sqrt(g.g0 * rest_bound / (math.pi**2 * g.sigma**2 * tol))


def _integrate_rest(g: TestFunction, family: Family, lo: float, hi: float, variant: str) -> float:
    def f(t):
        return float(g.evaluate(t) * ratios_r_est(t, family, variant, tau_min=0.0).real)

    total = 0.0
    edges = np.arange(math.floor(lo), math.ceil(hi) + 1, dtype=float)
    edges = np.unique(np.clip(np.concatenate([[lo], edges, [hi]]), lo, hi))
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        val, _ = integrate.quad(f, a, b, epsabs=1e-11, epsrel=1e-10, limit=200)
        total += val
    return 2 * total


def integrate_against_test(g: TestFunction, family: Family, delta: float,
                           variant: str = "derived", tol: float = 1e-6,
                           levels: int = 3) -> IntegralReport:
    """int_{|tau| >= delta} g(tau) Re R_est(tau) dtau with excision data.

    Reports the integral at delta, delta/2, ... (``levels`` values) next to
    the expected limit -g(0)/2.  The integrand is even, so only tau > 0 is
    integrated.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    probe = np.linspace(1.0, 50.0, 400)
    rest_bound = float(np.max(np.abs(probe * ratios_r_est(probe, family, variant).real)))
    t_cut = max(_tail_cut(g, rest_bound, tol), 4 * delta + 1)
    deltas = tuple(delta / 2**i for i in range(levels))
    # integrate the shared outer part once
    outer = _integrate_rest(g, family, delta, t_cut, variant)
    rows = [(delta, outer)]
    inner = 0.0
    for prev, cur in zip(deltas[:-1], deltas[1:]):
        inner += _integrate_rest(g, family, cur, prev, variant)
        rows.append((cur, outer + inner))
    return IntegralReport(value=outer, reference=-g.g0 / 2, t_cut=t_cut, excisions=tuple(rows))
