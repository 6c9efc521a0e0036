"""Complex special functions used by the L-function engine and the density module.

Scalar routines run in a private mpmath context at ``WORKING_PREC`` bits and
return ``mpc``/``mpf`` values.  The ``*_ld`` routines are numpy-vectorized
counterparts in 80-bit extended precision (``np.longdouble``) for the hot
evaluation paths.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import comb

import mpmath
import numpy as np

WORKING_PREC = 128
RECURSION_PREC = 192
SERIES_SWITCH = 6.0
CF_MAX_ITER = 10_000
LAURENT_RADIUS = 1e-4

ctx = mpmath.ctx_mp.MPContext()
ctx.prec = WORKING_PREC

# Stieltjes constants gamma_0 .. gamma_4
STIELTJES = (
    "0.57721566490153286060651209008240243104",
    "-0.072815845483676724860586375874901319138",
    "-0.0096903631928723184845303860352125293591",
    "0.0020538344203033458661600465427533842857",
    "0.0023253700654673000077578876382287277390",
)

# Numerical Recipes (3rd ed.) Lanczos set, g = 671/128, 14 terms.
_LANCZOS_G = Fraction(671, 128)
_LANCZOS_C0 = "0.999999999999997092"
_LANCZOS_COEFFS = (
    "57.1562356658629235", "-59.5979603554754912", "14.1360979747417471",
    "-0.491913816097620199", "0.339946499848118887e-4", "0.465236289270485756e-4",
    "-0.983744753048795646e-4", "0.158088703224912494e-3", "-0.210264441724104883e-3",
    "0.217439618115212643e-3", "-0.164318106536763890e-3", "0.844182239838527433e-4",
    "-0.261908384015814087e-4", "0.368991826595316234e-5",
)


class PoleError(ValueError):
    """Argument sits on a pole of the function."""


class ConvergenceError(ArithmeticError):
    """An iterative expansion failed to converge within its iteration cap."""


class NearZeroError(ArithmeticError):
    """A logarithmic derivative was requested too close to a zero."""


@lru_cache(maxsize=None)
def bernoulli(n: int) -> Fraction:
    """Bernoulli number B_n (B_1 = -1/2)."""
    table = [Fraction(1)]
    for m in range(1, n + 1):
        acc = sum((comb(m + 1, k) * table[k] for k in range(m)), Fraction(0))
        table.append(-acc / (m + 1))
    return table[n]


def _mpc(z):
    if isinstance(z, (tuple, list)):
        return ctx.mpc(*z)
    return ctx.mpc(z)


def _is_nonpositive_integer(z) -> bool:
    return z.imag == 0 and z.real <= 0 and z.real == ctx.floor(z.real)


# ---------------------------------------------------------------------------
# Gamma family
# ---------------------------------------------------------------------------

def log_gamma(z):
    """Log-gamma via the Lanczos approximation (about 15 correct digits).

    Uses the reflection formula for re(z) < 0.  Raises PoleError at the
    non-positive integers.
    """
    z = _mpc(z)
    if _is_nonpositive_integer(z):
        raise PoleError(f"log_gamma pole at {z}")
    if z.real < 0:
        return ctx.log(ctx.pi / ctx.sin(ctx.pi * z)) - log_gamma(1 - z)
    g = ctx.mpf(_LANCZOS_G.numerator) / _LANCZOS_G.denominator
    tmp = z + g
    tmp = (z + ctx.mpf("0.5")) * ctx.log(tmp) - tmp
    ser = ctx.mpf(_LANCZOS_C0)
    y = z
    for c in _LANCZOS_COEFFS:
        y = y + 1
        ser += ctx.mpf(c) / y
    return tmp + ctx.log(ctx.sqrt(2 * ctx.pi) * ser / z)


def _stirling_log_gamma(z, log, const, half_log_2pi, shift: int, terms: int):
    """Shifted Stirling series for log Gamma(z + shift) plus the shift product.

    Works on mp scalars or numpy arrays; ``const`` maps a Fraction into the
    backend's number type so no coefficient passes through float64.
    """
    w = z + shift
    half = const(Fraction(1, 2))
    acc = (w - half) * log(w) - w + half_log_2pi
    inv = 1 / w
    inv2 = inv * inv
    power = inv
    for k in range(1, terms + 1):
        acc = acc + const(bernoulli(2 * k) / (2 * k * (2 * k - 1))) * power
        power = power * inv2
    prod = 1
    for k in range(shift):
        prod = prod * (z + k)
    return acc, prod


def _mp_const(f: Fraction):
    return ctx.mpf(f.numerator) / f.denominator


def _ld_const(f: Fraction):
    return np.longdouble(f.numerator) / np.longdouble(f.denominator)


PI_LD = np.longdouble("3.14159265358979323846264338327950288")


@lru_cache(maxsize=4096)
def _gamma_hp_cached(re, im, prec):
    with ctx.workprec(prec + 32):
        z = ctx.mpc(re, im)
        acc, prod = _stirling_log_gamma(
            z, ctx.log, _mp_const, ctx.log(2 * ctx.pi) / 2, shift=40, terms=30)
        value = ctx.exp(acc) / prod
    return +value


def gamma_hp(s):
    """Complete gamma at working precision via the shifted Stirling series."""
    s = _mpc(s)
    if _is_nonpositive_integer(s):
        raise PoleError(f"gamma pole at {s}")
    if s.real < 1:
        m = int(ctx.ceil(1 - s.real))
        prod = ctx.mpc(1)
        for k in range(m):
            prod *= s + k
        return gamma_hp(s + m) / prod
    return _gamma_hp_cached(s.real, s.imag, ctx.prec)


def gamma_ld(s: np.ndarray) -> np.ndarray:
    """Complete gamma of a complex array in 80-bit precision (re(s) > 0)."""
    s = np.asarray(s, dtype=np.clongdouble)
    acc, prod = _stirling_log_gamma(
        s, np.log, _ld_const, np.log(2 * PI_LD) / 2, shift=12, terms=12)
    return np.exp(acc) / prod


def ld_to_mp(x) -> "ctx.mpf":
    """Exact conversion of a long double to an mpf."""
    x = np.longdouble(x)
    mant, exp = np.frexp(x)
    return ctx.ldexp(ctx.mpf(int(np.ldexp(mant, 64))), int(exp) - 64)


def mp_to_ld(x) -> np.longdouble:
    return np.longdouble(ctx.nstr(ctx.mpf(x), 24, strip_zeros=False))


@lru_cache(maxsize=1 << 16)
def _gamma_rounding(re, im):
    # ~2^-80 relative: enough to round correctly to 64 mantissa bits most of the time
    with ctx.workprec(96):
        z = ctx.mpc(re, im)
        prod = ctx.mpc(1)
        while z.real < 1:
            prod *= z
            z += 1
        acc, shift_prod = _stirling_log_gamma(
            z, ctx.log, _mp_const, ctx.log(2 * ctx.pi) / 2, shift=24, terms=20)
        value = ctx.exp(acc) / (shift_prod * prod)
    return mp_to_ld(value.real), mp_to_ld(value.imag)


def gamma_ld_rounded(s: np.ndarray) -> np.ndarray:
    """Gamma(s) evaluated in 96-bit arithmetic and rounded to long double.

    Costs well under a millisecond per point; use it for the per-t factors
    where the few-ulp error of gamma_ld would scale every term of a long sum.
    """
    s = np.asarray(s, dtype=np.clongdouble)
    out = np.empty(s.shape, dtype=np.clongdouble)
    for idx, z in np.ndenumerate(s):
        re, im = _gamma_rounding(ld_to_mp(z.real), ld_to_mp(z.imag))
        out[idx] = re + 1j * im
    return out


def digamma(z):
    """psi(z) by upward recurrence to re(z) >= 12 then the asymptotic series."""
    z = _mpc(z)
    if _is_nonpositive_integer(z):
        raise PoleError(f"digamma pole at {z}")
    if z.real < 0.5:
        return digamma(1 - z) - ctx.pi / ctx.tan(ctx.pi * z)
    acc = ctx.mpc(0)
    while z.real < 12:
        acc -= 1 / z
        z += 1
    inv2 = 1 / (z * z)
    power = inv2
    series = ctx.log(z) - 1 / (2 * z)
    for k in range(1, 25):
        b = bernoulli(2 * k)
        term = ctx.mpf(b.numerator) / (b.denominator * 2 * k) * power
        series -= term
        if abs(term) < ctx.eps * abs(series):
            break
        power *= inv2
    return acc + series


# ---------------------------------------------------------------------------
# Incomplete gamma and the kernel G(s, x) = x^{-s} Gamma(s, x)
# ---------------------------------------------------------------------------

def _lower_series_sum(s, x):
    """Sum_{n>=0} x^n / (s (s+1) ... (s+n))."""
    term = 1 / s
    total = term
    n = 0
    while True:
        n += 1
        term *= x / (s + n)
        total += term
        if abs(term) < ctx.eps * abs(total):
            return total
        if n > CF_MAX_ITER:
            raise ConvergenceError("incomplete gamma series did not converge")


def _upper_cf(s, x):
    """Continued fraction h with Gamma(s, x) = e^{-x} x^s h (modified Lentz)."""
    tiny = ctx.mpf(2) ** (-2 * ctx.prec)
    b = x + 1 - s
    c = 1 / tiny
    d = 1 / b
    h = d
    for i in range(1, CF_MAX_ITER + 1):
        an = -i * (i - s)
        b += 2
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < ctx.eps:
            return h
    raise ConvergenceError(f"continued fraction for Gamma({s}, {x}) did not converge")


def _use_series(s, x) -> bool:
    return x < SERIES_SWITCH or s.real > x + 1


def upper_incomplete_gamma(s, x):
    """Gamma(s, x) for x > 0: series below x = 6, continued fraction above.

    The series branch also covers re(s) > x + 1, where the continued fraction
    converges poorly.  Non-positive integer s is handled by upward recurrence
    from the exponential integral.
    """
    s = _mpc(s)
    x = ctx.mpf(x)
    if x <= 0:
        raise ValueError("upper_incomplete_gamma requires x > 0")
    if _is_nonpositive_integer(s):
        if s.real == 0:
            return ctx.mpc(_exp_integral_e1(x))
        return (upper_incomplete_gamma(s + 1, x) - x ** s * ctx.exp(-x)) / s
    if _use_series(s, x):
        lower = x ** s * ctx.exp(-x) * _lower_series_sum(s, x)
        return gamma_hp(s) - lower
    return ctx.exp(-x) * x ** s * _upper_cf(s, x)


def _exp_integral_e1(x):
    if x >= SERIES_SWITCH:
        return ctx.exp(-x) * _upper_cf(ctx.mpc(0), x).real
    total = -ctx.euler - ctx.log(x)
    term = ctx.mpf(1)
    k = 0
    while True:
        k += 1
        term *= -x / k
        contrib = -term / k
        total += contrib
        if abs(contrib) < ctx.eps * abs(total):
            return total


def kernel(s, x):
    """G(s, x) = x^{-s} Gamma(s, x) = int_1^inf exp(-x y) y^s dy / y."""
    s = _mpc(s)
    x = ctx.mpf(x)
    if x <= 0:
        raise ValueError("kernel requires x > 0")
    if not _is_nonpositive_integer(s) and not _use_series(s, x):
        return ctx.exp(-x) * _upper_cf(s, x)
    return x ** (-s) * upper_incomplete_gamma(s, x)


def kernel_derivative_sequence(s, x, order: int):
    """[G^(k)(s, x) for k = 0..order], with G^(k)(s, x) = (-1)^k G(s + k, x).

    One incomplete-gamma evaluation seeds the forward recursion
    G(s+1, x) = e^{-x}/x + (s/x) G(s, x), which is carried at RECURSION_PREC
    bits and rounded to WORKING_PREC on output.
    """
    if order < 0 or order > 256:
        raise ValueError("order must lie in [0, 256]")
    limit = ctx.mpf(2) ** 16383
    with ctx.workprec(RECURSION_PREC):
        s = _mpc(s)
        x = ctx.mpf(x)
        g = kernel(s, x)
        e = ctx.exp(-x) / x
        out = []
        for k in range(order + 1):
            if abs(g) > limit:
                raise OverflowError(f"G(s+{k}, x) exceeds the extended exponent range")
            out.append(g if k % 2 == 0 else -g)
            g = e + (s + k) / x * g
    return [+v for v in out]


def taylor_remainder_bound(B: int, x, x0):
    """((x/x0 - 1)^B / B!) Gamma(B, x0): bound on the order-B Taylor remainder of G."""
    x = ctx.mpf(x)
    x0 = ctx.mpf(x0)
    if B < 1 or not 0 < x0 <= x:
        raise ValueError("need B >= 1 and 0 < x0 <= x")
    if x == x0:
        return ctx.mpf(0)
    return (x / x0 - 1) ** B / ctx.factorial(B) * upper_incomplete_gamma(B, x0).real


def taylor_remainder_bound_weak(B: int, x, x0):
    """(x/x0 - 1)^B / B, the cruder form of the same bound."""
    x = ctx.mpf(x)
    x0 = ctx.mpf(x0)
    if B < 1 or not 0 < x0 <= x:
        raise ValueError("need B >= 1 and 0 < x0 <= x")
    return (x / x0 - 1) ** B / B


# ---------------------------------------------------------------------------
# Vectorized extended-precision kernel
# ---------------------------------------------------------------------------

_LD_EPS = np.finfo(np.longdouble).eps


def kernel_ld(s, x, gamma_s=None) -> np.ndarray:
    """G(s, x) elementwise in 80-bit precision; s and x broadcast together.

    Intended for 0 < re(s) < 2 (the critical-strip kernels).  ``gamma_s`` may
    carry precomputed Gamma(s) values with the shape of ``s``.
    """
    s = np.asarray(s, dtype=np.clongdouble)
    x = np.asarray(x, dtype=np.longdouble)
    if np.any(x <= 0):
        raise ValueError("kernel_ld requires x > 0")
    if gamma_s is None:
        gamma_s = gamma_ld_rounded(s)
    s, x, gamma_s = np.broadcast_arrays(s, x, np.asarray(gamma_s, dtype=np.clongdouble))
    out = np.empty(s.shape, dtype=np.clongdouble)
    low = x < SERIES_SWITCH
    if low.any():
        out[low] = _kernel_series_ld(s[low], x[low], gamma_s[low])
    if (~low).any():
        out[~low] = _kernel_cf_ld(s[~low], x[~low])
    return out


def _kernel_series_ld(s, x, gamma_s):
    term = 1 / s
    total = term.copy()
    for n in range(1, 400):
        term = term * x / (s + n)
        total += term
        if n % 8 == 0 and np.all(np.abs(term) <= _LD_EPS * np.abs(total)):
            break
    else:
        raise ConvergenceError("vectorized incomplete gamma series did not converge")
    return gamma_s * np.exp(-s * np.log(x)) - np.exp(-x) * total


def _kernel_cf_ld(s, x):
    # modified Lentz; elements are retired once their update factor is 1 to
    # within a few ulps, since the last bit can oscillate forever
    tiny = np.longdouble("1e-4000")
    tol = 4 * _LD_EPS
    s = s.ravel()
    x = x.ravel()
    b = x + 1 - s
    c = np.full(s.shape, 1 / tiny, dtype=np.clongdouble)
    d = 1 / b
    h = d.copy()
    out = np.empty(s.shape, dtype=np.clongdouble)
    idx = np.arange(s.size)
    for i in range(1, CF_MAX_ITER + 1):
        an = -i * (i - s)
        b = b + 2
        d = an * d + b
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = b + an / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1 / d
        delta = d * c
        h = h * delta
        done = np.abs(delta - 1) <= tol
        if done.any():
            out[idx[done]] = np.exp(-x[done]) * h[done]
            keep = ~done
            idx, s, x, b, c, d, h = idx[keep], s[keep], x[keep], b[keep], c[keep], d[keep], h[keep]
            if idx.size == 0:
                return out
    raise ConvergenceError("vectorized continued fraction did not converge")


# ---------------------------------------------------------------------------
# Riemann zeta
# ---------------------------------------------------------------------------

def _em_cutoff(z) -> int:
    return 20 + int(abs(z.imag))


def _zeta_em(z):
    n_cut = _em_cutoff(z)
    total = ctx.mpc(0)
    for n in range(1, n_cut):
        total += ctx.mpf(n) ** (-z)
    big_n = ctx.mpf(n_cut)
    total += big_n ** (1 - z) / (z - 1) + big_n ** (-z) / 2
    rising = z
    power = big_n ** (-z - 1)
    for k in range(1, 60):
        b = bernoulli(2 * k)
        term = ctx.mpf(b.numerator) / b.denominator / ctx.factorial(2 * k) * rising * power
        total += term
        if abs(term) < ctx.eps * abs(total):
            return total
        rising *= (z + 2 * k - 1) * (z + 2 * k)
        power /= big_n * big_n
    raise ConvergenceError(f"Euler-Maclaurin for zeta({z}) did not converge")


def _zeta_em_with_derivative(z):
    n_cut = _em_cutoff(z)
    total = ctx.mpc(0)
    deriv = ctx.mpc(0)
    for n in range(1, n_cut):
        term = ctx.mpf(n) ** (-z)
        total += term
        deriv -= ctx.log(n) * term
    big_n = ctx.mpf(n_cut)
    log_n = ctx.log(big_n)
    head = big_n ** (1 - z) / (z - 1)
    total += head + big_n ** (-z) / 2
    deriv += -log_n * head - head / (z - 1) - log_n * big_n ** (-z) / 2
    rising = z
    rising_log_deriv = 1 / z
    power = big_n ** (-z - 1)
    for k in range(1, 60):
        b = bernoulli(2 * k)
        coeff = ctx.mpf(b.numerator) / b.denominator / ctx.factorial(2 * k)
        term = coeff * rising * power
        total += term
        dterm = term * (rising_log_deriv - log_n)
        deriv += dterm
        if abs(term) < ctx.eps * abs(total) and abs(dterm) < ctx.eps * abs(deriv):
            return total, deriv
        rising_log_deriv += 1 / (z + 2 * k - 1) + 1 / (z + 2 * k)
        rising *= (z + 2 * k - 1) * (z + 2 * k)
        power /= big_n * big_n
    raise ConvergenceError(f"Euler-Maclaurin for zeta'({z}) did not converge")


def riemann_zeta(z):
    """zeta(z): Euler-Maclaurin for re(z) > 1/2, functional equation otherwise."""
    z = _mpc(z)
    if z == 1:
        raise PoleError("zeta has a pole at z = 1")
    if z.real > 0.5:
        return _zeta_em(z)
    w = 1 - z
    gamma_w = ctx.exp(log_gamma(w))
    return 2 ** z * ctx.pi ** (z - 1) * ctx.sin(ctx.pi * z / 2) * gamma_w * _zeta_em(w)


def log_gamma_array(z) -> np.ndarray:
    """Vectorized Lanczos log-gamma in complex128 (about 15 digits)."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    left = z.real < 0.5
    if left.any():
        w = z[left]
        out[left] = np.log(np.pi / np.sin(np.pi * w)) - log_gamma_array(1 - w)
    w = z[~left]
    g = float(_LANCZOS_G)
    tmp = w + g
    tmp = (w + 0.5) * np.log(tmp) - tmp
    ser = np.full(w.shape, float(_LANCZOS_C0), dtype=complex)
    y = w.copy()
    for c in _LANCZOS_COEFFS:
        y = y + 1
        ser += float(c) / y
    out[~left] = tmp + np.log(np.sqrt(2 * np.pi) * ser / w)
    return out


_EM_BERNOULLI = tuple(float(bernoulli(2 * k)) / float(np.prod(np.arange(1, 2 * k + 1, dtype=float)))
                      for k in range(1, 16))


def zeta_array(z) -> np.ndarray:
    """Vectorized zeta in complex128: Euler-Maclaurin, reflected for re(z) < 1/2."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == 1):
        raise PoleError("zeta has a pole at z = 1")
    out = np.empty(z.shape, dtype=complex)
    left = z.real < 0.5
    if left.any():
        w = z[left]
        out[left] = (2 ** w * np.pi ** (w - 1) * np.sin(np.pi * w / 2)
                     * np.exp(log_gamma_array(1 - w)) * zeta_array(1 - w))
    w = z[~left]
    if w.size:
        n_cut = 20 + int(np.max(np.abs(w.imag)))
        n = np.arange(1, n_cut, dtype=float)
        total = np.zeros(w.shape, dtype=complex)
        for lo in range(0, n.size, 256):
            block = n[lo:lo + 256]
            total += np.exp(-np.outer(w, np.log(block))).sum(axis=1)
        big = float(n_cut)
        total += big ** (1 - w) / (w - 1) + big ** (-w) / 2
        rising = w.copy()
        power = big ** (-w - 1)
        for k, coef in enumerate(_EM_BERNOULLI, start=1):
            total += coef * rising * power
            rising = rising * (w + 2 * k - 1) * (w + 2 * k)
            power = power / (big * big)
        out[~left] = total
    return out


def _laurent_log_derivative(eps):
    """zeta'/zeta(1 + eps) from the Stieltjes expansion of zeta(1 + eps)."""
    # eps * zeta(1 + eps) = sum_n a_n eps^n with a_0 = 1
    a = [ctx.mpf(1)]
    for n, g in enumerate(STIELTJES):
        a.append((-1) ** n * ctx.mpf(g) / ctx.factorial(n))
    # zeta'/zeta(1+eps) = -1/eps + (log(eps*zeta))' = -1/eps + f'/f with f = sum a_n eps^n
    f = sum(c * eps ** n for n, c in enumerate(a))
    fp = sum(n * c * eps ** (n - 1) for n, c in enumerate(a) if n)
    return -1 / eps + fp / f


def zeta_log_derivative(z, zero_tol: float = 1e-12):
    """zeta'(z)/zeta(z); Laurent expansion within LAURENT_RADIUS of the pole."""
    z = _mpc(z)
    if z == 1:
        raise PoleError("zeta'/zeta has a pole at z = 1")
    if abs(z - 1) < LAURENT_RADIUS:
        return _laurent_log_derivative(z - 1)
    if z.real >= 0.5:
        value, deriv = _zeta_em_with_derivative(z)
        if abs(value) < zero_tol:
            raise NearZeroError(f"|zeta({z})| below {zero_tol}")
        return deriv / value
    w = 1 - z
    if abs(riemann_zeta(z)) < zero_tol:
        raise NearZeroError(f"|zeta({z})| below {zero_tol}")
    return (ctx.log(2 * ctx.pi) + ctx.pi / 2 / ctx.tan(ctx.pi * z / 2)
            - digamma(w) - zeta_log_derivative(w, zero_tol))
