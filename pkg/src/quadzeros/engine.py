"""Evaluation of Z(t, chi) for quadratic characters.

Z(t, chi) = sum_n chi(n) n^a 2 Re G(s, pi n^2 / d),  s = (1/2 + a + i t) / 2,

with G(s, x) = x^{-s} Gamma(s, x).  The fast path splits the squares n^2 into
Fibonacci intervals [F_j, F_{j+1}) and Taylor-expands G around x0 = pi F_j / d.
The moments C_jk = sum chi(n) n^a (n^2 - F_j)^k are exact integers; they carry
all dependence on chi, so the per-t cost is one kernel recursion per interval.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from functools import cached_property
from itertools import compress
from math import isqrt
from typing import Sequence

import gmpy2
import numpy as np
from scipy import special as sps

from .discriminants import FundamentalDiscriminant, character_table
from .special import PI_LD, ctx, gamma_ld_rounded, kernel_ld
from .zeros import ridder_refine

MAX_ORDER = 256
HEAD_FACTOR = 3.5
T_WINDOW = 1.25
PRECOMPUTE_CHUNK = 4096
_EVAL_BLOCK = 1 << 18

LOG10 = math.log(10.0)


class ScheduleError(ArithmeticError):
    """No Taylor order up to MAX_ORDER meets the per-interval error budget."""


class PlanMismatchError(ValueError):
    pass


class OutOfBoxError(ValueError):
    """t lies outside the window the plan was built for."""


@dataclass
class OpCounters:
    kernel_calls: int = 0
    int_mults: int = 0
    power_tables: int = 0

    def reset(self) -> None:
        self.kernel_calls = self.int_mults = self.power_tables = 0

    def snapshot(self) -> dict:
        return {"kernel_calls": self.kernel_calls, "int_mults": self.int_mults,
                "power_tables": self.power_tables}


COUNTERS = OpCounters()


# ---------------------------------------------------------------------------
# truncation and partition
# ---------------------------------------------------------------------------

def log_tail_bound(N, d: int) -> float:
    """log of d^2 exp(-pi N^2 / d) / (pi N)^2."""
    return 2 * math.log(d) - math.pi * N * N / d - 2 * math.log(math.pi * N)


def _tail_below(N: int, d: int, digits: int) -> bool:
    with ctx.workprec(128):
        lhs = 2 * ctx.log(d) - ctx.pi * N * N / d - 2 * ctx.log(ctx.pi * N)
        return lhs < -digits * ctx.log(10)


def crude_truncation(d: int, digits: int) -> int:
    """ceil(sqrt(d log(d^2 10^D) / pi))."""
    return math.ceil(math.sqrt(d * (2 * math.log(d) + digits * LOG10) / math.pi))


def refined_truncation(d: int, digits: int) -> int:
    """Smallest N with d^2 exp(-pi N^2/d) / (pi N)^2 < 10^-D."""
    hi = crude_truncation(d, digits)
    lo = max(1.0, math.sqrt(d / math.pi))
    target = -digits * LOG10
    if log_tail_bound(lo, d) < target:
        n = 1
    else:
        root = ridder_refine(lambda x: log_tail_bound(x, d) - target, lo, float(hi), tol=1e-6)
        n = max(1, math.ceil(root))
    while n > 1 and _tail_below(n - 1, d, digits):
        n -= 1
    while not _tail_below(n, d, digits):
        n += 1
    return n


def fibonacci_upto(limit: int) -> list[int]:
    """F_1 = F_2 = 1, ... through the first term exceeding ``limit``."""
    fib = [1, 1]
    while fib[-1] <= limit:
        fib.append(fib[-1] + fib[-2])
    return fib


@dataclass(frozen=True)
class Partition:
    """Intervals I_j = [F_j, F_{j+1}) for j = 1..T covering 1..N^2.

    ``fib[j - 1]`` is F_j; I_1 = [1, 1) is empty.
    """

    truncation: int
    fib: tuple[int, ...]

    @property
    def interval_count(self) -> int:
        return len(self.fib) - 1

    def bounds(self, j: int) -> tuple[int, int]:
        return self.fib[j - 1], self.fib[j]

    def square_range(self, j: int) -> tuple[int, int]:
        """n_lo, n_hi (inclusive) with F_j <= n^2 < F_{j+1} and n <= N."""
        lo, hi = self.bounds(j)
        return isqrt(lo - 1) + 1, min(self.truncation, isqrt(hi - 1))

    def interval_of(self, n: int) -> int:
        sq = n * n
        for j in range(1, self.interval_count + 1):
            lo, hi = self.bounds(j)
            if lo <= sq < hi:
                return j
        raise ValueError(f"{n}^2 is outside the partition")


def build_partition(N: int) -> Partition:
    if N < 1:
        raise ValueError("truncation must be positive")
    return Partition(truncation=N, fib=tuple(fibonacci_upto(N * N)))


# ---------------------------------------------------------------------------
# Taylor order schedule
# ---------------------------------------------------------------------------

def _log_moment_integral(a: int, ratio: float, orders: np.ndarray) -> np.ndarray:
    """log of int_1^sqrt(ratio) u^{2a} (u^2 - 1)^{2B} du for each B."""
    w = ratio - 1.0
    b2 = 2 * orders + 1
    hyp = sps.hyp2f1(0.5 - a, b2, b2 + 1, -w)
    return b2 * math.log(w) - np.log(2 * b2) + np.log(hyp)


def log_interval_error(d: int, a: int, f_lo: int, f_hi: int, orders: np.ndarray) -> np.ndarray:
    """log of the estimated truncation error of a B-term expansion on [f_lo, f_hi)."""
    orders = np.asarray(orders, dtype=float)
    x0 = math.pi * f_lo / d
    # Gamma(B, x0) / B! = Q(B, x0) / B
    log_gamma_ratio = np.log(sps.gammaincc(orders, x0)) - np.log(orders)
    return (log_gamma_ratio + (2 * a + 1) / 4 * math.log(f_lo)
            + 0.5 * _log_moment_integral(a, f_hi / f_lo, orders))


def log_remainder_bound(d: int, f_lo: int, f_hi: int, orders):
    """log of (x/x0 - 1)^B Gamma(B, x0) / B at the right end of the interval."""
    orders = np.asarray(orders, dtype=float)
    x0 = math.pi * f_lo / d
    return orders * math.log(f_hi / f_lo - 1) + np.log(sps.gammaincc(orders, x0)) - np.log(orders)


@dataclass(frozen=True)
class Schedule:
    orders: tuple[int, ...]          # B(j) for j = 1..T, 0 on the head
    estimates: tuple[float, ...]     # estimated error per interval, 0 on the head
    n_direct: int
    head_intervals: int
    budget: float


def taylor_order_schedule(d: int, digits: int, a: int, partition: Partition,
                          head_factor: float = HEAD_FACTOR) -> Schedule:
    """Smallest nondecreasing orders meeting a root-sum-square budget of 10^-D.

    Each interval gets 10^-D / sqrt(T).  The error estimate is not monotone in
    B, so B(j) is the least order from which every larger order up to
    MAX_ORDER stays within budget.  Leading intervals holding fewer than
    head_factor * B(j) squares, or needing more than MAX_ORDER terms, are
    summed directly instead (the head).
    """
    T = partition.interval_count
    log_budget = -digits * LOG10 - 0.5 * math.log(T)
    candidates = np.arange(1, MAX_ORDER + 1)
    infeasible = MAX_ORDER + 1
    raw = [0] * T
    for j in range(2, T + 1):
        f_lo, f_hi = partition.bounds(j)
        errs = np.maximum(log_interval_error(d, a, f_lo, f_hi, candidates),
                          log_remainder_bound(d, f_lo, f_hi, candidates))
        bad = np.flatnonzero(~(errs < log_budget))
        if bad.size and bad[-1] == MAX_ORDER - 1:
            raw[j - 1] = infeasible
        else:
            raw[j - 1] = int(candidates[bad[-1] + 1]) if bad.size else 1

    # short intervals are cheaper to sum directly than to expand
    head = 1
    for j in range(2, T + 1):
        n_lo, n_hi = partition.square_range(j)
        if raw[j - 1] == infeasible or n_hi - n_lo + 1 < head_factor * raw[j - 1]:
            head = j
        else:
            break
    orders = [0] * head + list(np.maximum.accumulate(raw[head:]))
    if infeasible in orders:
        j = orders.index(infeasible) + 1
        raise ScheduleError(f"interval {j} needs more than {MAX_ORDER} Taylor terms")
    n_direct = partition.square_range(head)[1] if head >= 2 else 0
    estimates = [0.0] * T
    for j in range(1, T + 1):
        if j <= head:
            continue
        f_lo, f_hi = partition.bounds(j)
        B = orders[j - 1]
        estimates[j - 1] = math.exp(float(log_interval_error(d, a, f_lo, f_hi, np.array([B]))[0]))
        if not log_remainder_bound(d, f_lo, f_hi, B) < log_budget:
            raise ScheduleError(f"remainder bound exceeds 10^-{digits} on interval {j}")
    if math.sqrt(sum(e * e for e in estimates)) > 10.0 ** -digits:
        raise ScheduleError("accumulated interval errors exceed the target")
    return Schedule(orders=tuple(int(b) for b in orders), estimates=tuple(estimates),
                    n_direct=n_direct, head_intervals=head, budget=math.exp(log_budget))


# ---------------------------------------------------------------------------
# evaluation plan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    j: int
    f_lo: int
    n_lo: int
    n_hi: int
    order: int


@dataclass(frozen=True)
class EvaluationPlan:
    """Everything that depends on (d_max, D, a) but not on the character.

    Valid for every modulus d <= ``modulus`` of the same parity.
    """

    modulus: int
    digits: int
    parity: int
    partition: Partition
    schedule: Schedule

    @property
    def truncation(self) -> int:
        return self.partition.truncation

    @property
    def interval_count(self) -> int:
        return self.partition.interval_count

    @property
    def n_direct(self) -> int:
        return self.schedule.n_direct

    @property
    def orders(self) -> tuple[int, ...]:
        return self.schedule.orders

    @cached_property
    def intervals(self) -> tuple[Interval, ...]:
        """Expanded (non-head) intervals in increasing order."""
        out = []
        for j in range(self.schedule.head_intervals + 1, self.interval_count + 1):
            n_lo, n_hi = self.partition.square_range(j)
            if n_lo <= n_hi:
                out.append(Interval(j, self.partition.bounds(j)[0], n_lo, n_hi, self.orders[j - 1]))
        return tuple(out)

    def covers(self, fd: FundamentalDiscriminant) -> bool:
        return fd.parity == self.parity and fd.modulus <= self.modulus


def build_plan(d: int, digits: int, a: int, head_factor: float = HEAD_FACTOR) -> EvaluationPlan:
    if a not in (0, 1):
        raise ValueError("parity must be 0 or 1")
    if not 1 <= digits <= 18:
        raise ValueError("digits must be in 1..18")
    N = refined_truncation(d, digits)
    partition = build_partition(N)
    schedule = taylor_order_schedule(d, digits, a, partition, head_factor)
    return EvaluationPlan(modulus=d, digits=digits, parity=a, partition=partition, schedule=schedule)


# ---------------------------------------------------------------------------
# exact moments
# ---------------------------------------------------------------------------

def _ratio_ld(num: int, den: int) -> np.longdouble:
    """num / den correctly truncated to 64 mantissa bits."""
    if num == 0:
        return np.longdouble(0)
    sign = -1 if num < 0 else 1
    num = abs(num)
    shift = 66 - (num.bit_length() - den.bit_length())
    q = (num << shift) // den if shift >= 0 else num // (den << -shift)
    extra = max(0, q.bit_length() - 64)
    mant = np.longdouble(np.uint64(q >> extra))
    return sign * np.ldexp(mant, extra - shift)


class SharedPowerTable:
    """Chunked w-free powers n^a (n^2 - F_j)^k over every expanded interval.

    The chunks are generated once per batch and every character in the batch
    reads them, so the integer multiplications are shared.
    """

    def __init__(self, plan: EvaluationPlan, chunk: int = PRECOMPUTE_CHUNK):
        self.plan = plan
        self.chunk = chunk
        COUNTERS.power_tables += 1

    def rows(self, interval: Interval):
        """Yield (n_start, n_stop, powers_k) where powers_k iterates k = 0..B."""
        a = self.plan.parity
        for start in range(interval.n_lo, interval.n_hi + 1, self.chunk):
            stop = min(start + self.chunk, interval.n_hi + 1)
            yield start, stop, self._powers(start, stop, interval, a)

    @staticmethod
    def _powers(start, stop, interval, a):
        m = [gmpy2.mpz(n * n - interval.f_lo) for n in range(start, stop)]
        p = [gmpy2.mpz(n) for n in range(start, stop)] if a else [gmpy2.mpz(1)] * (stop - start)
        for k in range(interval.order + 1):
            yield p
            if k < interval.order:
                p = list(map(operator.mul, p, m))
                COUNTERS.int_mults += len(p)


@dataclass
class CoefficientTable:
    owner: FundamentalDiscriminant
    plan: EvaluationPlan
    head_n: np.ndarray          # n <= n_direct with chi(n) != 0
    head_w: np.ndarray          # chi(n) n^a as long double
    moments: tuple[tuple[int, ...], ...]    # C_jk per expanded interval
    normalized: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        intervals = self.plan.intervals
        width = max((iv.order for iv in intervals), default=-1) + 1
        norm = np.zeros((len(intervals), width), dtype=np.longdouble)
        for row, (iv, cs) in enumerate(zip(intervals, self.moments)):
            scale = 1
            for k, c in enumerate(cs):
                norm[row, k] = _ratio_ld(c, scale)
                scale *= iv.f_lo
        self.normalized = norm

    @cached_property
    def scaled(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(significand, exponent) pairs of C_jk (pi/d)^k with 1 <= |sig| < 2."""
        out = []
        with ctx.workprec(128):
            step = ctx.pi / self.owner.modulus
            for cs in self.moments:
                sig = np.zeros(len(cs), dtype=np.longdouble)
                exp = np.zeros(len(cs), dtype=np.int64)
                factor = ctx.mpf(1)
                for k, c in enumerate(cs):
                    if c:
                        m, e = ctx.frexp(ctx.mpf(c) * factor)
                        sig[k] = np.longdouble(ctx.nstr(2 * m, 25, strip_zeros=False))
                        exp[k] = int(e) - 1
                    factor *= step
                out.append((sig, exp))
        return out

    def moment(self, j: int, k: int) -> int:
        for iv, cs in zip(self.plan.intervals, self.moments):
            if iv.j == j:
                return cs[k]
        raise KeyError(j)


def _head_arrays(fd: FundamentalDiscriminant, chi_table: np.ndarray, n_direct: int):
    n = np.flatnonzero(chi_table[1:n_direct + 1]) + 1
    w = chi_table[n].astype(np.longdouble)
    if fd.parity:
        w = w * n.astype(np.longdouble)
    return n.astype(np.int64), w


def precompute_batch(chars: Sequence[FundamentalDiscriminant], plan: EvaluationPlan,
                     shared: SharedPowerTable | None = None) -> list[CoefficientTable]:
    """Exact moments for every character in ``chars`` from one shared power table."""
    for fd in chars:
        if not plan.covers(fd):
            raise PlanMismatchError(f"plan (d<={plan.modulus}, a={plan.parity}) does not cover {fd.disc}")
    if shared is None:
        shared = SharedPowerTable(plan)
    elif shared.plan is not plan:
        raise PlanMismatchError("shared power table belongs to a different plan")
    tables = [character_table(fd, plan.truncation) for fd in chars]
    moments = [[] for _ in chars]
    for iv in plan.intervals:
        acc = [[0] * (iv.order + 1) for _ in chars]
        for start, stop, powers in shared.rows(iv):
            masks = []
            for tab in tables:
                seg = tab[start:stop]
                masks.append(((seg > 0).tolist(), (seg < 0).tolist()))
            for k, p in enumerate(powers):
                for i, (pos, neg) in enumerate(masks):
                    acc[i][k] += sum(compress(p, pos)) - sum(compress(p, neg))
        for i in range(len(chars)):
            moments[i].append(tuple(int(c) for c in acc[i]))
    out = []
    for fd, tab, ms in zip(chars, tables, moments):
        head_n, head_w = _head_arrays(fd, tab, plan.n_direct)
        out.append(CoefficientTable(owner=fd, plan=plan, head_n=head_n, head_w=head_w,
                                    moments=tuple(ms)))
    return out


def precompute(fd: FundamentalDiscriminant, plan: EvaluationPlan,
               shared: SharedPowerTable | None = None) -> CoefficientTable:
    return precompute_batch([fd], plan, shared)[0]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def s_of_t(t, a: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.longdouble)
    return (np.longdouble(0.5) + a + 1j * t).astype(np.clongdouble) / 2


def _direct_sum(n: np.ndarray, w: np.ndarray, d: int, s: np.ndarray, gs: np.ndarray) -> np.ndarray:
    total = np.zeros(s.shape, dtype=np.longdouble)
    if n.size == 0:
        return total
    block = max(1, _EVAL_BLOCK // max(1, s.size))
    for lo in range(0, n.size, block):
        nn = n[lo:lo + block].astype(np.longdouble)
        x = PI_LD * nn * nn / d
        G = kernel_ld(s[None, :], x[:, None], gs[None, :])
        total += np.sum(w[lo:lo + block, None] * 2 * G.real, axis=0)
    COUNTERS.kernel_calls += n.size * s.size
    return total


def evaluate_fast(table: CoefficientTable, t) -> np.ndarray:
    """Z(t, chi) from the head sum plus the Taylor-expanded intervals."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=np.longdouble))
    if np.any(np.abs(t) > T_WINDOW):
        raise OutOfBoxError(f"|t| must not exceed {T_WINDOW}")
    d = table.owner.modulus
    a = table.owner.parity
    s = s_of_t(t, a)
    gs = gamma_ld_rounded(s)
    total = _direct_sum(table.head_n, table.head_w, d, s, gs)

    intervals = table.plan.intervals
    if intervals:
        x0 = PI_LD * np.array([iv.f_lo for iv in intervals], dtype=np.longdouble)[:, None] / d
        H = kernel_ld(s[None, :], x0, gs[None, :])
        E = np.exp(-x0)
        coeff = table.normalized
        acc = np.zeros(H.shape, dtype=np.longdouble)
        for k in range(coeff.shape[1]):
            term = 2 * H.real * coeff[:, k:k + 1]
            if k % 2:
                acc -= term
            else:
                acc += term
            H = (E + (s[None, :] + k) * H) / (k + 1)
            E = E * x0 / (k + 1)
        total += acc.sum(axis=0)
        COUNTERS.kernel_calls += s.size * sum(iv.order + 1 for iv in intervals)
    return total[0] if scalar else total


def evaluate_direct(fd: FundamentalDiscriminant, t, digits: int, truncation: int | None = None) -> np.ndarray:
    """Z(t, chi) by summing every term n <= N; the reference oracle."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=np.longdouble))
    N = truncation or refined_truncation(fd.modulus, digits)
    tab = character_table(fd, N)
    n, w = _head_arrays(fd, tab, N)
    s = s_of_t(t, fd.parity)
    total = _direct_sum(n, w, fd.modulus, s, gamma_ld_rounded(s))
    return total[0] if scalar else total

