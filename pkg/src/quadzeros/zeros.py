"""Sign-change scanning of Z(t, chi) and Ridder refinement of the brackets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MAX_RIDDER_ITER = 100


class RefinementError(ArithmeticError):
    pass


class CenterCheckError(RuntimeError):
    """Z(0, chi) <= 0: either a counterexample or an evaluation bug."""


@dataclass(frozen=True)
class ScanConfig:
    t_max: float = 1.0
    step_divisor: int = 50
    refine_tolerance: float = 1e-12
    center_check: bool = True

    def step(self, modulus: int) -> float:
        return grid_step(modulus, self.step_divisor)


@dataclass(frozen=True)
class ZeroList:
    disc: int
    ordinates: tuple[float, ...]
    brackets: tuple[tuple[float, float], ...] = field(default=(), compare=False)
    complete_flag: str = "heuristic"

    def __len__(self) -> int:
        return len(self.ordinates)


def grid_step(modulus: int, step_divisor: int = 50) -> float:
    """1/step_divisor of the mean zero spacing 2 pi / log(d / 2 pi)."""
    return 2 * math.pi / math.log(modulus / (2 * math.pi)) / step_divisor


def _sign(v: float) -> int:
    return int(v > 0) - int(v < 0)


def _ridder_scalar(f, lo, hi, flo, fhi, tol, max_iter):
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        fmid = float(f(mid))
        root = math.sqrt(fmid * fmid - flo * fhi)
        if root == 0.0:
            return mid, lo, hi, it
        new = mid + (mid - lo) * (1.0 if flo >= fhi else -1.0) * fmid / root
        fnew = float(f(new))
        if fnew == 0.0:
            return new, new, new, it
        if _sign(fmid) != _sign(fnew):
            lo, flo, hi, fhi = (mid, fmid, new, fnew) if mid < new else (new, fnew, mid, fmid)
        elif _sign(flo) != _sign(fnew):
            hi, fhi = new, fnew
        else:
            lo, flo = new, fnew
        if hi - lo <= tol:
            best = lo if abs(flo) <= abs(fhi) else hi
            return best, lo, hi, it
    raise RefinementError(f"Ridder did not converge in {max_iter} iterations")


def ridder_refine(f: Callable[[float], float], lo: float, hi: float,
                  tol: float = 1e-12, max_iter: int = MAX_RIDDER_ITER) -> float:
    """Root of f in [lo, hi] by Ridder's method; f(lo) and f(hi) must differ in sign."""
    return ridder_bracket(f, lo, hi, tol, max_iter)[0]


def ridder_bracket(f, lo, hi, tol=1e-12, max_iter=MAX_RIDDER_ITER):
    """Like ridder_refine but returns (root, lo, hi, iterations)."""
    flo, fhi = float(f(lo)), float(f(hi))
    if flo == 0.0:
        return lo, lo, lo, 0
    if fhi == 0.0:
        return hi, hi, hi, 0
    if flo * fhi > 0:
        raise ValueError("root is not bracketed")
    return _ridder_scalar(f, lo, hi, flo, fhi, tol, max_iter)


def ridder_refine_many(f, lo, hi, flo, fhi, tol=1e-12, max_iter=MAX_RIDDER_ITER):
    """Ridder's method on many brackets at once with a vectorized f.

    Every bracket follows exactly the scalar iteration; only the function
    evaluations are batched.  Returns (roots, lo, hi) arrays.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = np.array(flo, dtype=float)
    fhi = np.array(fhi, dtype=float)
    roots = np.full(lo.shape, np.nan)
    active = np.ones(lo.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        mid = 0.5 * (lo[idx] + hi[idx])
        fmid = np.asarray(f(mid), dtype=float)
        rad = np.sqrt(fmid * fmid - flo[idx] * fhi[idx])
        sgn = np.where(flo[idx] >= fhi[idx], 1.0, -1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            new = mid + (mid - lo[idx]) * sgn * fmid / rad
        degenerate = rad == 0.0
        new = np.where(degenerate, mid, new)
        fnew = np.asarray(f(new), dtype=float)
        for pos, i in enumerate(idx):
            if degenerate[pos]:
                roots[i] = mid[pos]
                active[i] = False
                continue
            m, fm, n, fn = mid[pos], fmid[pos], new[pos], fnew[pos]
            if fn == 0.0:
                roots[i] = lo[i] = hi[i] = n
                active[i] = False
                continue
            if _sign(fm) != _sign(fn):
                if m < n:
                    lo[i], flo[i], hi[i], fhi[i] = m, fm, n, fn
                else:
                    lo[i], flo[i], hi[i], fhi[i] = n, fn, m, fm
            elif _sign(flo[i]) != _sign(fn):
                hi[i], fhi[i] = n, fn
            else:
                lo[i], flo[i] = n, fn
            if hi[i] - lo[i] <= tol:
                roots[i] = lo[i] if abs(flo[i]) <= abs(fhi[i]) else hi[i]
                active[i] = False
    if active.any():
        raise RefinementError(f"Ridder did not converge in {max_iter} iterations")
    return roots, lo, hi


def center_check(evaluator) -> bool:
    """True iff Z(0) > 0."""
    return float(np.asarray(evaluator(np.zeros(1)))[0]) > 0


def scan_grid(modulus: int, config: ScanConfig) -> np.ndarray:
    step = config.step(modulus)
    count = int(math.floor(config.t_max / step))
    grid = np.arange(count + 1) * step
    grid = grid[grid < config.t_max]
    return np.append(grid, config.t_max)


def scan_zeros(evaluator, modulus: int, disc: int, config: ScanConfig = ScanConfig()) -> ZeroList:
    """Zeros of Z on (0, t_max) from sign changes on the mean-gap grid.

    ``evaluator`` maps an array of t to an array of Z values.  Tangential
    zeros (no sign change) are not detected.
    """
    grid = scan_grid(modulus, config)
    values = np.asarray(evaluator(grid), dtype=np.longdouble)
    if config.center_check and not values[0] > 0:
        raise CenterCheckError(f"Z(0) = {values[0]} <= 0 for disc {disc}")
    fv = values.astype(float)
    exact = [float(grid[k]) for k in range(1, len(grid)) if fv[k] == 0.0 and grid[k] < config.t_max]
    sv = np.sign(fv)
    left = np.flatnonzero(sv[:-1] * sv[1:] < 0)
    roots, lo, hi = ridder_refine_many(
        evaluator, grid[left], grid[left + 1], fv[left], fv[left + 1],
        tol=config.refine_tolerance)
    found = sorted(zip(roots.tolist() + exact, list(zip(lo.tolist(), hi.tolist())) + [(t, t) for t in exact]))
    found = [(t, b) for t, b in found if 0 < t < config.t_max]
    return ZeroList(disc=disc,
                    ordinates=tuple(t for t, _ in found),
                    brackets=tuple(b for _, b in found))
