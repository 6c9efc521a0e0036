"""Batch pipeline: enumeration, planning, precomputation, zero finding, analysis.

Work is split into batches of consecutive discriminants.  Each batch shares one
evaluation plan (built for its largest modulus) and one power table.  Results
are appended to the zero file strictly in batch order, and a checkpoint
manifest is replaced atomically after every batch, so a killed job resumes to
a byte-identical file regardless of the worker count.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import random
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import density as dens
from .discriminants import DiscriminantRange, FundamentalDiscriminant, count_range, enumerate_range
from .engine import (COUNTERS, T_WINDOW, build_plan, evaluate_direct, evaluate_fast,
                     precompute, precompute_batch, s_of_t)
from .special import gamma_ld_rounded
from .zeros import ScanConfig, scan_zeros

log = logging.getLogger("quadzeros")

FORMAT_VERSION = "qzv1"
RANGE_CONVENTION = "half-open"
KNOWN_TEST_DISCS = (-115147, -175990483)
PUBLISHED_COUNT_1E12 = 1_039_654
# |Z(t*)| relative to the natural scale; recorded ordinates carry 10
# significant digits, which alone leaves about 1e-9
ZERO_THRESHOLD = 1e-7


class CheckpointError(RuntimeError):
    pass


class VerifyError(RuntimeError):
    pass


@dataclass(frozen=True)
class JobConfig:
    x_min: int
    span: int
    digits: int = 15
    t_max: float = 1.0
    step_divisor: int = 50
    batch_size: int = 8
    workers: int = 1
    output: str = "zeros.txt"
    checkpoint: str | None = None
    sign: int = -1

    def __post_init__(self):
        if self.batch_size < 1 or self.span < 1 or self.x_min < 1:
            raise ValueError("batch_size, span and x_min must be positive")
        if not 1 <= self.digits <= 18:
            raise ValueError("digits must be in 1..18")
        if not 0 < self.t_max <= T_WINDOW:
            raise ValueError(f"t_max must be in (0, {T_WINDOW}]")
        if self.step_divisor < 1 or self.workers < 1:
            raise ValueError("step_divisor and workers must be positive")

    @property
    def checkpoint_path(self) -> str:
        return self.checkpoint or self.output + ".ckpt"

    @property
    def scan(self) -> ScanConfig:
        return ScanConfig(t_max=self.t_max, step_divisor=self.step_divisor)

    def header_key(self) -> dict:
        return {"x_min": self.x_min, "span": self.span, "digits": self.digits,
                "t_max": self.t_max, "step_divisor": self.step_divisor,
                "batch_size": self.batch_size, "sign": self.sign}


# ---------------------------------------------------------------------------
# zero file format
# ---------------------------------------------------------------------------

def format_ordinate(t: float) -> str:
    return format(t, ".10g")


@dataclass
class ZeroFile:
    X: int
    dX: int
    digits: int
    t_max: float
    step_divisor: int
    sign: int = -1
    records: dict[int, tuple[float, ...]] = field(default_factory=dict)

    def header(self) -> str:
        return (f"# {FORMAT_VERSION} X={self.X} DX={self.dX} D={self.digits} "
                f"tmax={self.t_max!r} div={self.step_divisor}\n"
                f"# range={RANGE_CONVENTION} sign={self.sign} columns=disc,count,ordinates\n")

    @staticmethod
    def record_line(disc: int, ordinates: Sequence[float]) -> str:
        parts = [str(disc), str(len(ordinates))] + [format_ordinate(t) for t in ordinates]
        return " ".join(parts) + "\n"

    def dumps(self) -> str:
        return self.header() + "".join(self.record_line(d, o) for d, o in self.records.items())

    @classmethod
    def parse(cls, text: str) -> "ZeroFile":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(f"# {FORMAT_VERSION} "):
            raise ValueError("not a zero file (missing version header)")
        meta = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
        sign = -1
        for line in lines[1:]:
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("sign="):
                        sign = int(tok[5:])
        zf = cls(X=int(meta["X"]), dX=int(meta["DX"]), digits=int(meta["D"]),
                 t_max=float(meta["tmax"]), step_divisor=int(meta["div"]), sign=sign)
        for n, line in enumerate(lines[1:], start=2):
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            disc, count = int(fields[0]), int(fields[1])
            ords = tuple(float(x) for x in fields[2:])
            if len(ords) != count:
                raise ValueError(f"line {n}: count {count} but {len(ords)} ordinates")
            zf.records[disc] = ords
        return zf

    @classmethod
    def read(cls, path) -> "ZeroFile":
        return cls.parse(Path(path).read_text())

    def family(self) -> dens.Family:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return dens.Family(X=self.X, dX=self.dX, cardinality=len(self.records))


# ---------------------------------------------------------------------------
# batch processing
# ---------------------------------------------------------------------------

def batches(config: JobConfig) -> Iterator[tuple[FundamentalDiscriminant, ...]]:
    it = enumerate_range(DiscriminantRange(config.x_min, config.span, config.sign))
    while True:
        chunk = tuple(islice(it, config.batch_size))
        if not chunk:
            return
        yield chunk


def zeros_for_batch(batch: Sequence[FundamentalDiscriminant], digits: int,
                    scan: ScanConfig) -> tuple[list[tuple[int, tuple[float, ...]]], dict]:
    """Zero lists for one batch sharing a plan and a power table."""
    before = COUNTERS.snapshot()
    results = []
    for parity in sorted({fd.parity for fd in batch}):
        group = [fd for fd in batch if fd.parity == parity]
        plan = build_plan(max(fd.modulus for fd in group), digits, parity)
        for fd, table in zip(group, precompute_batch(group, plan)):
            zl = scan_zeros(lambda t, tab=table: evaluate_fast(tab, t), fd.modulus, fd.disc, scan)
            results.append((fd, zl.ordinates))
    results.sort(key=lambda item: item[0].modulus)
    after = COUNTERS.snapshot()
    stats = {k: after[k] - before[k] for k in after}
    return [(fd.disc, ords) for fd, ords in results], stats


def _batch_task(args):
    batch, digits, scan = args
    return zeros_for_batch(batch, digits, scan)


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_json_atomic(path: str, obj) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _load_checkpoint(config: JobConfig, header: bytes) -> dict | None:
    path = config.checkpoint_path
    if not os.path.exists(path):
        return None
    try:
        with open(path) as fh:
            ckpt = json.load(fh)
        if ckpt["config"] != config.header_key():
            raise CheckpointError("checkpoint belongs to a different job")
        offset = int(ckpt["offset"])
        with open(config.output, "rb") as fh:
            data = fh.read(offset)
    except CheckpointError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"unreadable checkpoint or output: {exc}") from exc
    if len(data) != offset or not data.startswith(header):
        raise CheckpointError("zero file is shorter than the checkpoint or has a different header")
    pos = len(header)
    for entry in ckpt["batches"]:
        end = pos + entry["bytes"]
        if _sha(data[pos:end]) != entry["sha256"]:
            raise CheckpointError(f"checksum mismatch in batch {entry['index']}")
        pos = end
    if pos != offset:
        raise CheckpointError("checkpoint offsets are inconsistent")
    return ckpt


def run_zeros(config: JobConfig, limit_batches: int | None = None) -> ZeroFile:
    """Compute zeros for the configured range, resuming from a checkpoint if present."""
    zf = ZeroFile(X=config.x_min, dX=config.span, digits=config.digits, t_max=config.t_max,
                  step_divisor=config.step_divisor, sign=config.sign)
    header = zf.header().encode()
    ckpt = _load_checkpoint(config, header)
    if ckpt is None:
        with open(config.output, "wb") as fh:
            fh.write(header)
        ckpt = {"format": FORMAT_VERSION, "config": config.header_key(), "offset": len(header),
                "batches": [], "complete": False}
        _write_json_atomic(config.checkpoint_path, ckpt)
    else:
        with open(config.output, "r+b") as fh:
            fh.truncate(ckpt["offset"])
    done = len(ckpt["batches"])
    todo = islice(batches(config), done, None if limit_batches is None else done + limit_batches)
    tasks = ((batch, config.digits, config.scan) for batch in todo)
    if config.workers == 1:
        results = map(_batch_task, tasks)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=config.workers)
        results = pool.map(_batch_task, tasks)
    try:
        with open(config.output, "ab") as out:
            for index, (records, stats) in enumerate(results, start=done):
                chunk = "".join(ZeroFile.record_line(d, o) for d, o in records).encode()
                out.write(chunk)
                out.flush()
                os.fsync(out.fileno())
                ckpt["offset"] += len(chunk)
                ckpt["batches"].append({"index": index, "bytes": len(chunk), "sha256": _sha(chunk),
                                        "discs": len(records), **stats})
                _write_json_atomic(config.checkpoint_path, ckpt)
                log.info("batch %d: %d discs, %d int mults, %d kernel calls",
                         index, len(records), stats["int_mults"], stats["kernel_calls"])
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    if limit_batches is None:
        ckpt["complete"] = True
        _write_json_atomic(config.checkpoint_path, ckpt)
    return ZeroFile.read(config.output)


# ---------------------------------------------------------------------------
# other commands
# ---------------------------------------------------------------------------

def list_discriminants(config: JobConfig, out) -> int:
    rng = DiscriminantRange(config.x_min, config.span, config.sign)
    count = 0
    out.write(f"# discriminants X={config.x_min} DX={config.span} sign={config.sign} "
              f"range={RANGE_CONVENTION}\n")
    for fd in enumerate_range(rng):
        out.write(f"{fd.disc}\n")
        count += 1
    out.write(f"# count={count}\n")
    return count


def window_count(x_min: int, span: int, sign: int = -1) -> int:
    return count_range(DiscriminantRange(x_min, span, sign))


def natural_scale(fd: FundamentalDiscriminant, t: float) -> float:
    """|(d/pi)^s Gamma(s)|, the size of Z(t) when L(1/2 + it) is of order one."""
    s = s_of_t(np.array([t]), fd.parity)
    gamma = abs(complex(gamma_ld_rounded(s)[0]))
    return gamma * (fd.modulus / math.pi) ** float(s[0].real)


@dataclass
class VerifyReport:
    checked: list[dict]
    max_abs_z: float
    max_deviation: float
    threshold: float
    zero_threshold: float = ZERO_THRESHOLD

    @property
    def ok(self) -> bool:
        return self.max_deviation <= self.threshold and self.max_abs_z <= self.zero_threshold


def verify(zf: ZeroFile, sample: int, seed: int = 0) -> VerifyReport:
    """Re-evaluate a random sample of recorded zeros with the direct sum.

    Values are measured relative to max(1, |(d/pi)^s Gamma(s)|).
    """
    threshold = 10.0 ** (-zf.digits + 3)
    pairs = [(d, t) for d, ords in zf.records.items() for t in ords]
    if sample > len(pairs):
        raise ValueError(f"sample {sample} exceeds the {len(pairs)} recorded zeros")
    if sample == 0:
        return VerifyReport([], 0.0, 0.0, threshold)
    rng = random.Random(seed)
    chosen = [p for p in pairs if p[0] in KNOWN_TEST_DISCS][:sample]
    rest = [p for p in pairs if p not in chosen]
    chosen += rng.sample(rest, sample - len(chosen))
    rows = []
    tables = {}
    for disc, t in chosen:
        fd = FundamentalDiscriminant.from_disc(disc)
        if disc not in tables:
            tables[disc] = precompute(fd, build_plan(fd.modulus, zf.digits, fd.parity))
        scale = max(1.0, natural_scale(fd, t))
        zd = float(evaluate_direct(fd, t, zf.digits))
        zfast = float(evaluate_fast(tables[disc], t))
        rows.append({"disc": disc, "t": t, "z_direct": zd, "z_fast": zfast,
                     "abs_z": abs(zd) / scale, "deviation": abs(zfast - zd) / scale})
    return VerifyReport(rows, max(r["abs_z"] for r in rows),
                        max(r["deviation"] for r in rows), threshold)


def write_histogram_csv(zf: ZeroFile, bin_width: float, out, tau_max: float | None = None):
    family = zf.family()
    if tau_max is None:
        tau_max = bin_width * math.ceil(zf.t_max * family.rescale / bin_width)
    h_all = dens.build_histogram(zf.records, family, bin_width, tau_max)
    h_low = dens.build_histogram(zf.records, family, bin_width, tau_max, lowest_only=True)
    out.write(f"# X={zf.X} DX={zf.dX} cardinality={h_all.cardinality} "
              f"rescale={family.rescale:.10g} bin_width={bin_width!r}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["tau", "density_all", "density_lowest"])
    for c, a, lo in zip(h_all.centers, h_all.density, h_low.density):
        writer.writerow([f"{c:.10g}", f"{a:.10g}", f"{lo:.10g}"])
    return h_all, h_low


PREDICT_COLUMNS = ("main", "explicit", "ratios", "re_r_est", "term_gamma", "term_zeta", "term_aprime")


def predict_grid(tau_min: float, tau_max: float, step: float) -> np.ndarray:
    n = int(math.floor((tau_max - tau_min) / step + 1e-9))
    return tau_min + step * np.arange(n + 1)


def write_predict_csv(family: dens.Family, grid: np.ndarray, out,
                      columns: Sequence[str] = PREDICT_COLUMNS, variant: str = "derived"):
    unknown = set(columns) - set(PREDICT_COLUMNS)
    if unknown:
        raise ValueError(f"unknown curves: {sorted(unknown)}")
    needs_ratios = {"ratios", "re_r_est"} & set(columns)
    if needs_ratios and np.any(np.abs(grid) < dens.TAU_MIN):
        raise dens.SingularityError(f"grid reaches |tau| < {dens.TAU_MIN}")
    tg, tz, ta = dens.term_curves(grid, family.X)
    bracket = -math.log(math.pi) + tg + tz + ta
    cols = {"main": dens.main_term(grid), "term_gamma": tg, "term_zeta": tz, "term_aprime": ta}
    cols["explicit"] = cols["main"] + bracket / family.log_x
    if needs_ratios:
        rest = dens.ratios_r_est(grid, family, variant).real
        cols["re_r_est"] = rest
        cols["ratios"] = 1 + rest + bracket / family.log_x
    out.write(f"# X={family.X} DX={family.dX} variant={variant}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["tau", *columns])
    for i, tau in enumerate(grid):
        writer.writerow([f"{tau:.10g}"] + [f"{cols[c][i]:.12g}" for c in columns])
    return cols


INTEGRAL_DELTAS = (0.2, 0.1, 0.05, 0.025)


def integral_table(family: dens.Family, sigma: float, amplitude: float = 1.0,
                   variant: str = "derived") -> dens.IntegralReport:
    g = dens.TestFunction(sigma, amplitude)
    return dens.integrate_against_test(g, family, INTEGRAL_DELTAS[0], variant,
                                       levels=len(INTEGRAL_DELTAS))
