"""Monte Carlo driver for the normalised discrepancy of random lattices.

Sample ``i`` is a pure function of ``(config, i)``, so results do not depend
on the worker count.  Workers return per-shell counts and aggregation runs in
index order.  Prefix sums of the shell counts give the discrepancy at every
smaller height ``2^M'`` for free, and that is how the trend report is built.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from .constants import sigma_c_sq, sigma_c_sq_rogers, sigma_u_sq
from .cumulants import CumulantReport, SampleSeries, cumulant_report, ks_distance, ks_pvalue, univariate_cumulants
from .geometry import DomainParams, volume_omega_T
from .lattices import DEFAULT_CAP, EnumerationCapError, LatticeKind, shell_counts
from .sampling import DEFAULT_PRIME, DEFAULT_TWIST_BITS, SamplerConfig, sample

__all__ = [
    "ExperimentConfig",
    "SampleRecord",
    "TrendPoint",
    "ExperimentResult",
    "ExperimentAborted",
    "predicted_variance",
    "clt_experiment",
    "iter_samples",
    "ReproductionVerdict",
    "assess_reproduction",
    "TREND_HEIGHTS",
    "WORKERS_ENV",
]

TREND_HEIGHTS = (16, 32, 64)
WORKERS_ENV = "LATTICECLT_WORKERS"
MIN_L = 5


@dataclass(frozen=True)
class ExperimentConfig:
    kind: LatticeKind = LatticeKind.AFFINE
    m: int = 1
    n: int = 4
    c: tuple[float, ...] = (1.0,)
    u: tuple[float, ...] = (4.0,)
    M: int = 64
    n_samples: int = 2000
    master_seed: int = 0
    workers: int = 1
    hecke_prime: int = DEFAULT_PRIME
    cong: tuple[tuple[int, ...], int] | None = None
    r_max: int = 4
    output: str | None = None
    allow_small_l: bool = False
    twist_bits: int = DEFAULT_TWIST_BITS
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        object.__setattr__(self, "kind", LatticeKind(self.kind))
        object.__setattr__(self, "c", tuple(float(x) for x in self.c))
        object.__setattr__(self, "u", tuple(float(x) for x in self.u))
        if self.cong is not None:
            v, N = self.cong
            object.__setattr__(self, "cong", (tuple(int(x) for x in v), int(N)))
        DomainParams(self.m, self.n, self.c, self.u)  # validates Σu = n
        if self.m + self.n < MIN_L and not self.allow_small_l:
            raise ValueError(f"l = m + n = {self.m + self.n} < {MIN_L}; pass allow_small_l to override")
        if self.M < 1:
            raise ValueError("M must be a positive integer")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if not 3 <= self.r_max <= 8:
            raise ValueError("r_max must lie in [3, 8]")
        self.sampler  # validates prime, seed and congruence data

    @property
    def params(self) -> DomainParams:
        return DomainParams(self.m, self.n, self.c, self.u)

    @property
    def l(self) -> int:
        return self.m + self.n

    @property
    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.l, self.hecke_prime, self.master_seed, self.kind, self.cong, self.twist_bits)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["c"], d["u"] = list(self.c), list(self.u)
        d["cong"] = [list(self.cong[0]), self.cong[1]] if self.cong else None
        return d


@dataclass(frozen=True)
class SampleRecord:
    index: int
    seed: int
    count: int
    volume: float
    normalized_discrepancy: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrendPoint:
    M: int
    variance: float
    ks: float
    ks_pvalue: float
    relative_variance_error: float
    cumulants: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cumulants"] = {str(k): v for k, v in self.cumulants.items()}
        return d


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: tuple[SampleRecord, ...]
    samples: SampleSeries
    report: CumulantReport
    ks: float
    ks_pvalue: float
    predicted_variance: float
    trend: tuple[TrendPoint, ...]
    wall_time: float
    alternative_variances: dict = field(default_factory=dict)

    @property
    def trend_monotone(self) -> bool:
        errs = [t.relative_variance_error for t in self.trend]
        return all(b <= a for a, b in zip(errs, errs[1:]))

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_records": len(self.records),
            "empirical_mean": self.report.mean,
            "empirical_variance": self.report.variance,
            "predicted_variance": self.predicted_variance,
            "alternative_variances": dict(self.alternative_variances),
            "cumulant_report": self.report.to_dict(),
            "ks_distance": self.ks,
            "ks_pvalue": self.ks_pvalue,
            "trend": [t.to_dict() for t in self.trend],
            "trend_monotone": self.trend_monotone,
            "verdict": assess_reproduction(self).to_dict(),
            "wall_time": self.wall_time,
        }


class ExperimentAborted(RuntimeError):
    """A sample failed; ``records`` holds everything completed before it."""

    def __init__(self, message: str, records: list[SampleRecord]):
        super().__init__(message)
        self.records = records


def predicted_variance(kind: LatticeKind, l: int, N: int = 1) -> float:
    kind = LatticeKind(kind)
    if kind is LatticeKind.AFFINE:
        return 1.0
    if kind is LatticeKind.UNIMODULAR:
        return sigma_u_sq(l)
    return sigma_c_sq(l, N)


def _alternatives(cfg: ExperimentConfig) -> dict:
    if cfg.kind is LatticeKind.CONGRUENCE:
        return {"sigma_c_sq_rogers": sigma_c_sq_rogers(cfg.l, cfg.sampler.modulus)}
    return {}


def _sample_seed(cfg: ExperimentConfig, index: int) -> int:
    ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _shells_for(args) -> tuple[int, np.ndarray | str]:
    cfg, index = args
    try:
        lat = sample(cfg.sampler, index)
        return index, shell_counts(lat, cfg.params, cfg.M, cap=cfg.cap).counts
    except EnumerationCapError as exc:
        return index, f"sample {index}: {exc}"


def _iter_shells(cfg: ExperimentConfig, indices: Iterable[int]) -> Iterator[tuple[int, np.ndarray | str]]:
    jobs = ((cfg, i) for i in indices)
    if cfg.workers == 1:
        yield from map(_shells_for, jobs)
        return
    ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
    with ctx.Pool(cfg.workers) as pool:
        yield from pool.imap(_shells_for, jobs, chunksize=8)


def iter_samples(cfg: ExperimentConfig) -> Iterator[tuple[SampleRecord, np.ndarray]]:
    """Yield ``(record, per-shell counts)`` in index order; raise on failure."""
    vol = cfg.M * volume_omega_T(cfg.params, 2.0)
    done: list[SampleRecord] = []
    for index, shells in _iter_shells(cfg, range(cfg.n_samples)):
        if isinstance(shells, str):
            raise ExperimentAborted(shells, done)
        count = int(shells.sum())
        rec = SampleRecord(index, _sample_seed(cfg, index), count, vol, (count - vol) / math.sqrt(vol))
        done.append(rec)
        yield rec, shells


def _trend(cfg: ExperimentConfig, prefix: np.ndarray, target: float) -> tuple[TrendPoint, ...]:
    heights = sorted({h for h in TREND_HEIGHTS if h <= cfg.M} | {cfg.M})
    vol2 = volume_omega_T(cfg.params, 2.0)
    out = []
    for h in heights:
        vol = h * vol2
        d = (prefix[:, h - 1] - vol) / math.sqrt(vol)
        var = float(np.var(d))
        ks = ks_distance(d, target)
        kappa = univariate_cumulants(d, cfg.r_max)
        cums = {order: float(kappa[order - 1]) for order in range(3, cfg.r_max + 1)}
        out.append(TrendPoint(h, var, ks, ks_pvalue(ks, d.size), abs(var - target) / target, cums))
    return tuple(out)


def clt_experiment(
    cfg: ExperimentConfig, *, on_record: Callable[[SampleRecord], None] | None = None
) -> ExperimentResult:
    """Run the experiment; ``on_record`` sees each record as soon as it is final."""
    t0 = time.perf_counter()
    records: list[SampleRecord] = []
    prefix = np.zeros((cfg.n_samples, cfg.M), dtype=np.int64)
    for rec, shells in iter_samples(cfg):
        records.append(rec)
        prefix[rec.index] = np.cumsum(shells)
        if on_record is not None:
            on_record(rec)
    values = np.array([r.normalized_discrepancy for r in records])
    target = predicted_variance(cfg.kind, cfg.l, cfg.sampler.modulus)
    r_max = cfg.r_max
    report = cumulant_report(values, r_max, seed=cfg.master_seed) if values.size >= 2 else CumulantReport(
        values.size, float(values.mean()), 0.0, {}
    )
    ks = ks_distance(values, target)
    return ExperimentResult(
        cfg,
        tuple(records),
        SampleSeries(values, f"{cfg.kind.value} M={cfg.M}"),
        report,
        ks,
        ks_pvalue(ks, values.size),
        target,
        _trend(cfg, prefix, target),
        time.perf_counter() - t0,
        _alternatives(cfg),
    )


def _non_increasing(xs) -> bool:
    return all(b <= a for a, b in zip(xs, xs[1:]))


@dataclass(frozen=True)
class ReproductionVerdict:
    """Outcome of the normal-limit checks at the final height.

    ``status`` is ``"pass"`` when every check holds, ``"trend"`` when each
    failing check improves monotonically over at least two trend heights, else
    ``"fail"``.
    """

    checks: dict[str, bool]
    trending: dict[str, bool]
    status: str

    @property
    def accepted(self) -> bool:
        return self.status != "fail"

    def to_dict(self) -> dict:
        return {"checks": dict(self.checks), "trending": dict(self.trending), "status": self.status}


def assess_reproduction(
    result: ExperimentResult, *, variance_tol: float = 0.25, alpha: float = 0.01, n_se: float = 4.0
) -> ReproductionVerdict:
    rep = result.report
    checks = {
        "variance": abs(rep.variance - result.predicted_variance) <= variance_tol * result.predicted_variance,
        "ks": result.ks_pvalue >= alpha,
    }
    trending = {
        "variance": _non_increasing([t.relative_variance_error for t in result.trend]),
        "ks": _non_increasing([t.ks for t in result.trend]),
    }
    for order in (3, 4):
        if order in rep.cumulants:
            checks[f"cum{order}"] = rep.within(order, n_se)
            trending[f"cum{order}"] = _non_increasing([abs(t.cumulants[order]) for t in result.trend])
    if len(result.trend) < 2:
        trending = dict.fromkeys(trending, False)
    if all(checks.values()):
        status = "pass"
    elif all(trending[k] for k, ok in checks.items() if not ok):
        status = "trend"
    else:
        status = "fail"
    return ReproductionVerdict(checks, trending, status)
