"""
Credible intervals, alpha sweeps and empirical coverage.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, NumericalError
from .estimators import METHODS, FusionModel, GaussianScalar
from .kernels import SolveConfig
from .synthetic import (SETTINGS, RngSeed, SettingSpec, gen_logging_data, gen_policy_d3,
                        get_setting, true_eta)

# Acklam's rational approximation to the inverse normal cdf
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Standard normal quantile, refined by one Halley step to ~1e-15."""
    if not 0.0 < p < 1.0:
        raise InputError(f"quantile level must lie in (0, 1), got {p}")
    if p < _P_LOW:
        q = math.sqrt(-2 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= 1 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def credible_interval(g: GaussianScalar, level: float = 0.95) -> tuple[float, float]:
    """Central interval ``mean +/- z * sd`` of a Gaussian posterior."""
    if not 0.0 < level < 1.0:
        raise InputError(f"level must lie in (0, 1), got {level}")
    if g.variance < 0:
        raise InputError("variance must be nonnegative")
    half = normal_quantile(0.5 + level / 2) * math.sqrt(g.variance)
    return g.mean - half, g.mean + half


@dataclass(frozen=True)
class SweepRow:
    setting: str
    alpha: float
    method: str
    seed: int
    mean: float
    variance: float
    ci_low: float
    ci_high: float
    true_eta: float
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def sort_key(self):
        return (self.setting, self.alpha, _method_rank(self.method), self.seed)


FIELDS = [f.name for f in fields(SweepRow)]
_FLOATS = {"alpha", "mean", "variance", "ci_low", "ci_high", "true_eta"}


def _method_rank(method: str) -> int:
    return METHODS.index(method) if method in METHODS else len(METHODS)


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def __add__(self, other: SweepResult) -> SweepResult:
        return SweepResult(tuple(sorted(self.rows + other.rows, key=SweepRow.sort_key)))

    @property
    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows}, key=_method_rank)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FIELDS)
        for row in self.rows:
            w.writerow([_fmt(getattr(row, k)) for k in FIELDS])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> SweepResult:
        text = _read_text(path_or_text)
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append(SweepRow(**{k: _parse(k, v) for k, v in rec.items()}))
        return cls(tuple(rows))

    def to_json(self, path=None) -> str:
        doc = {"fields": FIELDS,
               "rows": [{k: _json_value(v) for k, v in asdict(r).items()} for r in self.rows]}
        text = json.dumps(doc, indent=1) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, path_or_text) -> SweepResult:
        doc = json.loads(_read_text(path_or_text))
        rows = [SweepRow(**{k: (math.nan if v is None else v) for k, v in rec.items()})
                for rec in doc["rows"]]
        return cls(tuple(rows))

    def plot_data(self, method: str) -> list[tuple[float, float, float, float, float]]:
        """``(alpha, mean, ci_low, ci_high, true_eta)`` for the lowest seed."""
        rows = [r for r in self.rows if r.method == method]
        if not rows:
            return []
        first = min(r.seed for r in rows)
        pick = sorted((r for r in rows if r.seed == first), key=lambda r: r.alpha)
        return [(r.alpha, r.mean, r.ci_low, r.ci_high, r.true_eta) for r in pick]


def _read_text(path_or_text) -> str:
    if isinstance(path_or_text, Path) or "\n" not in str(path_or_text):
        return Path(path_or_text).read_text()
    return str(path_or_text)


def _parse(key: str, value: str):
    if key in _FLOATS:
        return float(value)
    if key == "seed":
        return int(value)
    return value


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass(frozen=True)
class Hyper:
    """Estimator hyperparameters shared by every row of a sweep."""

    lam: float = 1e-2
    lam_f: float = 1e-2
    x_lengthscales: tuple[float, ...] | None = None
    r_lengthscales: tuple[float, ...] | None = None
    theta4_kernel: str = "K"
    solve: SolveConfig = SolveConfig()


def fit_hyper(x, r, r_tilde, y, hyper: Hyper) -> FusionModel:
    return FusionModel.fit(x, r, r_tilde, y, lam=hyper.lam, lam_f=hyper.lam_f,
                           x_lengthscales=hyper.x_lengthscales,
                           r_lengthscales=hyper.r_lengthscales, solve=hyper.solve,
                           theta4_kernel=hyper.theta4_kernel)


def _seed_rows(spec: str | SettingSpec, alphas: Sequence[float], methods: Sequence[str], seed: int,
               N: int, M: int, L: int, hyper: Hyper, level: float,
               truths: Sequence[float]) -> list[SweepRow]:
    spec = get_setting(spec)
    logged = gen_logging_data(spec, N, M, RngSeed(seed))
    rows = []

    def failed(alpha, method, truth, exc):
        nan = math.nan
        msg = " ".join(str(exc).split())[:120].replace(",", ";")
        return SweepRow(spec.id, float(alpha), method, seed, nan, nan, nan, nan, truth,
                        f"failed: {type(exc).__name__}: {msg}")

    try:
        model = fit_hyper(logged.x, logged.r, logged.r_tilde, logged.y, hyper)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        return [failed(a, m, t, exc) for a, t in zip(alphas, truths) for m in methods]

    for alpha, truth in zip(alphas, truths):
        d3 = gen_policy_d3(spec, alpha, logged.u, RngSeed(seed, f"D3/{float(alpha)!r}"), L)
        for method in methods:
            try:
                g = model.estimate(method, d3)
            except (NumericalError, np.linalg.LinAlgError) as exc:
                rows.append(failed(alpha, method, truth, exc))
                continue
            lo, hi = credible_interval(g, level)
            rows.append(SweepRow(spec.id, float(alpha), method, seed, g.mean, g.variance,
                                 lo, hi, truth))
    return rows


def oracle_truths(spec: SettingSpec, alphas: Iterable[float], mc_samples: int,
                  oracle_seed: int = 0) -> list[float]:
    return [true_eta(spec, a, mc_samples, RngSeed(oracle_seed, f"oracle/{float(a)!r}"))
            for a in alphas]


def run_sweep(setting: str | SettingSpec, alphas: Sequence[float], methods: Sequence[str],
              seeds: Sequence[int], N: int = 200, M: int = 200, L: int | None = None,
              hyper: Hyper = Hyper(), level: float = 0.95, mc_samples: int = 1_000_000,
              jobs: int = 1, oracle_seed: int = 0) -> SweepResult:
    """Estimate every ``(alpha, method, seed)`` cell and attach the oracle truth.

    D1/D2 depend on the seed only, so the D1/D2 fit is shared across the alpha
    grid. Numerical failures are recorded per row in ``status``.
    """
    spec = get_setting(setting)
    alphas = [float(a) for a in alphas]
    methods = list(methods)
    seeds = [int(s) for s in seeds]
    if not alphas or not methods or not seeds:
        raise InputError("alpha grid, methods and seeds must be nonempty")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise InputError(f"unknown methods {bad}; choose from {list(METHODS)}")
    L = min(N, 100) if L is None else L
    if not 1 <= L <= N:
        raise InputError(f"L={L} must lie in [1, N={N}]")

    truths = oracle_truths(spec, alphas, mc_samples, oracle_seed)
    # registered settings travel to workers by id; their laws are lambdas
    key = spec.id if SETTINGS.get(spec.id) is spec else spec
    args = [(key, alphas, methods, s, N, M, L, hyper, level, truths) for s in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_seed_rows_star, args))
    else:
        chunks = [_seed_rows(*a) for a in args]
    rows = sorted((r for chunk in chunks for r in chunk), key=SweepRow.sort_key)
    return SweepResult(tuple(rows))


def _seed_rows_star(args):
    return _seed_rows(*args)


def coverage(result: SweepResult, level: float | None = None) -> dict[str, float]:
    """Per-method fraction of successful rows whose interval holds the truth.

    With ``level`` given the intervals are rebuilt from mean and variance at
    that level; otherwise the stored bounds are used.
    """
    if len(result) == 0:
        raise InputError("cannot compute coverage of an empty result")
    out = {}
    for method in result.methods:
        hits = []
        for r in result.rows:
            if r.method != method or not r.ok:
                continue
            lo, hi = r.ci_low, r.ci_high
            if level is not None:
                lo, hi = credible_interval(GaussianScalar(r.mean, r.variance, r.variance), level)
            hits.append(lo <= r.true_eta <= hi)
        out[method] = float(np.mean(hits)) if hits else math.nan
    return out


def excluded_counts(result: SweepResult) -> dict[str, int]:
    return {m: sum(1 for r in result.rows if r.method == m and not r.ok) for m in result.methods}
