"""
Command-line interface.

    bayescfme simulate  --setting A --n 200 --m 200 --out data/
    bayescfme estimate  --setting B --alpha 1.5 --method bayes_cfmp
    bayescfme sweep     --setting B --seeds 1 --out results/
    bayescfme calibrate --setting A --seeds 50 --jobs 4 --out results/
    bayescfme oracle    --setting A --alpha-grid=-2:2:5

Options may also come from ``--config FILE``: one ``key = value`` per line,
keys spelled like the long flags without dashes (``n = 200``,
``alpha-grid = -2:2:33``, ``lambda-f = 0.01``); ``#`` starts a comment.
Command-line flags override the file.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import calibration as cal
from .errors import InputError, NumericalError
from .estimators import METHODS
from .kernels import SolveConfig
from .synthetic import (RngSeed, gen_logging_data, gen_policy_d3, get_setting, true_eta,
                        write_d1, write_d2, write_d3)

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

DEFAULT_METHODS = ("cfmp", "bayes_rcfme", "bayes_cfmp")

logger = logging.getLogger("bayescfme")


@dataclass
class RunConfig:
    setting: str = "A"
    n: int = 200
    m: int = 200
    l: int | None = None
    alphas: list[float] = field(default_factory=list)
    methods: list[str] = field(default_factory=lambda: list(DEFAULT_METHODS))
    seeds: list[int] = field(default_factory=lambda: [0])
    lam: float = 1e-2
    lam_f: float = 1e-2
    x_lengthscales: tuple[float, ...] | None = None
    r_lengthscales: tuple[float, ...] | None = None
    theta4_kernel: str = "K"
    level: float = 0.95
    mc_samples: int = 1_000_000
    jobs: int = 1
    out: Path = Path(".")

    def __post_init__(self):
        spec = get_setting(self.setting)
        self.setting = spec.id
        if not self.alphas:
            self.alphas = [float(a) for a in spec.alpha_grid(33)]
        if self.l is None:
            self.l = min(self.n, 100)
        if min(self.n, self.m, self.l, self.mc_samples, self.jobs) < 1:
            raise InputError("sizes, mc-samples and jobs must be at least 1")
        if self.l > self.n:
            raise InputError(f"l={self.l} exceeds n={self.n}")
        if self.lam < 0 or self.lam_f < 0:
            raise InputError("lambda and lambda-f must be nonnegative")
        if not 0 < self.level < 1:
            raise InputError("level must lie in (0, 1)")
        if not self.seeds:
            raise InputError("need at least one seed")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise InputError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if self.theta4_kernel not in ("K", "R"):
            raise InputError("theta4-kernel must be K or R")

    @property
    def hyper(self) -> cal.Hyper:
        return cal.Hyper(self.lam, self.lam_f, self.x_lengthscales, self.r_lengthscales,
                         self.theta4_kernel, SolveConfig())


def parse_grid(text: str) -> list[float]:
    try:
        lo, hi, count = text.split(":")
        count = int(count)
    except ValueError:
        raise InputError(f"alpha grid must look like min:max:count, got {text!r}") from None
    if count < 1:
        raise InputError("alpha grid count must be at least 1")
    return [float(a) for a in np.linspace(float(lo), float(hi), count)]


def parse_seeds(text: str) -> list[int]:
    """``"50"`` means seeds 0..49; ``"3,7,11"`` lists them explicitly."""
    text = str(text).strip()
    try:
        if "," in text:
            return [int(s) for s in text.split(",") if s.strip()]
        count = int(text)
    except ValueError:
        raise InputError(f"bad seeds {text!r}") from None
    if count < 1:
        raise InputError("seed count must be at least 1")
    return list(range(count))


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def read_config_file(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-")] = value
    return out


# flag name -> (RunConfig field, parser)
_OPTIONS = {
    "setting": ("setting", str),
    "n": ("n", int),
    "m": ("m", int),
    "l": ("l", int),
    "alpha": ("alphas", lambda s: [float(v) for v in str(s).split(",")]),
    "alpha-grid": ("alphas", parse_grid),
    "methods": ("methods", lambda s: [m.strip() for m in str(s).split(",") if m.strip()]),
    "seeds": ("seeds", parse_seeds),
    "lambda": ("lam", float),
    "lambda-f": ("lam_f", float),
    "x-lengthscales": ("x_lengthscales", _floats),
    "r-lengthscales": ("r_lengthscales", _floats),
    "theta4-kernel": ("theta4_kernel", str),
    "level": ("level", float),
    "mc-samples": ("mc_samples", int),
    "jobs": ("jobs", int),
    "out": ("out", Path),
}


def build_config(args: argparse.Namespace) -> RunConfig:
    raw: dict[str, str] = {}
    if args.config:
        raw.update(read_config_file(args.config))
    for flag in _OPTIONS:
        value = getattr(args, flag.replace("-", "_"), None)
        if value is not None:
            raw[flag] = value
    # an explicit --alpha beats a grid coming from the config file
    if getattr(args, "alpha", None) is not None:
        raw.pop("alpha-grid", None)
    if getattr(args, "alpha_grid", None) is not None:
        raw.pop("alpha", None)
    kwargs = {}
    for key, value in raw.items():
        if key not in _OPTIONS:
            raise InputError(f"unknown config key {key!r}")
        name, conv = _OPTIONS[key]
        try:
            kwargs[name] = conv(value)
        except ValueError:
            raise InputError(f"bad value for {key}: {value!r}") from None
    return RunConfig(**kwargs)


def _out_dir(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def cmd_simulate(cfg: RunConfig) -> int:
    spec = get_setting(cfg.setting)
    seed = cfg.seeds[0]
    data = gen_logging_data(spec, cfg.n, cfg.m, RngSeed(seed))
    alpha = cfg.alphas[0]
    d3 = gen_policy_d3(spec, alpha, data.u, RngSeed(seed, f"D3/{alpha!r}"), cfg.l)
    out = _out_dir(cfg)
    n1 = write_d1(out / "d1.csv", data)
    n2 = write_d2(out / "d2.csv", data)
    n3 = write_d3(out / "d3.csv", d3)
    print(f"d1.csv: {n1} rows\nd2.csv: {n2} rows\nd3.csv: {n3} rows (alpha={alpha:g})")
    return EXIT_OK


def estimate_record(cfg: RunConfig, alpha: float, method: str) -> dict:
    spec = get_setting(cfg.setting)
    seed = cfg.seeds[0]
    data = gen_logging_data(spec, cfg.n, cfg.m, RngSeed(seed))
    d3 = gen_policy_d3(spec, alpha, data.u, RngSeed(seed, f"D3/{alpha!r}"), cfg.l)
    model = cal.fit_hyper(data.x, data.r, data.r_tilde, data.y, cfg.hyper)
    g = model.estimate(method, d3)
    lo, hi = cal.credible_interval(g, cfg.level)
    return {"setting": spec.id, "alpha": alpha, "method": method, "seed": seed,
            "mean": g.mean, "variance": g.variance, "ci_low": lo, "ci_high": hi}


def cmd_estimate(cfg: RunConfig, method: str) -> int:
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}")
    print(json.dumps(estimate_record(cfg, cfg.alphas[0], method)))
    return EXIT_OK


def _sweep(cfg: RunConfig) -> cal.SweepResult:
    return cal.run_sweep(cfg.setting, cfg.alphas, cfg.methods, cfg.seeds, cfg.n, cfg.m,
                         cfg.l, cfg.hyper, cfg.level, cfg.mc_samples, cfg.jobs)


def write_sweep(result: cal.SweepResult, out: Path) -> None:
    result.to_csv(out / "sweep.csv")
    result.to_json(out / "sweep.json")
    for method in result.methods:
        lines = ["alpha,mean,ci_low,ci_high,true_eta"]
        lines += [",".join(f"{v:.17g}" for v in row) for row in result.plot_data(method)]
        (out / f"plot_{method}.csv").write_text("\n".join(lines) + "\n")


def cmd_sweep(cfg: RunConfig) -> int:
    result = _sweep(cfg)
    out = _out_dir(cfg)
    write_sweep(result, out)
    failed = sum(cal.excluded_counts(result).values())
    print(f"{len(result)} rows ({failed} failed) written to {out}")
    return EXIT_OK


def calibration_report(result: cal.SweepResult, level: float) -> dict:
    cov = cal.coverage(result, level)
    excl = cal.excluded_counts(result)
    rows = {m: sum(1 for r in result.rows if r.method == m) for m in result.methods}
    return {"level": level, "coverage": cov, "excluded": excl, "rows": rows}


def cmd_calibrate(cfg: RunConfig) -> int:
    result = _sweep(cfg)
    report = calibration_report(result, cfg.level)
    report.update(setting=cfg.setting, n=cfg.n, m=cfg.m, l=cfg.l, seeds=len(cfg.seeds),
                  alphas=len(cfg.alphas))
    out = _out_dir(cfg)
    (out / "calibration.json").write_text(json.dumps(report, indent=1) + "\n")
    print(f"setting {cfg.setting}: coverage of {cfg.level:g} intervals")
    print(f"{'method':<12} {'coverage':>9} {'rows':>6} {'excluded':>9}")
    for m in result.methods:
        print(f"{m:<12} {report['coverage'][m]:>9.4f} {report['rows'][m]:>6d} "
              f"{report['excluded'][m]:>9d}")
    return EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    spec = get_setting(cfg.setting)
    truths = cal.oracle_truths(spec, cfg.alphas, cfg.mc_samples)
    print("alpha,true_eta")
    for a, t in zip(cfg.alphas, truths):
        print(f"{a:.17g},{t:.17g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--setting", choices=["A", "B", "a", "b"])
    common.add_argument("--n", type=int, help="size of D1 (default 200)")
    common.add_argument("--m", type=int, help="size of D2 (default 200)")
    common.add_argument("--l", type=int, help="size of D3 (default min(n, 100))")
    common.add_argument("--alpha", help="policy parameter(s), comma-separated")
    common.add_argument("--alpha-grid", help="min:max:count")
    common.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    common.add_argument("--seeds", help="count (0..n-1) or comma-separated list")
    common.add_argument("--lambda", help="embedding regularizer (default 1e-2)")
    common.add_argument("--lambda-f", help="noise variance for f (default 1e-2)")
    common.add_argument("--x-lengthscales", help="covariate lengthscales u,a (default median)")
    common.add_argument("--r-lengthscales", help="reward lengthscale (default median)")
    common.add_argument("--theta4-kernel", choices=["K", "R"])
    common.add_argument("--level", type=float, help="interval level (default 0.95)")
    common.add_argument("--mc-samples", type=int, help="oracle samples (default 1e6)")
    common.add_argument("--jobs", type=int, help="parallel worker processes")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bayescfme", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write D1/D2/D3 csv files")
    est = sub.add_parser("estimate", parents=[common], help="one estimate as JSON")
    est.add_argument("--method", default="bayes_cfmp", help="estimator (default bayes_cfmp)")
    sub.add_parser("sweep", parents=[common], help="alpha sweep to csv/json")
    sub.add_parser("calibrate", parents=[common], help="interval coverage report")
    sub.add_parser("oracle", parents=[common], help="Monte-Carlo true eta per alpha")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "estimate":
            return cmd_estimate(cfg, args.method)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "calibrate":
            return cmd_calibrate(cfg)
        return cmd_oracle(cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
