"""
Synthetic off-policy problems with a known ultimate effect.

Both settings draw a context ``u``, a logged action ``a | u``, a reward
``r | u, a`` (D1), and separately noisy evaluations ``y = f(r~) + noise`` of a
smooth function on ``r~ ~ Uniform(-2, 2)`` (D2). Target policies form a
one-parameter family indexed by ``alpha``; the contexts in D3 are the logged
ones, with fresh actions drawn from the target policy.

Randomness is keyed by ``(seed, stream)`` so that e.g. growing N leaves D2
untouched.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InputError

Array = np.ndarray


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream: str = "default"

    def generator(self) -> np.random.Generator:
        key = zlib.crc32(self.stream.encode())
        return np.random.default_rng(np.random.SeedSequence(int(self.seed), spawn_key=(key,)))

    def child(self, stream: str) -> RngSeed:
        return RngSeed(self.seed, stream)


@dataclass(frozen=True)
class SettingSpec:
    """A data-generating process.

    The callables take arrays plus a ``Generator`` for their noise; ``true_f``
    is the noiseless ``E[y | r]``.
    """

    id: str
    context_mean: float
    context_scale: float
    action_law: Callable[[Array, np.random.Generator], Array]
    reward_law: Callable[[Array, Array, np.random.Generator], Array]
    outcome_law: Callable[[Array, np.random.Generator], Array]
    true_f: Callable[[Array], Array]
    policy_law: Callable[[float, Array, np.random.Generator], Array]
    f_bound: float
    alpha_range: tuple[float, float]

    def draw_context(self, n: int, rng: np.random.Generator) -> Array:
        return self.context_mean + self.context_scale * rng.standard_normal(n)

    def alpha_grid(self, count: int = 33) -> Array:
        return np.linspace(*self.alpha_range, count)


def _f_a(r):
    return 2.0 * np.sin(r / 2.0)


def _f_b(r):
    return 1.5 * np.sin(r)


# u ~ N(5, 2) is read as mean 5 and standard deviation 2
SETTING_A = SettingSpec(
    id="A",
    context_mean=5.0,
    context_scale=2.0,
    action_law=lambda u, g: 4.0 * g.standard_normal(u.shape),
    reward_law=lambda u, a, g: (u + a) + 0.05 * g.standard_normal(u.shape),
    outcome_law=lambda rt, g: _f_a(rt) + 0.05 * g.standard_normal(rt.shape),
    true_f=_f_a,
    policy_law=lambda alpha, u, g: alpha * u + 0.05 * g.standard_normal(u.shape),
    f_bound=2.0,
    alpha_range=(-2.0, 2.0),
)

SETTING_B = SettingSpec(
    id="B",
    context_mean=5.0,
    context_scale=2.0,
    action_law=lambda u, g: 3.0 * g.standard_normal(u.shape),
    reward_law=lambda u, a, g: np.cos(u) + np.sin(a) + 0.5 * g.standard_normal(u.shape),
    outcome_law=lambda rt, g: _f_b(rt) + 0.2 * g.standard_normal(rt.shape),
    true_f=_f_b,
    policy_law=lambda alpha, u, g: 2.0 * np.sin(alpha) + 0.5 * g.standard_normal(u.shape),
    f_bound=1.5,
    alpha_range=(-8.0, 8.0),
)

SETTINGS = {"A": SETTING_A, "B": SETTING_B}


def get_setting(setting: str | SettingSpec) -> SettingSpec:
    if isinstance(setting, SettingSpec):
        return setting
    try:
        return SETTINGS[str(setting).upper()]
    except KeyError:
        raise InputError(f"unknown setting {setting!r}; choose from {sorted(SETTINGS)}") from None


@dataclass(frozen=True)
class LoggedData:
    """D1 = (u, a, r) and D2 = (r_tilde, y)."""

    u: Array
    a: Array
    r: Array
    r_tilde: Array
    y: Array

    @property
    def x(self) -> Array:
        return np.column_stack([self.u, self.a])


def gen_logging_data(spec: SettingSpec, N: int, M: int, seed: RngSeed | int) -> LoggedData:
    if N < 1 or M < 1:
        raise InputError("N and M must be at least 1")
    seed = seed if isinstance(seed, RngSeed) else RngSeed(seed)
    g1 = seed.child("D1").generator()
    u = spec.draw_context(N, g1)
    a = spec.action_law(u, g1)
    r = spec.reward_law(u, a, g1)
    g2 = seed.child("D2").generator()
    rt = g2.uniform(-2.0, 2.0, M)
    y = spec.outcome_law(rt, g2)
    return LoggedData(u, a, r, rt, y)


def gen_policy_d3(spec: SettingSpec, alpha: float, logged_u, seed: RngSeed | int,
                  L: int | None = None) -> Array:
    """Target-policy sample ``(u_l, a'_l)`` as an ``(L, 2)`` array.

    With ``L`` given, contexts are subsampled without replacement.
    """
    u = np.asarray(logged_u, dtype=float).reshape(-1)
    if u.size == 0:
        raise InputError("need at least one logged context")
    seed = seed if isinstance(seed, RngSeed) else RngSeed(seed, "D3")
    g = seed.generator()
    if L is not None:
        if not 1 <= L <= u.size:
            raise InputError(f"L={L} must lie in [1, {u.size}]")
        if L < u.size:
            u = u[np.sort(g.choice(u.size, L, replace=False))]
    a = spec.policy_law(float(alpha), u, g)
    return np.column_stack([u, a])


def true_eta(spec: SettingSpec, alpha: float, mc_samples: int = 1_000_000,
             seed: RngSeed | int = 0) -> float:
    """Monte-Carlo ``E[f(r)]`` with contexts, actions and rewards drawn afresh
    under the target policy."""
    if mc_samples < 1:
        raise InputError("mc_samples must be at least 1")
    seed = seed if isinstance(seed, RngSeed) else RngSeed(seed, "oracle")
    g = seed.generator()
    total, done = 0.0, 0
    chunk = 250_000
    while done < mc_samples:
        n = min(chunk, mc_samples - done)
        u = spec.draw_context(n, g)
        a = spec.policy_law(float(alpha), u, g)
        total += float(np.sum(spec.true_f(spec.reward_law(u, a, g))))
        done += n
    return total / mc_samples


def _write_csv(path: Path, header: list[str], cols: list[Array]) -> int:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([f"{float(v):.17g}" for v in row])
    return len(cols[0])


def write_d1(path, data: LoggedData) -> int:
    return _write_csv(path, ["u", "a", "r"], [data.u, data.a, data.r])


def write_d2(path, data: LoggedData) -> int:
    return _write_csv(path, ["r_tilde", "y"], [data.r_tilde, data.y])


def write_d3(path, d3: Array) -> int:
    return _write_csv(path, ["u", "a"], [d3[:, 0], d3[:, 1]])


def read_csv(path) -> dict[str, Array]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
