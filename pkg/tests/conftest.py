import contextlib

import numpy as np
import pytest

from bayescfme import FusionInputs, KernelSpec, SolveConfig

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@contextlib.contextmanager
def criterion(name: str, detail: str = ""):
    """Record a pass/fail line for the acceptance summary.

    The yielded list collects measured values appended to the line.
    """
    notes: list[str] = [detail] if detail else []
    try:
        yield notes
    except BaseException as exc:
        notes.append(f"{type(exc).__name__}: {exc}")
        ACCEPTANCE[name] = (False, "; ".join(notes))
        raise
    ACCEPTANCE[name] = (True, "; ".join(notes))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        if detail:
            line += f"  [{detail.splitlines()[0][:240]}]"
        terminalreporter.write_line(line)


def spread_points(rng, n, spacing=1.0, wiggle=0.15):
    """1-d points on a shuffled jittered grid: minimum gap ``spacing - 2*wiggle``."""
    pts = np.arange(n) * spacing + rng.uniform(-wiggle, wiggle, n)
    pts -= pts.mean()
    rng.shuffle(pts)
    return pts


def tiny_instance(rng, N, M, L, lx=(1.0, 1.0), lr=0.5, lam=0.05, lam_f=0.05,
                  nuclear=True, theta4_kernel="K") -> FusionInputs:
    """Random, well-conditioned fusion problem: D1 and D2 rewards interleave on
    a jittered grid so every reward Gram matrix is safely invertible."""
    x = rng.uniform(-2, 2, (N, 2))
    xs = rng.uniform(-2, 2, (L, 2))
    rh = spread_points(rng, N + M)
    r, rt = rh[:N], rh[N:]
    y = np.sin(rt) + 0.1 * rng.standard_normal(M)
    kr = KernelSpec.rbf(lr)
    return FusionInputs(x, r, rt, y, xs, KernelSpec.rbf(lx), kr,
                        kr.nuclear() if nuclear else kr, SolveConfig(ridge=lam), lam_f,
                        theta4_kernel)


def oracle_args(inp: FusionInputs):
    return (inp.x, inp.r[:, 0], inp.r_tilde[:, 0], inp.y, inp.x_shift,
            inp.kx.lengthscales, inp.kr.lengthscales, inp.solve.ridge, inp.lam_f)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
