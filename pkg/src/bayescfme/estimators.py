"""
Two-stage estimators of ``eta = E[f(R)]`` under a shifted covariate law.

Data come from three unmatched sources:

* ``D1 = {(x_i, r_i)}``   logged covariates (or context/action pairs) and rewards
* ``D2 = {(r~_j, y_j)}``  noisy evaluations ``y_j = f(r~_j) + noise``
* ``D3 = {x'_l}``         covariates under the target law / policy

Four estimators are provided. ``plugin`` composes the frequentist
counterfactual embedding with kernel ridge regression for ``f``. ``cfmp``
models ``f`` as a GP (uncertainty from D2 only). ``bayes_rcfme`` models the
embedding as a GP with a nuclear prior (uncertainty from D1/D3 only).
``bayes_cfmp`` models both as GPs.

Every quantity that depends only on D1 and D2 is cached on a
:class:`FusionModel`, so sweeping over many target samples is cheap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from .embeddings import CMEModel, embedding_posterior, fit_cme
from .errors import InputError
from .kernels import KernelSpec, RegFactor, SolveConfig, as_points, factorize, gram, median_heuristic

logger = logging.getLogger(__name__)

METHODS = ("cfmp", "bayes_rcfme", "bayes_cfmp", "plugin")
Method = Literal["cfmp", "bayes_rcfme", "bayes_cfmp", "plugin"]

NEGATIVE_VARIANCE_TOL = 1e-8


@dataclass(frozen=True)
class GaussianScalar:
    mean: float
    variance: float
    raw_variance: float
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_raw(cls, mean: float, raw_variance: float, **diagnostics) -> GaussianScalar:
        raw = float(raw_variance)
        if raw < -NEGATIVE_VARIANCE_TOL:
            logger.warning("variance %.3g below zero beyond rounding", raw)
            diagnostics["negative_variance"] = True
        return cls(float(mean), max(raw, 0.0), raw, diagnostics)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass(frozen=True)
class FusionInputs:
    """D1, D2 and D3 together with kernels and regularization.

    ``kx`` acts on covariates (a product rbf over concatenated ``(u, a)``),
    ``kr`` on rewards, and ``rr`` is the nuclear prior over ``kr``.
    ``solve.ridge`` is the embedding regularizer and ``lam_f`` the noise
    variance of the GP (or ridge of the KRR) for ``f``.
    """

    x: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    r_tilde: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    x_shift: np.ndarray = field(repr=False)
    kx: KernelSpec
    kr: KernelSpec
    rr: KernelSpec
    solve: SolveConfig = SolveConfig()
    lam_f: float = 1e-2
    theta4_kernel: Literal["K", "R"] = "K"

    def __post_init__(self):
        x = as_points(self.x, self.kx.dim)
        r = as_points(self.r, self.kr.dim)
        rt = as_points(self.r_tilde, self.kr.dim)
        xs = as_points(self.x_shift, self.kx.dim)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if min(x.shape[0], rt.shape[0], xs.shape[0]) == 0:
            raise InputError("D1, D2 and D3 must all be nonempty")
        if x.shape[0] != r.shape[0]:
            raise InputError("D1 covariates and rewards differ in length")
        if rt.shape[0] != y.shape[0]:
            raise InputError("D2 rewards and outcomes differ in length")
        if self.rr.dim != self.kr.dim:
            raise InputError("prior kernel over rewards has the wrong dimension")
        if self.lam_f < 0:
            raise InputError("lam_f must be nonnegative")
        if self.theta4_kernel not in ("K", "R"):
            raise InputError("theta4_kernel must be 'K' or 'R'")
        for name, val in (("x", x), ("r", r), ("r_tilde", rt), ("y", y), ("x_shift", xs)):
            object.__setattr__(self, name, val)


def default_kernels(x, r, r_tilde, x_lengthscales=None, r_lengthscales=None,
                    nuclear_prior: bool = True) -> tuple[KernelSpec, KernelSpec, KernelSpec]:
    """Unit-amplitude rbf kernels, median-heuristic lengthscales unless given.

    The reward kernel is shared by D1 rewards and D2 inputs, so its heuristic
    lengthscale comes from both samples pooled. With ``nuclear_prior=False``
    the prior over rewards is the base kernel itself.
    """
    if x_lengthscales is None:
        x_lengthscales = median_heuristic(x)
    if r_lengthscales is None:
        r_lengthscales = median_heuristic(np.vstack([as_points(r), as_points(r_tilde)]))
    kx = KernelSpec.rbf(x_lengthscales)
    kr = KernelSpec.rbf(r_lengthscales)
    return kx, kr, (kr.nuclear() if nuclear_prior else kr)


def make_inputs(x, r, r_tilde, y, x_shift, *, lam: float = 1e-2, lam_f: float = 1e-2,
                x_lengthscales=None, r_lengthscales=None, nuclear_prior: bool = True,
                solve: SolveConfig | None = None, theta4_kernel: str = "K") -> FusionInputs:
    """Assemble :class:`FusionInputs`, filling in median-heuristic kernels."""
    kx, kr, rr = default_kernels(x, r, r_tilde, x_lengthscales, r_lengthscales, nuclear_prior)
    solve = (solve or SolveConfig()).with_ridge(lam)
    return FusionInputs(x, r, r_tilde, y, x_shift, kx, kr, rr, solve, lam_f, theta4_kernel)


@dataclass(frozen=True)
class ShiftTerms:
    """Target-sample averages shared by every estimator.

    ``E`` is the cfme weight vector ``(1/L) 1^T K_{x'x} (K + lam I)^{-1}``,
    ``F = mean(K_{x'x'})`` and ``G = mean(K_{x'x} (K + lam I)^{-1} K_{xx'})``.
    """

    E: np.ndarray
    F: float
    G: float


@dataclass(frozen=True)
class CFMPTerms:
    """Every intermediate of the BayesCFMP variance, for auditing."""

    mean: float
    E: np.ndarray
    F: float
    G: float
    theta1: np.ndarray
    theta2a: float
    theta2b: float
    theta3a: float
    theta3b: float
    theta4: np.ndarray
    rbar: np.ndarray
    first_term: float

    @property
    def variance(self) -> float:
        return (self.first_term + self.theta2a * self.F - self.theta2b * self.G
                + self.theta3a * self.F - self.theta3b * self.G)


class FusionModel:
    """D1/D2 part of the estimators, reusable across target samples."""

    def __init__(self, x, r, r_tilde, y, kx: KernelSpec, kr: KernelSpec, rr: KernelSpec,
                 solve: SolveConfig = SolveConfig(), lam_f: float = 1e-2,
                 theta4_kernel: str = "K"):
        self.cme: CMEModel = fit_cme(x, r, kx, kr, solve, ry=rr)
        self.r_tilde = as_points(r_tilde, kr.dim)
        self.y = np.asarray(y, dtype=float).reshape(-1)
        self.kr, self.rr = kr, rr
        self.lam_f = lam_f
        self.theta4_kernel = theta4_kernel
        self._plain = solve.with_ridge(0.0)
        self._noisy = solve.with_ridge(lam_f)

    @classmethod
    def from_inputs(cls, inp: FusionInputs) -> FusionModel:
        return cls(inp.x, inp.r, inp.r_tilde, inp.y, inp.kx, inp.kr, inp.rr,
                   inp.solve, inp.lam_f, inp.theta4_kernel)

    @classmethod
    def fit(cls, x, r, r_tilde, y, *, lam: float = 1e-2, lam_f: float = 1e-2,
            x_lengthscales=None, r_lengthscales=None, nuclear_prior: bool = True,
            solve: SolveConfig | None = None, theta4_kernel: str = "K") -> FusionModel:
        kx, kr, rr = default_kernels(x, r, r_tilde, x_lengthscales, r_lengthscales, nuclear_prior)
        solve = (solve or SolveConfig()).with_ridge(lam)
        return cls(x, r, r_tilde, y, kx, kr, rr, solve, lam_f, theta4_kernel)

    @property
    def r(self) -> np.ndarray:
        return self.cme.train_y

    @property
    def r_hat(self) -> np.ndarray:
        return np.vstack([self.r, self.r_tilde])

    def shift_terms(self, x_shift) -> ShiftTerms:
        post = embedding_posterior(self.cme, x_shift)
        return ShiftTerms(post.w, post.f_term, post.g_term)

    # ---- f learnt from D2 with the base kernel (KRR / GP) -----------------

    @cached_property
    def _ktt_factor(self) -> RegFactor:
        return factorize(gram(self.kr, self.r_tilde, self.r_tilde), self._noisy)

    @cached_property
    def krr_coef(self) -> np.ndarray:
        """``A = (K_{r~r~} + lam_f I)^{-1} y``."""
        return self._ktt_factor.solve(self.y)

    @cached_property
    def f_at_r(self) -> np.ndarray:
        """KRR (equivalently GP posterior mean) of ``f`` at the D1 rewards."""
        return gram(self.kr, self.r, self.r_tilde) @ self.krr_coef

    @cached_property
    def f_cov_at_r(self) -> np.ndarray:
        k_rt = gram(self.kr, self.r, self.r_tilde)
        return self.cme.kyy - k_rt @ self._ktt_factor.solve(k_rt.T)

    # ---- nuclear-prior pieces ----------------------------------------------

    @cached_property
    def _rcfme_parts(self) -> tuple[np.ndarray, float, float]:
        A = self.krr_coef
        R_rt = gram(self.rr, self.r, self.r_tilde)
        R_rt_A = R_rt @ A
        mean_vec = self.cme.kyy @ self.cme.ryy_factor.solve(R_rt_A)
        B = float(A @ gram(self.rr, self.r_tilde, self.r_tilde) @ A)
        C = float(R_rt_A @ self.cme.ryy_factor.solve(R_rt_A))
        return mean_vec, B, C

    @cached_property
    def _cfmp_fixed(self) -> dict:
        r, rt, rh = self.r, self.r_tilde, self.r_hat
        K_hh = factorize(gram(self.kr, rh, rh), self._plain)
        R_hh = gram(self.rr, rh, rh)
        R_hr = gram(self.rr, rh, r)
        R_ht = gram(self.rr, rh, rt)
        Rtt_noisy = factorize(gram(self.rr, rt, rt), self._noisy)
        Rrr = self.cme.ryy_factor

        rbar = R_hh - R_ht @ Rtt_noisy.solve(R_ht.T)
        theta1 = K_hh.solve(R_hr @ Rrr.solve(self.cme.kyy))
        a4 = self.krr_coef if self.theta4_kernel == "K" else Rtt_noisy.solve(self.y)
        theta4 = K_hh.solve(R_ht @ a4)
        proj = R_hr @ Rrr.solve(R_hr.T)
        # K^{-1} Rbar K^{-1}; both traces reduce to inner products with it
        sand = K_hh.solve(K_hh.solve(rbar).T)
        mean_vec = gram(self.kr, r, rh) @ K_hh.solve(R_ht @ Rtt_noisy.solve(self.y))
        return dict(
            rbar=rbar, theta1=theta1, theta4=theta4, mean_vec=mean_vec,
            theta2a=float(theta4 @ R_hh @ theta4),
            theta2b=float(theta4 @ proj @ theta4),
            theta3a=float(np.sum(R_hh * sand.T)),
            theta3b=float(np.sum(proj * sand.T)),
            jitter_khh=K_hh.jitter, jitter_rrr=Rrr.jitter,
        )

    # ---- estimators ---------------------------------------------------------

    def plugin_point(self, x_shift) -> float:
        return float(self.shift_terms(x_shift).E @ self.f_at_r)

    def cfmp(self, x_shift) -> GaussianScalar:
        E = self.shift_terms(x_shift).E
        return GaussianScalar.from_raw(E @ self.f_at_r, E @ self.f_cov_at_r @ E)

    def bayes_rcfme(self, x_shift) -> GaussianScalar:
        st = self.shift_terms(x_shift)
        mean_vec, B, C = self._rcfme_parts
        return GaussianScalar.from_raw(st.E @ mean_vec, B * st.F - C * st.G, B=B, C=C,
                                       F=st.F, G=st.G)

    def bayes_cfmp_terms(self, x_shift) -> CFMPTerms:
        st = self.shift_terms(x_shift)
        fx = self._cfmp_fixed
        v = fx["theta1"] @ st.E
        return CFMPTerms(
            mean=float(st.E @ fx["mean_vec"]), E=st.E, F=st.F, G=st.G,
            theta1=fx["theta1"], theta2a=fx["theta2a"], theta2b=fx["theta2b"],
            theta3a=fx["theta3a"], theta3b=fx["theta3b"], theta4=fx["theta4"],
            rbar=fx["rbar"], first_term=float(v @ fx["rbar"] @ v),
        )

    def bayes_cfmp(self, x_shift) -> GaussianScalar:
        t = self.bayes_cfmp_terms(x_shift)
        fx = self._cfmp_fixed
        return GaussianScalar.from_raw(
            t.mean, t.variance, first_term=t.first_term,
            theta2=t.theta2a * t.F - t.theta2b * t.G,
            theta3=t.theta3a * t.F - t.theta3b * t.G,
            jitter_khh=fx["jitter_khh"], jitter_rrr=fx["jitter_rrr"],
        )

    def estimate(self, method: Method, x_shift) -> GaussianScalar:
        if method == "plugin":
            return GaussianScalar.from_raw(self.plugin_point(x_shift), 0.0)
        if method not in METHODS:
            raise InputError(f"unknown method {method!r}; choose from {METHODS}")
        return getattr(self, method)(x_shift)


def plugin_point(inp: FusionInputs) -> float:
    return FusionModel.from_inputs(inp).plugin_point(inp.x_shift)


def cfmp(inp: FusionInputs) -> GaussianScalar:
    return FusionModel.from_inputs(inp).cfmp(inp.x_shift)


def bayes_rcfme(inp: FusionInputs) -> GaussianScalar:
    return FusionModel.from_inputs(inp).bayes_rcfme(inp.x_shift)


def bayes_cfmp(inp: FusionInputs) -> GaussianScalar:
    return FusionModel.from_inputs(inp).bayes_cfmp(inp.x_shift)


def bayes_cfmp_terms(inp: FusionInputs) -> CFMPTerms:
    return FusionModel.from_inputs(inp).bayes_cfmp_terms(inp.x_shift)


def estimate(inp: FusionInputs, method: Method) -> GaussianScalar:
    return FusionModel.from_inputs(inp).estimate(method, inp.x_shift)
