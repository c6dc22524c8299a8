"""
Conditional and counterfactual mean embeddings, frequentist and Bayesian.

The frequentist estimators are represented as weights over the training
outcomes: an embedding ``mu`` evaluates as ``mu(y) = sum_i w_i k_y(y_i, y)``.

The Bayesian versions place a GP prior ``GP(0, k_x (x) r_y)`` on the
conditional embedding, where ``r_y`` is the nuclear-dominant kernel over
``k_y``, and return posterior means and covariances in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InputError
from .kernels import KernelSpec, RegFactor, SolveConfig, as_points, factorize, gram


@dataclass(frozen=True)
class CMEModel:
    """Conditional mean embedding fitted on paired ``(x_i, y_i)`` data.

    Holds the factor of ``K_xx + lam I``. The factor of ``R_yy`` (used only by
    the Bayesian posterior) is computed on first use.
    """

    train_x: np.ndarray = field(repr=False)
    train_y: np.ndarray = field(repr=False)
    kx: KernelSpec
    ky: KernelSpec
    ry: KernelSpec
    solve: SolveConfig
    factor: RegFactor = field(repr=False)

    @classmethod
    def prior(cls, kx: KernelSpec, ky: KernelSpec, ry: KernelSpec | None = None,
              solve: SolveConfig | None = None) -> CMEModel:
        """A model with no observations; only for checking the prior limit."""
        solve = solve or SolveConfig()
        empty = np.zeros((0, 0))
        return cls(np.zeros((0, kx.dim)), np.zeros((0, ky.dim)), kx, ky,
                   ry or ky.nuclear(), solve, factorize(empty, solve))

    @property
    def n(self) -> int:
        return self.train_x.shape[0]

    @cached_property
    def kyy(self) -> np.ndarray:
        return gram(self.ky, self.train_y, self.train_y)

    @cached_property
    def ryy_factor(self) -> RegFactor:
        # R_yy has no regularizer of its own; jitter escalation only
        return factorize(gram(self.ry, self.train_y, self.train_y), self.solve.with_ridge(0.0))

    def cross_weights(self, xs) -> np.ndarray:
        """``(K_xx + lam I)^{-1} K_{X xs}`` as an ``(n, q)`` matrix."""
        pts = as_points(xs, self.kx.dim)
        return self.factor.solve(gram(self.kx, self.train_x, pts))

    def bayes_projection(self, ys) -> np.ndarray:
        """``K_yy R_yy^{-1} r_{Y ys}``, the outcome side of the posterior mean."""
        pts = as_points(ys, self.ky.dim)
        return self.kyy @ self.ryy_factor.solve(gram(self.ry, self.train_y, pts))

    def reduced_r(self, ys, ys2) -> np.ndarray:
        """``r_{ys Y} R_yy^{-1} r_{Y ys2}``."""
        a = gram(self.ry, self.train_y, as_points(ys, self.ky.dim))
        b = gram(self.ry, self.train_y, as_points(ys2, self.ky.dim))
        return a.T @ self.ryy_factor.solve(b)


def fit_cme(x, y, kx: KernelSpec, ky: KernelSpec, solve: SolveConfig | None = None,
            ry: KernelSpec | None = None) -> CMEModel:
    """Fit the conditional mean embedding of ``y`` given ``x``.

    ``ry`` defaults to the nuclear kernel over ``ky``; passing ``ry=ky``
    recovers the frequentist embedding as the Bayesian posterior mean.
    """
    solve = solve or SolveConfig()
    xs = as_points(x, kx.dim)
    ys = as_points(y, ky.dim)
    if xs.shape[0] == 0:
        raise InputError("cannot fit an embedding on an empty sample")
    if xs.shape[0] != ys.shape[0]:
        raise InputError(f"{xs.shape[0]} covariates but {ys.shape[0]} outcomes")
    factor = factorize(gram(kx, xs, xs), solve)
    return CMEModel(xs, ys, kx, ky, ry or ky.nuclear(), solve, factor)


@dataclass(frozen=True)
class WeightedEmbedding:
    """``mu(y) = weights @ kernel(anchor_points, y)``."""

    weights: np.ndarray
    anchor_points: np.ndarray = field(repr=False)
    kernel: KernelSpec

    def __post_init__(self):
        if self.weights.shape != (self.anchor_points.shape[0],):
            raise InputError("need exactly one weight per anchor point")

    def __call__(self, ys) -> np.ndarray:
        return self.weights @ gram(self.kernel, self.anchor_points, ys)


def cme_weights(model: CMEModel, x) -> WeightedEmbedding:
    pt = as_points(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1), model.kx.dim)
    return WeightedEmbedding(model.cross_weights(pt)[:, 0], model.train_y, model.ky)


def cfme(model: CMEModel, shift_points) -> WeightedEmbedding:
    """Counterfactual mean embedding: the conditional embedding averaged over
    the shifted covariate sample."""
    pts = as_points(shift_points, model.kx.dim)
    if pts.shape[0] == 0:
        raise InputError("shift sample is empty")
    return WeightedEmbedding(model.cross_weights(pts).mean(axis=1), model.train_y, model.ky)


def embedding_expectation(emb: WeightedEmbedding, f_at_anchors) -> float:
    """Plug-in ``<mu, f>`` for an ``f`` known at the anchor points."""
    f = np.asarray(f_at_anchors, dtype=float).reshape(-1)
    if f.shape != emb.weights.shape:
        raise InputError(f"expected {emb.weights.size} function values, got {f.size}")
    return float(emb.weights @ f)


def bayes_cme_posterior(model: CMEModel, xq, yq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and covariance of ``F(x, y) = mu_{Y|X=x}(y)``.

    ``xq`` and ``yq`` are paired queries; returns the mean vector and the full
    covariance matrix over the batch.
    """
    xs = as_points(xq, model.kx.dim)
    ys = as_points(yq, model.ky.dim)
    if xs.shape[0] != ys.shape[0]:
        raise InputError("query covariates and outcomes must pair up")
    prior = gram(model.kx, xs, xs) * gram(model.ry, ys, ys)
    if model.n == 0:
        return np.zeros(xs.shape[0]), prior
    alpha = model.cross_weights(xs)
    mean = np.sum(alpha * model.bayes_projection(ys), axis=0)
    kx_red = gram(model.kx, xs, model.train_x) @ alpha
    cov = prior - kx_red * model.reduced_r(ys, ys)
    return mean, cov


@dataclass(frozen=True)
class EmbeddingPosterior:
    """BayesCFME: the posterior GP of the counterfactual mean embedding.

    ``w`` is the frequentist cfme weight vector; ``f_term`` and ``g_term`` are
    the averaged prior and explained parts of the covariate kernel,
    ``mean(K_{x'x'})`` and ``mean(K_{x'x} (K+lam I)^{-1} K_{xx'})``.
    """

    model: CMEModel = field(repr=False)
    shift_points: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    f_term: float
    g_term: float

    def mean(self, ys) -> np.ndarray:
        return self.w @ self.model.bayes_projection(ys)

    def cov(self, ys, ys2=None) -> np.ndarray:
        ys2 = ys if ys2 is None else ys2
        r = gram(self.model.ry, ys, ys2)
        return self.f_term * r - self.g_term * self.model.reduced_r(ys, ys2)


def embedding_posterior(model: CMEModel, shift_points) -> EmbeddingPosterior:
    pts = as_points(shift_points, model.kx.dim)
    if pts.shape[0] == 0:
        raise InputError("shift sample is empty")
    m = pts.shape[0]
    alpha = model.cross_weights(pts)
    ones = np.ones(m) / m
    f_term = float(ones @ gram(model.kx, pts, pts) @ ones)
    g_term = float(ones @ (gram(model.kx, pts, model.train_x) @ alpha) @ ones)
    return EmbeddingPosterior(model, pts, alpha.mean(axis=1), f_term, g_term)


def bayes_cfme_posterior(post: EmbeddingPosterior, y, y2) -> tuple[float, float]:
    """Posterior mean at ``y`` and covariance between ``y`` and ``y2``."""
    dim = post.model.ky.dim
    ya = np.atleast_1d(np.asarray(y, dtype=float)).reshape(1, dim)
    yb = np.atleast_1d(np.asarray(y2, dtype=float)).reshape(1, dim)
    return float(post.mean(ya)[0]), float(post.cov(ya, yb)[0, 0])
