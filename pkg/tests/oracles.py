"""Literal dense-matrix transcriptions of the closed forms, used as test oracles.

Nothing here imports the package: kernels come from ``scipy.spatial`` and
every inverse is an explicit ``np.linalg.inv``. Only valid on well-conditioned
instances.
"""

import numpy as np
from scipy.spatial.distance import cdist


def _pts(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def rbf(a, b, ls, amp=1.0):
    ls = np.atleast_1d(np.asarray(ls, dtype=float))
    return amp * np.exp(-0.5 * cdist(_pts(a) / ls, _pts(b) / ls, "sqeuclidean"))


def nuclear(a, b, ls, amp=1.0):
    ls = np.atleast_1d(np.asarray(ls, dtype=float))
    scale = amp**2 * np.prod(np.sqrt(np.pi * ls**2))
    return scale * np.exp(-0.25 * cdist(_pts(a) / ls, _pts(b) / ls, "sqeuclidean"))


inv = np.linalg.inv


def prop1(x, y, xq, yq, lx, ly, lam, prior=nuclear):
    """Posterior of the conditional mean embedding at paired queries."""
    K = rbf(x, x, lx)
    Kyy = rbf(y, y, ly)
    R = prior(y, y, ly)
    n = K.shape[0]
    kqx = rbf(xq, x, lx)
    rYq = prior(y, yq, ly)
    W = inv(K + lam * np.eye(n))
    mean = np.diag(kqx @ W @ Kyy @ inv(R) @ rYq)
    cov = rbf(xq, xq, lx) * prior(yq, yq, ly) - (kqx @ W @ kqx.T) * (rYq.T @ inv(R) @ rYq)
    return mean, cov


def prop2(x, y, xs, yq, lx, ly, lam, prior=nuclear):
    """Posterior of the counterfactual mean embedding on a y-grid."""
    K = rbf(x, x, lx)
    n, m = K.shape[0], len(xs)
    one = np.ones(m)
    Ksx = rbf(xs, x, lx)
    W = inv(K + lam * np.eye(n))
    R = prior(y, y, ly)
    rYq = prior(y, yq, ly)
    mean = (one @ Ksx @ W @ rbf(y, y, ly) @ inv(R) @ rYq) / m
    a = one @ rbf(xs, xs, lx) @ one
    b = one @ Ksx @ W @ Ksx.T @ one
    cov = (a * prior(yq, yq, ly) - b * (rYq.T @ inv(R) @ rYq)) / m**2
    return mean, cov


def cfme_eval(x, y, xs, yq, lx, ly, lam):
    K = rbf(x, x, lx)
    w = np.ones(len(xs)) @ rbf(xs, x, lx) @ inv(K + lam * np.eye(K.shape[0])) / len(xs)
    return w @ rbf(y, yq, ly)


def _common(x, xs, lx, lam):
    K = rbf(x, x, lx)
    N, L = K.shape[0], len(xs)
    one = np.ones(L)
    Ksx = rbf(xs, x, lx)
    W = inv(K + lam * np.eye(N))
    E = one @ Ksx @ W / L
    F = one @ rbf(xs, xs, lx) @ one / L**2
    G = one @ Ksx @ W @ Ksx.T @ one / L**2
    return E, F, G


def plugin(x, r, rt, y, xs, lx, lr, lam, lam_f):
    E, _, _ = _common(x, xs, lx, lam)
    M = len(rt)
    return E @ rbf(r, rt, lr) @ inv(rbf(rt, rt, lr) + lam_f * np.eye(M)) @ y


def prop3(x, r, rt, y, xs, lx, lr, lam, lam_f):
    E, _, _ = _common(x, xs, lx, lam)
    M = len(rt)
    Kt = inv(rbf(rt, rt, lr) + lam_f * np.eye(M))
    mu = E @ rbf(r, rt, lr) @ Kt @ y
    Ktil = rbf(r, r, lr) - rbf(r, rt, lr) @ Kt @ rbf(rt, r, lr)
    return mu, E @ Ktil @ E


def prop4(x, r, rt, y, xs, lx, lr, lam, lam_f, prior=nuclear):
    E, F, G = _common(x, xs, lx, lam)
    M = len(rt)
    A = inv(rbf(rt, rt, lr) + lam_f * np.eye(M)) @ y
    Rrr_inv = inv(prior(r, r, lr))
    mu = E @ rbf(r, r, lr) @ Rrr_inv @ prior(r, rt, lr) @ A
    B = A @ prior(rt, rt, lr) @ A
    C = A @ prior(rt, r, lr) @ Rrr_inv @ prior(r, rt, lr) @ A
    return dict(mean=mu, variance=B * F - C * G, B=B, C=C, F=F, G=G)


def prop5(x, r, rt, y, xs, lx, lr, lam, lam_f, theta4_kernel="K"):
    E, F, G = _common(x, xs, lx, lam)
    M = len(rt)
    rh = np.concatenate([_pts(r), _pts(rt)])
    Khh_inv = inv(rbf(rh, rh, lr))
    Rhh = nuclear(rh, rh, lr)
    Rhr = nuclear(rh, r, lr)
    Rrr_inv = inv(nuclear(r, r, lr))
    Rht = nuclear(rh, rt, lr)
    Rtt_noisy_inv = inv(nuclear(rt, rt, lr) + lam_f * np.eye(M))
    mu = E @ rbf(r, rh, lr) @ Khh_inv @ Rht @ Rtt_noisy_inv @ y
    rbar = Rhh - Rht @ Rtt_noisy_inv @ Rht.T
    theta1 = Khh_inv @ Rhr @ Rrr_inv @ rbf(r, r, lr)
    if theta4_kernel == "K":
        t4_inner = inv(rbf(rt, rt, lr) + lam_f * np.eye(M))
    else:
        t4_inner = Rtt_noisy_inv
    theta4 = Khh_inv @ Rht @ t4_inner @ y
    P = Rhr @ Rrr_inv @ Rhr.T
    theta2a = theta4 @ Rhh @ theta4
    theta2b = theta4 @ P @ theta4
    theta3a = np.trace(Khh_inv @ Rhh @ Khh_inv @ rbar)
    theta3b = np.trace(P @ Khh_inv @ rbar @ Khh_inv)
    first = E @ theta1.T @ rbar @ theta1 @ E
    var = first + theta2a * F - theta2b * G + theta3a * F - theta3b * G
    return dict(mean=mu, variance=var, E=E, F=F, G=G, theta1=theta1, theta2a=theta2a,
                theta2b=theta2b, theta3a=theta3a, theta3b=theta3b, theta4=theta4,
                rbar=rbar, first_term=first)
