"""Small-budget Bayesian optimization with an exact Gaussian-process surrogate."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm, qmc

LENGTH_GRID = (0.05, 0.1, 0.2, 0.35, 0.5, 1.0, 2.0)
JITTER = 1e-6


class GaussianProcess:
    """Zero-mean GP with a unit-variance squared-exponential kernel on [0, 1]^d.

    Targets are standardized internally. Per-dimension length scales are
    chosen by coordinate ascent of the log marginal likelihood over
    ``LENGTH_GRID``.
    """

    def __init__(self, length_grid=LENGTH_GRID, jitter=JITTER, sweeps=2):
        self.length_grid = length_grid
        self.jitter = jitter
        self.sweeps = sweeps

    @staticmethod
    def _kernel(A, B, ls):
        d = (A[:, None, :] - B[None, :, :]) / ls
        return np.exp(-0.5 * np.sum(d**2, axis=-1))

    def _log_ml(self, X, y, ls):
        K = self._kernel(X, X, ls) + self.jitter * np.eye(len(X))
        try:
            c = cho_factor(K, lower=True)
        except np.linalg.LinAlgError:
            return -np.inf
        alpha = cho_solve(c, y)
        return -0.5 * y @ alpha - np.sum(np.log(np.diag(c[0]))) - 0.5 * len(X) * np.log(2 * np.pi)

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        self.y_mean_ = y.mean()
        self.y_std_ = y.std() if y.std() > 0 else 1.0
        yn = (y - self.y_mean_) / self.y_std_
        ls = np.full(X.shape[1], 0.35)
        best = self._log_ml(X, yn, ls)
        for _, dim in itertools.product(range(self.sweeps), range(X.shape[1])):
            for cand in self.length_grid:
                trial = ls.copy()
                trial[dim] = cand
                val = self._log_ml(X, yn, trial)
                if val > best + 1e-12:
                    best, ls = val, trial
        self.length_scales_ = ls
        self.X_ = X
        K = self._kernel(X, X, ls) + self.jitter * np.eye(len(X))
        self.chol_ = cho_factor(K, lower=True)
        self.alpha_ = cho_solve(self.chol_, yn)
        return self

    def predict(self, Xs):
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = self._kernel(Xs, self.X_, self.length_scales_)
        mu = Ks @ self.alpha_
        v = cho_solve(self.chol_, Ks.T)
        var = np.maximum(1.0 - np.einsum("ij,ji->i", Ks, v), 1e-12)
        return mu * self.y_std_ + self.y_mean_, np.sqrt(var) * self.y_std_


def expected_improvement(mu, sigma, best, xi=0.0):
    imp = mu - best - xi
    z = imp / sigma
    return imp * norm.cdf(z) + sigma * norm.pdf(z)


def bayes_optimize(objective, ranges: dict, n_init: int = 8, n_iter: int = 32, seed: int = 0,
                   n_candidates: int = 1024):
    """Maximize ``objective(params: dict) -> float`` over a box.

    ``n_init`` scrambled-Sobol points seed a GP; each iteration evaluates the
    best expected-improvement point among ``n_candidates`` seeded
    quasi-random candidates. Returns ``(best_params, best_score, trace)``
    where ``trace`` lists ``(params, score)`` in evaluation order.
    """
    names = list(ranges)
    lo = np.array([ranges[k][0] for k in names], dtype=float)
    hi = np.array([ranges[k][1] for k in names], dtype=float)
    if np.any(hi <= lo):
        raise ValueError("every range needs lo < hi")
    d = len(names)

    def to_params(u):
        return {k: float(v) for k, v in zip(names, lo + u * (hi - lo))}

    U = qmc.Sobol(d, scramble=True, seed=np.random.default_rng(seed)).random(n_init)
    scores = [float(objective(to_params(u))) for u in U]
    trace = [(to_params(u), s) for u, s in zip(U, scores)]
    for it in range(n_iter):
        gp = GaussianProcess().fit(U, np.array(scores))
        cand = qmc.Sobol(d, scramble=True, seed=np.random.default_rng([seed, it + 1])).random(n_candidates)
        mu, sd = gp.predict(cand)
        ei = expected_improvement(mu, sd, max(scores))
        u = cand[int(np.argmax(ei))]
        s = float(objective(to_params(u)))
        U = np.vstack([U, u])
        scores.append(s)
        trace.append((to_params(u), s))
    best = int(np.argmax(scores))
    return trace[best][0], scores[best], trace
