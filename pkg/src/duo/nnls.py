"""Lawson-Hanson active-set solver for min ||Ax - b|| subject to x >= 0."""

from __future__ import annotations

import numpy as np


class NNLSIterationError(RuntimeError):
    pass


def nnls(A, b, tol: float = 1e-8, max_iter: int | None = None):
    """Solve a non-negative least-squares problem.

    Parameters
    ----------
    A : array, shape (m, n)
    b : array, shape (m,)
    tol : float
        The outer loop stops once no inactive variable has a dual
        (negative gradient) component above ``tol``.
    max_iter : int, optional
        Cap on outer plus inner iterations, ``10 * n`` by default.

    Returns
    -------
    x : ndarray, shape (n,)
        Exactly non-negative solution.
    rnorm : float
        Residual norm ``||Ax - b||``.

    Raises
    ------
    NNLSIterationError
        When the iteration cap is exceeded.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError("b must have one entry per row of A")
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ b
    blocked = np.zeros(n, dtype=bool)
    it = 0
    while not passive.all():
        cand = np.where(passive | blocked, -np.inf, w)
        j = int(np.argmax(cand))
        if cand[j] <= tol:
            break
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                raise NNLSIterationError(f"no convergence within {max_iter} iterations")
            idx = np.flatnonzero(passive)
            z = np.zeros(n)
            z[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            if z[j] <= 0 and x[j] == 0:
                # rounding made the entering variable useless; skip it until x moves
                passive[j] = False
                blocked[j] = True
                break
            blocked[:] = False
            if np.all(z[idx] > 0):
                x = z
                break
            # step back towards x until the first passive variable hits zero
            neg = idx[z[idx] <= 0]
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > tol * max(1.0, np.abs(x).max())
            x[~passive] = 0.0
            if not passive.any():
                break
        if not blocked.any():
            w = A.T @ (b - A @ x)
    x = np.maximum(x, 0.0)
    return x, float(np.linalg.norm(A @ x - b))


def nnls_gram(G, c, tol: float = 1e-8, max_iter: int | None = None, support=None):
    """Lawson-Hanson on the normal equations.

    Same active-set iteration as :func:`nnls` but driven by the Gram matrix
    ``G = A.T @ A`` and ``c = A.T @ b``, so a fixed dictionary is factored
    once and each subproblem is a small dense solve. ``support`` (boolean,
    e.g. the previous frame's positive set) warm-starts the passive set:
    it is pruned until its subproblem solution is positive, and the usual
    iteration continues from there. For positive definite ``G`` the
    minimizer is unique, so a warm start changes the path, not the answer.
    Returns ``x`` only.
    """
    G = np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    if G.shape != (n, n):
        raise ValueError("G must be square with one row per entry of c")
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    if support is not None:
        passive = np.asarray(support, dtype=bool).copy()
        while passive.any():
            idx = np.flatnonzero(passive)
            z = _solve(G, c, idx)
            if np.all(z > 0):
                x[idx] = z
                break
            passive[idx[z <= 0]] = False
    w = c - G @ x
    blocked = np.zeros(n, dtype=bool)
    it = 0
    while not passive.all():
        cand = np.where(passive | blocked, -np.inf, w)
        j = int(np.argmax(cand))
        if cand[j] <= tol:
            break
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                raise NNLSIterationError(f"no convergence within {max_iter} iterations")
            idx = np.flatnonzero(passive)
            z = np.zeros(n)
            z[idx] = _solve(G, c, idx)
            if z[j] <= 0 and x[j] == 0:
                passive[j] = False
                blocked[j] = True
                break
            blocked[:] = False
            if np.all(z[idx] > 0):
                x = z
                break
            neg = idx[z[idx] <= 0]
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > tol * max(1.0, np.abs(x).max())
            x[~passive] = 0.0
            if not passive.any():
                break
        if not blocked.any():
            w = c - G @ x
    return np.maximum(x, 0.0)


def _solve(G, c, idx):
    sub = G[idx][:, idx]
    try:
        return np.linalg.solve(sub, c[idx])
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(sub, c[idx], rcond=None)[0]
