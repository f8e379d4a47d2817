"""Independent reference computations used by the tests.

These deliberately avoid the package: scalar loops over ``math`` or plain
first-order methods, so agreement is evidence rather than tautology.
"""

import math

import numpy as np


def partials_direct(f0, s, gamma, beta, s_res, resonances, n_partials, decay=True, odd=True,
                    inharmonic=True, resonance=True):
    """Partial frequencies and amplitudes, one scalar at a time."""
    freqs, amps = [], []
    for k in range(1, n_partials + 1):
        b = beta if inharmonic else 0.0
        f = f0 * k * math.sqrt(1.0 + b * k * k)
        a = (s if decay else 1.0) ** (k - 1)
        if odd and k % 2 == 1:
            a *= gamma
        if resonance:
            g = 0.0
            for f_r, sigma, gain in resonances:
                g += gain * math.exp(-((f - f_r) ** 2) / (2.0 * sigma * sigma))
            a *= s_res * g
        freqs.append(f)
        amps.append(a)
    return np.array(freqs), np.array(amps)


def nnls_projected_gradient(A, b, iters=20000):
    """Accelerated projected gradient (FISTA) on 0.5 ||Ax - b||^2 over x >= 0."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    L = np.linalg.norm(A, 2) ** 2
    x = np.zeros(A.shape[1])
    y = x.copy()
    t = 1.0
    for _ in range(iters):
        x_new = np.maximum(y - (A.T @ (A @ y - b)) / L, 0.0)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = x_new + ((t - 1) / t_new) * (x_new - x)
        x, t = x_new, t_new
    return x


def pearson_direct(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def fisher_direct(rs):
    return math.tanh(math.fsum(math.atanh(r) for r in rs) / len(rs))


def tiv_direct(chroma, weights):
    """Weighted DFT coefficients 1..6 of the unit-mass chroma, by explicit sums."""
    total = math.fsum(chroma)
    out = []
    for k in range(1, 7):
        acc = 0j
        for n, c in enumerate(chroma):
            acc += (c / total) * complex(math.cos(2 * math.pi * k * n / 12), -math.sin(2 * math.pi * k * n / 12))
        out.append(weights[k - 1] * acc)
    return np.array(out)


def ar1(rng, n, phi=0.5, burn=200):
    """Unit-variance stationary AR(1) sample."""
    e = rng.standard_normal(n + burn) * math.sqrt(1 - phi * phi)
    x = np.empty(n + burn)
    x[0] = rng.standard_normal()
    for i in range(1, n + burn):
        x[i] = phi * x[i - 1] + e[i]
    return x[burn:]
