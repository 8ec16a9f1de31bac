"""Rational filters Phi(lam) = sum_j 2 Re(w_j / (lam - sigma_j)).

Only the upper-half-plane poles are stored; their conjugates (with
conjugate weights) are implied, which is why every evaluation folds each
pole into ``2 Re(...)``.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import IllPosedFitError, dense_lsq

KINDS = ("midpoint", "gauss-legendre", "gauss-chebyshev", "slrf")


@dataclass(frozen=True, eq=False)
class FilterSpec:
    kind: str
    gamma: float
    poles: np.ndarray
    weights: np.ndarray
    alpha: float = None
    beta: float = None

    @property
    def N(self):
        return len(self.poles)

    def __call__(self, lam):
        return eval_filter(self, lam)

    def permuted(self, order):
        """Same filter with the poles listed in a different order."""
        order = np.asarray(order)
        return FilterSpec(self.kind, self.gamma, self.poles[order],
                          self.weights[order], self.alpha, self.beta)

    def as_dict(self):
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "N": self.N,
            "alpha": self.alpha,
            "beta": self.beta,
            "poles": [[p.real, p.imag] for p in self.poles],
            "weights": [[w.real, w.imag] for w in self.weights],
        }


def eval_filter(spec, lam):
    lam = np.asarray(lam, dtype=float)
    flat = np.atleast_1d(lam).ravel()
    terms = spec.weights[None, :] / (flat[:, None] - spec.poles[None, :])
    phi = 2.0 * terms.real.sum(axis=1)
    if lam.ndim == 0:
        return float(phi[0])
    return phi.reshape(lam.shape)


def _check(gamma, N):
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if int(N) != N or N < 1:
        raise ValueError(f"need at least one pole, got N={N}")
    return float(gamma), int(N)


def legendre_nodes(N, tol=1e-15, max_newton=100):
    """Gauss-Legendre nodes (ascending) and weights on [-1, 1].

    Newton iteration on the three-term recurrence, started from
    Chebyshev points.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    k = np.arange(1, N + 1)
    x = np.cos(np.pi * (2 * k - 1) / (2 * N))
    for _ in range(max_newton):
        p, dp = _legendre_and_derivative(N, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    _, dp = _legendre_and_derivative(N, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x = x[order]
    w = w[order]
    # Enforce the exact node symmetry of the rule.
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


def _legendre_and_derivative(N, x):
    p0 = np.ones_like(x)
    p1 = x.copy()
    if N == 0:
        return p0, np.zeros_like(x)
    for m in range(2, N + 1):
        p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
    dp = N * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def _semicircle_rule(kind, gamma, nodes, rho):
    c = r = 0.5 * gamma
    theta = 0.5 * np.pi * (1.0 - nodes)
    e = np.exp(1j * theta)
    return FilterSpec(kind, gamma, c + r * e, -rho * r * e / 4.0)


def build_midpoint(gamma, N):
    gamma, N = _check(gamma, N)
    c = r = 0.5 * gamma
    theta = np.pi * (2 * np.arange(1, N + 1) - 1) / (2 * N)
    e = np.exp(1j * theta)
    return FilterSpec("midpoint", gamma, c + r * e, -r * e / (2 * N))


def build_gauss_legendre(gamma, N):
    gamma, N = _check(gamma, N)
    x, rho = legendre_nodes(N)
    return _semicircle_rule("gauss-legendre", gamma, x, rho)


def build_gauss_chebyshev(gamma, N):
    gamma, N = _check(gamma, N)
    x = np.cos(np.pi * (2 * np.arange(1, N + 1) - 1) / (2 * N))
    rho = (np.pi / N) * np.sqrt(1.0 - x * x)
    return _semicircle_rule("gauss-chebyshev", gamma, x, rho)


def slrf_fit_grid(gamma, n_pass=128, n_stop=256, stop_start=1.1, stop_end=100.0):
    passband = np.linspace(1e-3 * gamma, gamma, n_pass)
    stopband = np.geomspace(stop_start * gamma, stop_end * gamma, n_stop)
    return passband, stopband


def build_slrf(gamma, N, alpha=1.0, beta=0.01, stop_start=1.1):
    """Poles on the ray sigma = x (1 + i alpha); weights by weighted least squares.

    Real parts sit at the midpoints of N equal subintervals of (0, gamma].
    The passband rows of the fit carry weight sqrt(beta), the stopband
    rows weight 1.
    """
    gamma, N = _check(gamma, N)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    x = gamma * (2 * np.arange(1, N + 1) - 1) / (2 * N)
    poles = x * (1.0 + 1j * alpha)
    passband, stopband = slrf_fit_grid(gamma, stop_start=stop_start)
    lam = np.concatenate([passband, stopband])
    target = np.concatenate([np.ones_like(passband), np.zeros_like(stopband)])
    row_w = np.concatenate([np.full(passband.size, np.sqrt(beta)),
                            np.ones(stopband.size)])
    R = 1.0 / (lam[:, None] - poles[None, :])
    design = np.hstack([2.0 * R.real, -2.0 * R.imag]) * row_w[:, None]
    try:
        coef = dense_lsq(design, target * row_w)
    except IllPosedFitError as exc:
        raise IllPosedFitError(f"SLRF weight fit failed: {exc}") from exc
    weights = coef[:N] + 1j * coef[N:]
    return FilterSpec("slrf", gamma, poles, weights, alpha=float(alpha), beta=float(beta))


def build_filter(kind, gamma, N, **kwargs):
    builders = {
        "midpoint": build_midpoint,
        "gauss-legendre": build_gauss_legendre,
        "gauss-chebyshev": build_gauss_chebyshev,
        "slrf": build_slrf,
    }
    try:
        builder = builders[kind]
    except KeyError:
        raise ValueError(f"unknown filter kind {kind!r}; expected one of {KINDS}") from None
    return builder(gamma, N, **kwargs)


def filter_quality(spec, passband, stopband):
    phi_pass = np.abs(eval_filter(spec, np.atleast_1d(passband)))
    phi_stop = np.abs(eval_filter(spec, np.atleast_1d(stopband)))
    pass_min = float(phi_pass.min())
    stop_max = float(phi_stop.max())
    return {
        "pass_min": pass_min,
        "pass_max": float(phi_pass.max()),
        "stop_max": stop_max,
        "separation": pass_min / stop_max if stop_max > 0 else np.inf,
    }
