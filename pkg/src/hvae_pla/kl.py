"""KL-divergence kernels for diagonal Gaussian posteriors.

All functions take arrays ``mu`` and ``sigma`` of matching shape ``(z,)`` or
``(z, n)`` and reduce over the first (latent) axis, returning a scalar or a
length-``n`` vector. The ``*_grad`` companions return gradients with respect
to ``mu`` and to ``log_var = log(sigma**2)`` elementwise, which is what the
encoder heads emit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TANH_ERFC_SLOPE = 1.19
_SQRT_2 = np.sqrt(2.0)
_SQRT_2PI = np.sqrt(2.0 * np.pi)
_SQRT_PI_2 = np.sqrt(np.pi / 2.0)


class DomainError(ValueError):
    pass


@dataclass
class LatentGaussian:
    """Per-sample mean and standard deviation emitted by an encoder head."""

    mu: np.ndarray
    sigma: np.ndarray

    @classmethod
    def from_log_var(cls, mu, log_var):
        return cls(np.asarray(mu, dtype=float), np.exp(0.5 * np.asarray(log_var, dtype=float)))


def _check(sigma, *scales):
    if np.any(np.asarray(sigma) <= 0):
        raise DomainError("sigma must be strictly positive")
    for s in scales:
        if not s > 0:
            raise DomainError(f"prior scale must be > 0, got {s}")


def erfc_tanh(x):
    """Closed-form stand-in for Erfc: ``1 - tanh(1.19 x)``."""
    return 1.0 - np.tanh(TANH_ERFC_SLOPE * np.asarray(x, dtype=float))


def kl_standard_normal(mu, sigma):
    """KL(N(mu, sigma^2) || N(0, 1)), summed over latent dimensions."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check(sigma)
    var = sigma * sigma
    return 0.5 * np.sum(-np.log(var) + var + mu * mu - 1.0, axis=0)


def kl_standard_normal_grad(mu, sigma):
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(sigma, dtype=float) ** 2
    return mu.copy(), 0.5 * (var - 1.0)


def kl_double_peak_bound(mu, sigma, m, s, weight=0.5):
    """Convexity upper bound on KL(N(mu, sigma^2) || w N(-m, s^2) + (1-w) N(m, s^2)).

    Uses KL(q || sum_k w_k p_k) <= sum_k w_k KL(q || p_k); for ``weight=0.5``
    this is ``log(s/sigma) + (sigma^2 + (mu-m)^2/2 + (mu+m)^2/2) / (2 s^2) - 1/2``
    per dimension.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check(sigma, s)
    if not 0.0 < weight < 1.0:
        raise DomainError(f"mixture weight must be in (0, 1), got {weight}")
    spread = weight * (mu + m) ** 2 + (1.0 - weight) * (mu - m) ** 2
    per_dim = np.log(s / sigma) + (sigma * sigma + spread) / (2.0 * s * s) - 0.5
    return np.sum(per_dim, axis=0)


def kl_double_peak_bound_grad(mu, sigma, m, s, weight=0.5):
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(sigma, dtype=float) ** 2
    d_mu = (weight * (mu + m) + (1.0 - weight) * (mu - m)) / (s * s)
    d_log_var = -0.5 + var / (2.0 * s * s)
    return d_mu, d_log_var


def kl_double_peak_exact(mu, sigma, m, s):
    """Closed-form approximation of KL(N(mu, sigma^2) || N(-m, s^2)/2 + N(m, s^2)/2).

    Splits the divergence as ``iota - kappa - gamma``:

    - ``iota = log(2 s / sigma)``
    - ``kappa = -((m - mu)^2 + sigma^2 - s^2) / (2 s^2)``
    - ``gamma`` approximates ``E[log(1 + exp(-2 m x / s^2))]`` by
      ``E[max(0, -2 m x / s^2)]``, with Erfc replaced by :func:`erfc_tanh`.

    Accurate for well separated peaks (``m / s`` large); at ``m = 0`` it
    leaves a residual of ``log 2``.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _check(sigma, s)
    iota = np.log(2.0 * s / sigma)
    kappa = -((m - mu) ** 2 + sigma * sigma - s * s) / (2.0 * s * s)
    bracket = (-sigma * np.exp(-mu * mu / (2.0 * sigma * sigma))
               + _SQRT_PI_2 * mu * erfc_tanh(mu / (_SQRT_2 * sigma)))
    gamma = -2.0 * m * bracket / (_SQRT_2PI * s * s)
    return np.sum(iota - kappa - gamma, axis=0)


def kl_double_peak_exact_grad(mu, sigma, m, s):
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    a = 2.0 * m / (_SQRT_2PI * s * s)
    e = np.exp(-mu * mu / (2.0 * sigma * sigma))
    t = np.tanh(TANH_ERFC_SLOPE * mu / (_SQRT_2 * sigma))
    sech2 = 1.0 - t * t
    k = _SQRT_PI_2 * TANH_ERFC_SLOPE / _SQRT_2
    d_mu = (mu - m) / (s * s) + a * (mu * e / sigma + _SQRT_PI_2 * (1.0 - t)
                                     - k * mu * sech2 / sigma)
    d_sigma = (-1.0 / sigma + sigma / (s * s)
               + a * (-e - mu * mu * e / (sigma * sigma) + k * mu * mu * sech2 / (sigma * sigma)))
    return d_mu, 0.5 * sigma * d_sigma
