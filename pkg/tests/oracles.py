"""Independent reference computations used by the tests (scipy quadrature, series)."""

import math

import numpy as np
from scipy import integrate, optimize


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _norm_logpdf(x, mu, sigma):
    z = (x - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - _LOG_SQRT_2PI


def kl_quad(mu, sigma, log_p, width=12.0):
    """KL(N(mu, sigma^2) || p) by adaptive quadrature, ``log_p`` a scalar log-density."""

    def f(x):
        lq = _norm_logpdf(x, mu, sigma)
        return math.exp(lq) * (lq - log_p(x))

    val, _ = integrate.quad(f, mu - width * sigma, mu + width * sigma,
                            epsabs=1e-13, epsrel=1e-12, limit=400)
    return val


def log_standard_normal(x):
    return _norm_logpdf(x, 0.0, 1.0)


def log_double_peak(m, s, weight=0.5):
    lw, lv = math.log(weight), math.log(1.0 - weight)

    def lp(x):
        a = lw + _norm_logpdf(x, -m, s)
        b = lv + _norm_logpdf(x, m, s)
        hi = max(a, b)
        return hi + math.log1p(math.exp(min(a, b) - hi))
    return lp


def erfc_series(x):
    """Erfc from the Maclaurin series of erf, summed exactly with fsum (fine for 0 <= x <= 3)."""
    terms = [(-1) ** n * x ** (2 * n + 1) / (math.factorial(n) * (2 * n + 1)) for n in range(120)]
    return 1.0 - 2.0 / math.sqrt(math.pi) * math.fsum(terms)


def max_abs_error(f, g, lo, hi, points=30001):
    """Max of |f - g| over [lo, hi]: dense grid, then bounded refinement around the best point."""
    xs = np.linspace(lo, hi, points)
    err = [abs(f(x) - g(x)) for x in xs]
    i = int(np.argmax(err))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, points - 1)]
    res = optimize.minimize_scalar(lambda x: -abs(f(x) - g(x)), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12})
    return max(err[i], -res.fun)
