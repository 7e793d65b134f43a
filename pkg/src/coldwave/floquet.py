"""Floquet analysis of the Hill equation ``z'' + K(tau) z = 0``.

The monodromy over one period is built from the two fundamental solutions;
its half-trace is ``cosh(mu pi)`` in the Mathieu normalization.  Also provided:
the Mathieu parameters of the truncated small-amplitude expansion of ``K``,
the closed-form asymptotic half-trace, and the numeric counterparts on the
untruncated ``K``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ode
from .reductions import hill_coefficients, small_amplitude_orbit

MARGIN = 1e-12


class Classification(str, enum.Enum):
    STABLE = "stable-oscillatory"
    UNSTABLE = "unstable-growing"
    MARGINAL = "marginal"


def classify(cosh_mu_pi: float, margin: float = MARGIN) -> Classification:
    dev = abs(cosh_mu_pi) - 1.0
    if dev > margin:
        return Classification.UNSTABLE
    if dev < -margin:
        return Classification.STABLE
    return Classification.MARGINAL


def _x(B0: float) -> float:
    return 8.0 * B0 * B0 * (1.0 + B0 * B0) + 3.0


def hat_params(epsilon: float, B0: float) -> tuple[float, float]:
    """``(a_hat, b_hat)`` of ``K ~ a_hat - 2 b_hat cos(2 sqrt(1+B0**2) theta)``."""
    w2 = 1.0 + B0 * B0
    X = _x(B0)
    return w2 - X * epsilon**2 / (4.0 * w2), X * epsilon**2 / (8.0 * w2)


def mathieu_params(epsilon: float, B0: float) -> tuple[float, float]:
    """Mathieu ``(a, b)`` after rescaling time by ``sqrt(1 + B0**2)``."""
    ah, bh = hat_params(epsilon, B0)
    w2 = 1.0 + B0 * B0
    return ah / w2, bh / w2


def asymptotic_coefficient(B0: float) -> float:
    """Coefficient ``c`` in ``cosh(mu pi) = -1 - c eps**6``; tends to ``pi**2/4`` as ``|B0|`` grows."""
    return math.pi**2 / 2048.0 * _x(B0) ** 3 / (1.0 + B0 * B0) ** 6


ASYMPTOTIC_LIMIT = math.pi**2 / 4.0


def asymptotic_coshmupi(epsilon: float, B0: float) -> float:
    return -1.0 - asymptotic_coefficient(B0) * epsilon**6


def small_b_coshmupi(a: float, b: float, form: str = "corrected") -> float:
    """Small-``b`` expansion of the Mathieu half-trace, ``O(b**4)`` accurate.

    ``form="corrected"`` uses ``nu**2 = a + b**2/(2(1 - a))`` for the
    characteristic exponent, giving
    ``cos(sqrt(a) pi) - pi b**2 sin(sqrt(a) pi) / (4 (1 - a) sqrt(a))``.
    ``form="printed"`` omits the factor 4 in the denominator; it disagrees with
    numeric monodromies by a factor 4 in the ``b**2`` term.
    """
    sa = math.sqrt(a)
    k = {"corrected": 4.0, "printed": 1.0}.get(form)
    if k is None:
        raise ValueError(f"unknown form {form!r}")
    return math.cos(sa * math.pi) - math.pi * b * b * math.sin(sa * math.pi) / (k * (1.0 - a) * sa)


def truncated_leading_coshmupi(epsilon: float, B0: float) -> float:
    """Leading term of the truncated Mathieu half-trace, ``-1 + 3 pi**2 b**2 / 8``.

    The truncated parameters satisfy ``a = 1 - 2b``; inserting this into the
    corrected small-``b`` expansion leaves ``O(eps**4)`` above ``-1``, so the
    truncated equation is stable for small ``eps``.
    """
    _, b = mathieu_params(epsilon, B0)
    return -1.0 + 3.0 * math.pi**2 * b * b / 8.0


@dataclass(frozen=True)
class Monodromy:
    matrix: np.ndarray
    half_trace: float
    wronskian: float


def monodromy(K: Callable[[float], float], period: float, rel_tol: float = 1e-12) -> Monodromy:
    """Fundamental matrix of ``z'' + K z = 0`` after one period."""

    def rate(t, y):
        k = float(np.asarray(K(t)).ravel()[0])
        return np.array([y[1], -k * y[0], y[3], -k * y[2]])

    res = ode.solve(rate, 0.0, [1.0, 0.0, 0.0, 1.0], float(period), rtol=rel_tol, atol=1e-14, dense=False)
    z1, dz1, z2, dz2 = res.y[-1]
    m = np.array([[z1, z2], [dz1, dz2]])
    return Monodromy(m, 0.5 * (z1 + dz2), z1 * dz2 - z2 * dz1)


def monodromy_coshmupi(K: Callable[[float], float], period: float, rel_tol: float = 1e-12) -> float:
    """Half-trace of the monodromy (``z1(pi)`` for even Mathieu-type ``K``)."""
    return monodromy(K, period, rel_tol).half_trace


@dataclass(frozen=True)
class FloquetResult:
    cosh_mu_pi: float
    classification: Classification
    mathieu_a: float
    mathieu_b: float
    wronskian: float
    source: str


def mathieu_floquet(epsilon: float, B0: float) -> FloquetResult:
    """Numeric half-trace of the truncated Mathieu equation over ``tau in [0, pi]``."""
    a, b = mathieu_params(epsilon, B0)
    mono = monodromy(lambda t: a - 2.0 * b * math.cos(2.0 * t), math.pi)
    return FloquetResult(mono.half_trace, classify(mono.half_trace), a, b, mono.wronskian, "mathieu")


def hill_floquet(epsilon: float, B0: float) -> FloquetResult:
    """Numeric half-trace on the untruncated ``K`` of the small-amplitude orbit.

    ``K`` has half the orbit period; time is rescaled by ``sqrt(1 + B0**2)``
    so the result is comparable with :func:`mathieu_floquet`.
    """
    orbit = small_amplitude_orbit(epsilon, B0)
    H = hill_coefficients(orbit, B0, B0)
    w = math.sqrt(1.0 + B0 * B0)
    mono = monodromy(lambda tau: H.K(tau / w)[0] / (w * w), 0.5 * orbit.period * w)
    a, b = mathieu_params(epsilon, B0)
    return FloquetResult(mono.half_trace, classify(mono.half_trace), a, b, mono.wronskian, "hill")


def min_k(epsilon: float, B0: float, n: int = 512) -> float:
    """Minimum of the untruncated ``K(theta)`` over one orbit period."""
    orbit = small_amplitude_orbit(epsilon, B0)
    H = hill_coefficients(orbit, B0, B0)
    return float(np.min(H.K(np.linspace(0.0, orbit.period, n, endpoint=False))))
