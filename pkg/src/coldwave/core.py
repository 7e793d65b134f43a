"""Domain types, algebraic maps and initial-data families.

All quantities are dimensionless: momenta in units of ``m c``, the electric
field in units of ``m c omega_p / |e|``, time in ``1/omega_p`` and length in
``c/omega_p``.  ``B0`` is the external field scaled like the electric field.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .expr import Expr, as_expr

#: Below this distance of ``e`` from 1 the C1 invariant is treated as undefined.
C1_SINGULAR_TOL = 1e-14
#: Grid used to validate family invariants of initial data.
VALIDATION_POINTS = 1024
INVARIANT_TOL = 1e-12


class ValidationError(ValueError):
    """A configuration or data object violates one of its invariants."""


class InitialDataError(ValidationError):
    """Initial data cannot be built (non-real or non-smooth profile)."""


# --- state types ------------------------------------------------------------


@dataclass(frozen=True)
class FieldState:
    """Lagrangian unknowns along one characteristic at time ``theta``."""

    theta: float
    rho: float
    P1: float
    P2: float
    E1: float

    def __post_init__(self):
        for name in ("theta", "rho", "P1", "P2", "E1"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"FieldState.{name} is not finite")

    @property
    def gamma(self) -> float:
        return lorentz_gamma(self.P1, self.P2)


@dataclass(frozen=True)
class DerivativeState:
    """Spatial derivatives ``(dP1/drho, dP2/drho, dE1/drho)`` on a characteristic."""

    p1: float
    p2: float
    e: float

    @property
    def density(self) -> float:
        return density(self.e)


@dataclass(frozen=True)
class FirstIntegrals:
    K1: float
    K2: float
    C1: float | None = None


# --- algebraic maps -----------------------------------------------------------


def lorentz_gamma(P1, P2):
    """Lorentz factor ``sqrt(1 + P1**2 + P2**2)``; works on arrays too."""
    if isinstance(P1, np.ndarray) or isinstance(P2, np.ndarray):
        return np.sqrt(1.0 + np.square(P1) + np.square(P2))
    return math.sqrt(1.0 + P1 * P1 + P2 * P2)


def velocities(P1, P2):
    g = lorentz_gamma(P1, P2)
    return P1 / g, P2 / g


def first_integrals(state: FieldState, B0: float) -> FirstIntegrals:
    """``K1 = P2 - B0*E1`` and ``K2 = 2*gamma + E1**2`` of the characteristic system."""
    return FirstIntegrals(
        K1=state.P2 - B0 * state.E1,
        K2=2.0 * state.gamma + state.E1**2,
    )


def integrals_of(P1, P2, E1, B0):
    """Array form of :func:`first_integrals`; returns ``(K1, K2)``."""
    return P2 - B0 * E1, 2.0 * lorentz_gamma(P1, P2) + np.square(E1)


def c1_of(deriv: DerivativeState, B0: float) -> float | None:
    """Invariant ``(p2 - B0)/(e - 1)`` of the derivative system.

    Returns ``None`` when ``e`` is within ``1e-14`` of 1, where the quotient is
    undefined.
    """
    den = deriv.e - 1.0
    if abs(den) < C1_SINGULAR_TOL:
        return None
    return (deriv.p2 - B0) / den


def density(e):
    """Electron density ``N = 1 - e`` from the field gradient."""
    return 1.0 - e


# --- initial data -------------------------------------------------------------


class Family(str, enum.Enum):
    GENERAL = "general"
    CONSTANT_K1 = "constant-k1"
    CONSTANT_K2 = "constant-k2"


@dataclass(frozen=True)
class InitialData:
    """Closed-form initial profiles ``P1, P2, E1`` on a domain of length ``L``.

    For nonrelativistic runs the ``P1``/``P2`` slots carry the velocities
    ``V1``/``V2``.
    """

    P1: Expr
    P2: Expr
    E1: Expr
    B0: float
    domain_length: float = 2.0 * math.pi
    family: Family = Family.GENERAL
    label: str = "general"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.domain_length > 0 and math.isfinite(self.domain_length)):
            raise ValidationError("domain_length must be positive and finite")

    def grid(self, n: int = VALIDATION_POINTS) -> np.ndarray:
        return np.arange(n) * (self.domain_length / n)

    def profiles(self, rho):
        """Values and two derivatives: three ``(f, f', f'')`` tuples for P1, P2, E1."""
        return self.P1.values(rho), self.P2.values(rho), self.E1.values(rho)

    def sample(self, rho0: float) -> tuple[FieldState, DerivativeState]:
        (P1, p1, _), (P2, p2, _), (E1, e, _) = self.profiles(float(rho0))
        return (
            FieldState(0.0, float(rho0), float(P1), float(P2), float(E1)),
            DerivativeState(float(p1), float(p2), float(e)),
        )

    def initial_vector(self, rho0: float) -> np.ndarray:
        """``[P1, P2, E1, rho, p1, p2, e]`` at ``theta = 0``."""
        s, d = self.sample(rho0)
        return np.array([s.P1, s.P2, s.E1, s.rho, d.p1, d.p2, d.e])

    def integrals_on_grid(self, n: int = VALIDATION_POINTS):
        rho = self.grid(n)
        (P1, _, _), (P2, _, _), (E1, _, _) = self.profiles(rho)
        return integrals_of(P1, P2, E1, self.B0)

    def shifted(self, c1: float = 0.0, c2: float = 0.0, c3: float = 0.0) -> "InitialData":
        """Same data with constants added to the three profiles."""
        return InitialData(
            self.P1 + c1, self.P2 + c2, self.E1 + c3, self.B0,
            self.domain_length, Family.GENERAL, self.label + "+const", dict(self.params),
        )

    def describe(self) -> dict:
        return {
            "family": self.family.value,
            "label": self.label,
            "B0": self.B0,
            "domain_length": self.domain_length,
            "P1": str(self.P1),
            "P2": str(self.P2),
            "E1": str(self.E1),
        }


def _check_constant(values: np.ndarray, what: str) -> float:
    spread = float(np.max(values) - np.min(values))
    if spread > INVARIANT_TOL:
        raise InitialDataError(f"{what} varies by {spread:.3e} over one period")
    return float(values[0])


def make_initial_data(
    family: Family | str,
    *,
    B0: float,
    domain_length: float = 2.0 * math.pi,
    P1=None,
    P2=None,
    E1=None,
    K1: float | None = None,
    K2: float | None = None,
    sign: int = 1,
    label: str | None = None,
) -> InitialData:
    """Build initial data of one of the three families.

    ``general`` takes all three profiles.  ``constant-k1`` takes ``P1``, ``E1``
    and the constant ``K1`` and sets ``P2 = B0*E1 + K1``.  ``constant-k2`` takes
    ``P2``, ``E1`` and ``K2`` and solves ``2*gamma + E1**2 = K2`` for ``P1``
    with the global sign ``sign``.  Profiles may be expressions or strings such
    as ``"0.1*sin(rho)"``.
    """
    family = Family(family)
    if not math.isfinite(B0):
        raise ValidationError("B0 must be finite")
    params = {"sign": sign} if family is Family.CONSTANT_K2 else {}

    if family is Family.GENERAL:
        if P1 is None or P2 is None or E1 is None:
            raise InitialDataError("general family needs P1, P2 and E1")
        data = InitialData(as_expr(P1), as_expr(P2), as_expr(E1), B0, domain_length, family,
                           label or "general", params)
        return data

    if family is Family.CONSTANT_K1:
        if P1 is None or E1 is None or K1 is None:
            raise InitialDataError("constant-k1 family needs P1, E1 and K1")
        e1 = as_expr(E1)
        data = InitialData(as_expr(P1), ex.Const(B0) * e1 + ex.Const(K1), e1, B0, domain_length,
                           family, label or "constant-k1", {"K1": K1})
        k1, _ = data.integrals_on_grid()
        _check_constant(k1, "K1")
        return data

    if P2 is None or E1 is None or K2 is None:
        raise InitialDataError("constant-k2 family needs P2, E1 and K2")
    if sign not in (1, -1):
        raise InitialDataError("sign must be +1 or -1")
    if K2 < 2.0:
        raise InitialDataError(f"K2 = {K2} < 2 is not attainable (gamma >= 1)")
    p2, e1 = as_expr(P2), as_expr(E1)
    half = (ex.Const(K2) - e1 * e1) * 0.5
    radicand = half * half - 1.0 - p2 * p2

    rho = np.arange(VALIDATION_POINTS) * (domain_length / VALIDATION_POINTS)
    rad = radicand.values(rho)[0]
    scale = max(1.0, float(np.max(np.abs(rad))))
    if float(np.max(np.abs(rad))) <= INVARIANT_TOL:
        p1 = ex.Const(0.0)
    elif float(np.min(rad)) <= INVARIANT_TOL * scale:
        raise InitialDataError(
            f"constant-k2 radicand reaches {float(np.min(rad)):.3e} <= 0 "
            f"(at rho = {float(rho[np.argmin(rad)]):.6g}); P1 would not be real and C2"
        )
    else:
        p1 = ex.Const(float(sign)) * ex.sqrt(radicand)
    data = InitialData(p1, p2, e1, B0, domain_length, family, label or "constant-k2",
                       {"K2": K2, "sign": sign})
    _, k2 = data.integrals_on_grid()
    _check_constant(k2, "K2")
    return data


def small_perturbation_data(
    epsilon: float,
    B0: float,
    k: float = 1.0,
    transverse_scale: float = 1.0,
) -> InitialData:
    """Small deviation from rest shaped like the leading-order periodic orbit.

    ``P1 = eps*cos(k rho)``, ``P2 = s*eps*B0/w*sin(k rho)``,
    ``E1 = s*eps/w*sin(k rho)`` with ``w = sqrt(1 + B0**2)``.  ``K1`` vanishes
    identically for every ``s``; ``K2`` is constant up to ``O(eps**4)`` when
    ``s = 1`` and varies at ``O(eps**2)`` otherwise.
    """
    if not epsilon >= 0:
        raise ValidationError("epsilon must be >= 0")
    if not k > 0:
        raise ValidationError("wavenumber k must be positive")
    w = math.sqrt(1.0 + B0 * B0)
    a = transverse_scale * epsilon / w
    p1 = ex.wave(epsilon, k, kind="cos")
    e1 = ex.wave(a, k)
    p2 = ex.wave(a * B0, k)
    params = {"epsilon": epsilon, "k": k, "transverse_scale": transverse_scale}
    return InitialData(p1, p2, e1, B0, 2.0 * math.pi / k, Family.CONSTANT_K1,
                       "small-perturbation", params)


# --- smoothness criteria ------------------------------------------------------


def criterion_nonrel(data: InitialData, rho):
    """Smoothness indicator of the nonrelativistic model at ``rho``.

    ``Delta = (V1')**2 + 2 E1' + 2 B0 V2' - B0**2 - 1``, with the ``P`` slots
    of ``data`` read as velocities.  The nonrelativistic solution stays smooth
    iff ``Delta < 0`` at every point.  Accepts scalars or arrays.
    """
    (_, v1p, _), (_, v2p, _), (_, e1p, _) = data.profiles(rho)
    B0 = data.B0
    out = v1p**2 + 2.0 * e1p + 2.0 * B0 * v2p - B0**2 - 1.0
    return float(out) if np.ndim(out) == 0 else out


def criterion_rel_smallamp(deriv: DerivativeState, B0: float) -> bool:
    """True iff ``2e + 2 B0 p2 - 2 B0**2 - 1 < 0`` (small-amplitude constant-K2 test)."""
    return 2.0 * deriv.e + 2.0 * B0 * deriv.p2 - 2.0 * B0**2 - 1.0 < 0.0


# --- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    B0: float
    horizon: float
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    blowup_threshold: float = 1e6
    n_characteristics: int = 1
    epsilon: float | None = None
    max_steps: int = 50_000_000
    stride: int = 1

    def __post_init__(self):
        if not math.isfinite(self.B0):
            raise ValidationError("B0 must be finite")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValidationError("horizon must be > 0")
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")
        if not self.blowup_threshold > 1.0:
            raise ValidationError("blowup_threshold must exceed 1")
        if int(self.n_characteristics) != self.n_characteristics or self.n_characteristics < 1:
            raise ValidationError("n_characteristics must be a positive integer")
        if self.epsilon is not None and not self.epsilon >= 0:
            raise ValidationError("epsilon must be >= 0")
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")
