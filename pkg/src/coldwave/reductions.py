"""Exact reductions of the characteristic system.

With ``K1`` and ``K2`` fixed, ``P2`` obeys a scalar equation whose radicand

    R(eta) = (B0**2 K2 - (eta - K1)**2)**2 - 4 B0**4 (eta**2 + 1)

vanishes at the turning points of the oscillation.  The same quantities give
the period, the traveling-wave profiles, and the time-dependent coefficients
of the linearized derivative dynamics (``u``-``lambda``-``sigma`` variables,
the ``eta``-linear system and the Hill normal form).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ode
from .core import FieldState, SimConfig, ValidationError, lorentz_gamma
from .characteristics import integrate as integrate_characteristic
from .expr import Jet, jsqrt


class DomainError(ValueError):
    """The ``(K1, K2, P2)`` triple is not on a real orbit (negative radicand)."""


class ZeroDenominator(DomainError):
    """``B0**2 K2 - (P2 - K1)**2`` vanished (infinite Lorentz factor)."""


class NoBracketingRoots(DomainError):
    """No admissible pair of turning points encloses the seed value."""


class PoleCrossing(RuntimeError):
    """A linear-equation coefficient has a non-removable pole where ``P1`` vanishes."""

    def __init__(self, theta: float, residue: float):
        super().__init__(
            f"coefficient pole at theta = {theta:.12g} has residue {residue:.6g} != 1; "
            "the linear equation cannot be continued through it"
        )
        self.theta = theta
        self.residue = residue


#: Gauss-Legendre nodes per panel in the period quadrature.
GL_NODES = 20
PERIOD_TOL = 1e-10
ROOT_IMAG_TOL = 1e-7
DOUBLE_ROOT_TOL = 1e-6


# --- quartic radicand and turning points --------------------------------------------


def quartic_coefficients(K1: float, K2: float, B0: float) -> np.ndarray:
    """Coefficients of ``R(eta)``, highest degree first."""
    c0 = B0 * B0 * K2 - K1 * K1
    b4 = B0**4
    return np.array([
        1.0,
        -4.0 * K1,
        4.0 * K1 * K1 - 2.0 * c0 - 4.0 * b4,
        4.0 * K1 * c0,
        c0 * c0 - 4.0 * b4,
    ])


def radicand(eta, K1: float, K2: float, B0: float):
    d = denominator(eta, K1, K2, B0)
    return d * d - 4.0 * B0**4 * (np.square(eta) + 1.0)


def denominator(eta, K1: float, K2: float, B0: float):
    """``B0**2 K2 - (eta - K1)**2``, equal to ``2 B0**2 gamma`` on the orbit."""
    if np.ndim(eta):
        return B0 * B0 * K2 - np.square(np.asarray(eta) - K1)
    return B0 * B0 * K2 - (eta - K1) ** 2


def companion_roots(coeffs: np.ndarray) -> np.ndarray:
    """Eigenvalues of the companion matrix of a monic polynomial."""
    c = np.asarray(coeffs, dtype=float) / coeffs[0]
    n = len(c) - 1
    comp = np.zeros((n, n))
    comp[0, :] = -c[1:]
    comp[1:, :-1] = np.eye(n - 1)
    return np.linalg.eigvals(comp)


def _polish(root: float, coeffs: np.ndarray, steps: int = 2) -> float:
    d = np.polyder(coeffs)
    for _ in range(steps):
        f, fp = np.polyval(coeffs, root), np.polyval(d, root)
        if fp == 0.0 or not math.isfinite(f / fp):
            break
        step = f / fp
        if abs(step) > 1e-3 * max(1.0, abs(root)):
            break
        root -= step
    return float(root)


@dataclass(frozen=True)
class TurningPoints:
    p2_minus: float
    p2_plus: float
    all_roots: tuple

    @property
    def degenerate(self) -> bool:
        return self.p2_plus - self.p2_minus <= DOUBLE_ROOT_TOL

    @property
    def center(self) -> float:
        return 0.5 * (self.p2_minus + self.p2_plus)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.p2_plus - self.p2_minus)


def turning_points(K1: float, K2: float, B0: float, p2_seed: float) -> TurningPoints:
    """Real roots of ``R`` and the admissible pair enclosing ``p2_seed``.

    An interval is admissible when ``R >= 0`` and the Lorentz denominator is
    positive inside it.  A double root at the seed (rest state) is returned as
    ``p2_minus == p2_plus``.
    """
    if B0 == 0.0:
        raise ValidationError("the P2 reduction needs B0 != 0")
    if K2 < 2.0 - 1e-14:
        raise ValidationError(f"K2 = {K2} < 2 is not attainable")
    coeffs = quartic_coefficients(K1, K2, B0)
    z = companion_roots(coeffs)
    real = sorted(
        _polish(float(r.real), coeffs)
        for r in z
        if abs(r.imag) <= ROOT_IMAG_TOL * max(1.0, abs(r))
    )
    # a complex pair with tiny imaginary part is a double real root
    for r in z:
        if ROOT_IMAG_TOL * max(1.0, abs(r)) < abs(r.imag) <= math.sqrt(ROOT_IMAG_TOL) and r.imag > 0:
            real.extend([float(r.real), float(r.real)])
    real.sort()
    roots = tuple(real)

    for a, b in zip(real, real[1:]):
        if b - a <= DOUBLE_ROOT_TOL and abs(p2_seed - 0.5 * (a + b)) <= DOUBLE_ROOT_TOL:
            mid = 0.5 * (a + b)
            if denominator(mid, K1, K2, B0) > 0.0:
                return TurningPoints(mid, mid, roots)
    tol = 1e-9 * max(1.0, abs(p2_seed))
    for a, b in zip(real, real[1:]):
        if b - a <= DOUBLE_ROOT_TOL:
            continue
        if not (a - tol <= p2_seed <= b + tol):
            continue
        mid = 0.5 * (a + b)
        if radicand(mid, K1, K2, B0) >= 0.0 and denominator(mid, K1, K2, B0) > 0.0:
            return TurningPoints(a, b, roots)
    raise NoBracketingRoots(
        f"P2 = {p2_seed} is not inside an admissible band for K1 = {K1}, K2 = {K2}, B0 = {B0} "
        f"(real roots {list(np.round(roots, 12))})"
    )


def p2_scalar_rhs(P2: float, K1: float, K2: float, B0: float, branch_sign: int = 1) -> float:
    """``dP2/dtheta = branch_sign * B0 * sqrt(R) / (B0**2 K2 - (P2 - K1)**2)``."""
    if B0 == 0.0:
        raise ValidationError("the P2 reduction needs B0 != 0")
    d = denominator(P2, K1, K2, B0)
    if d == 0.0:
        raise ZeroDenominator(f"B0**2 K2 - (P2 - K1)**2 vanishes at P2 = {P2}")
    r = radicand(P2, K1, K2, B0)
    if r < 0.0:
        if r > -1e-12 * max(1.0, d * d):
            r = 0.0
        else:
            raise DomainError(f"radicand {r:.3e} < 0 at P2 = {P2}")
    return branch_sign * B0 * math.sqrt(r) / d


def _reduced_quadratic(tp: TurningPoints, K1: float, K2: float, B0: float) -> np.ndarray:
    """``Qd`` with ``R = (eta - p2_minus)(eta - p2_plus) Qd``."""
    coeffs = quartic_coefficients(K1, K2, B0)
    q, _ = np.polydiv(coeffs, np.poly([tp.p2_minus, tp.p2_plus]))
    return q


def period(K1: float, K2: float, B0: float, p2_seed: float) -> float:
    """Oscillation period of the characteristic with integrals ``K1``, ``K2``.

    ``T = (2/B0) * integral of D/sqrt(R)`` between the turning points, written
    with ``eta = c + r sin(phi)`` so the endpoint singularity cancels
    exactly.  Composite Gauss-Legendre panels are doubled until two estimates
    agree to ``1e-10``.  At a double root the small-oscillation limit is
    returned.
    """
    tp = turning_points(K1, K2, B0, p2_seed)
    qd = _reduced_quadratic(tp, K1, K2, B0)
    b = abs(B0)
    if tp.degenerate:
        c = tp.center
        return 2.0 * math.pi * denominator(c, K1, K2, B0) / (b * math.sqrt(-np.polyval(qd, c)))
    c, r = tp.center, tp.half_width
    x, wts = np.polynomial.legendre.leggauss(GL_NODES)

    def integrand(phi):
        eta = c + r * np.sin(phi)
        return denominator(eta, K1, K2, B0) / np.sqrt(-np.polyval(qd, eta))

    def composite(panels):
        edges = np.linspace(-0.5 * math.pi, 0.5 * math.pi, panels + 1)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            total += half * float(np.dot(wts, integrand(lo + half + half * x)))
        return total

    panels = 1
    prev = composite(panels)
    while panels < 4096:
        panels *= 2
        cur = composite(panels)
        if abs(cur - prev) < PERIOD_TOL:
            prev = cur
            break
        prev = cur
    return 2.0 * prev / b


def return_map_period(state: FieldState, B0: float, n_periods: int = 3, rel_tol: float = 1e-12) -> float:
    """Period measured from the full characteristic integration.

    Times at which ``P2`` crosses the centre of its band upwards are located on
    the dense output; the mean spacing is returned.
    """
    K1 = state.P2 - B0 * state.E1
    K2 = 2.0 * state.gamma + state.E1**2
    tp = turning_points(K1, K2, B0, state.P2)
    T_guess = period(K1, K2, B0, state.P2)
    cfg = SimConfig(B0=B0, horizon=(n_periods + 1.5) * T_guess, rel_tol=rel_tol, abs_tol=1e-14)
    y0 = [state.P1, state.P2, state.E1, state.rho, 0.0, 0.0, 0.0]
    tr = integrate_characteristic("relativistic", y0, cfg)
    t = tr.crossings("P2", tp.center, direction=+1)
    if len(t) < 2:
        raise DomainError("orbit did not complete a full oscillation")
    return float((t[-1] - t[0]) / (len(t) - 1))


def integrate_p2(
    K1: float,
    K2: float,
    B0: float,
    p2_0: float,
    branch_sign: int,
    theta,
    rel_tol: float = 1e-12,
):
    """Solve the scalar ``P2`` equation through its turning points.

    Returns ``(P2, branch)`` sampled at ``theta`` (increasing, starting at 0 or
    later).  The phase ``phi`` with ``P2 = c + r sin(phi)`` obeys the regular
    equation ``dphi/dtheta = B0 sqrt(-Qd)/D``; the branch of the square root is
    ``sign(cos(phi))`` and flips exactly at the turning points.
    """
    theta = np.asarray(theta, dtype=float)
    tp = turning_points(K1, K2, B0, p2_0)
    if tp.degenerate:
        return np.full(theta.shape, tp.center), np.zeros(theta.shape, dtype=int)
    qd = _reduced_quadratic(tp, K1, K2, B0)
    c, r = tp.center, tp.half_width
    s0 = float(np.clip((p2_0 - c) / r, -1.0, 1.0))
    phi0 = math.asin(s0) if branch_sign * B0 > 0 else math.pi - math.asin(s0)
    b = abs(B0)

    def rate(t, y):
        eta = c + r * math.sin(y[0])
        return np.array([b * math.sqrt(-np.polyval(qd, eta)) / denominator(eta, K1, K2, B0)])

    res = ode.solve(rate, 0.0, [phi0], float(theta[-1]), rtol=rel_tol, atol=1e-14, t_eval=theta, dense=False)
    phi = res.y_eval[:, 0]
    p2 = c + r * np.sin(phi)
    branch = np.sign(np.cos(phi)).astype(int) * int(np.sign(B0))
    return p2, branch


# --- traveling waves ---------------------------------------------------------------


def profile_rhs(P: float, K1: float, K2: float, B0: float, w: float, branch_sign: int) -> float:
    """``dP/dxi`` of a traveling wave ``P2 = P(rho - w theta)`` with fixed integrals.

    Equals ``B0 s sqrt(R) / (s sqrt(R) - w D)`` with ``s = branch_sign``; the
    denominator is ``2 B0**2 (P1 - w gamma)``.
    """
    d = denominator(P, K1, K2, B0)
    r = radicand(P, K1, K2, B0)
    if r < 0.0:
        raise DomainError(f"radicand {r:.3e} < 0 at P2 = {P}")
    sr = branch_sign * math.sqrt(r)
    return B0 * sr / (sr - w * d)


@dataclass
class TravelingWave:
    """Profile ``P2 = P(xi)``, ``xi = rho - w theta``, sampled at integration steps."""

    w: float
    K1: float
    K2: float
    B0: float
    xi: np.ndarray
    profile: np.ndarray
    P1: np.ndarray
    terminated_at: float | None
    wavelength: float | None
    branch_sign: int
    residual: float = field(default=math.nan)

    @property
    def E1(self) -> np.ndarray:
        return (self.profile - self.K1) / self.B0

    def sample(self, xi, rel_tol: float = 1e-12):
        """``(P1, P2, E1)`` at arbitrary ``xi`` (periodic waves only)."""
        if self.wavelength is None:
            raise DomainError("profile is not periodic (terminated)")
        xi = np.asarray(xi, dtype=float)
        lam = self.wavelength
        xm = np.mod(xi, lam)
        order = np.argsort(xm)
        P0 = float(self.profile[np.argmin(np.abs(self.xi))])
        P10 = float(self.P1[np.argmin(np.abs(self.xi))])
        B0, w, K1 = self.B0, self.w, self.K1

        def rate(t, y):
            P, p1 = y
            E1 = (P - K1) / B0
            g = math.sqrt(1.0 + p1 * p1 + P * P)
            den = p1 - w * g
            return np.array([B0 * p1 / den, -(E1 * g + B0 * P) / den])

        res = ode.solve(rate, 0.0, [P0, P10], float(lam), rtol=rel_tol, atol=1e-14, t_eval=xm[order], dense=False)
        out = np.empty((xi.size, 3))
        out[order, 0] = res.y_eval[:, 1]
        out[order, 1] = res.y_eval[:, 0]
        out[:, 2] = (out[:, 1] - K1) / B0
        return out[:, 0].reshape(xi.shape), out[:, 1].reshape(xi.shape), out[:, 2].reshape(xi.shape)


def traveling_wave(
    w: float,
    K1: float,
    K2: float,
    B0: float,
    xi_range: tuple[float, float],
    p2_at_0: float,
    branch_sign: int = 1,
    rel_tol: float = 1e-12,
) -> TravelingWave:
    """Integrate the traveling-wave profile over ``xi_range`` (which must contain 0).

    The profile equation is singular where ``P1 = w gamma``; it is integrated
    in the parameter ``s`` with ``dxi/ds = P1 - w gamma``, which is regular
    there, and stops with ``terminated_at`` set when that factor vanishes.
    """
    if B0 == 0.0:
        raise ValidationError("traveling waves in this reduction need B0 != 0")
    lo, hi = float(xi_range[0]), float(xi_range[1])
    if not lo <= 0.0 <= hi:
        raise ValidationError("xi_range must contain 0")
    d0 = denominator(p2_at_0, K1, K2, B0)
    r0 = radicand(p2_at_0, K1, K2, B0)
    if d0 <= 0.0 or r0 < -1e-12 * max(1.0, d0 * d0):
        raise DomainError(f"P2 = {p2_at_0} is not on a real orbit with K1 = {K1}, K2 = {K2}")
    P1_0 = branch_sign * math.sqrt(max(r0, 0.0)) / (2.0 * B0 * B0)

    def rate(s, y, direction):
        P, p1, _ = y
        E1 = (P - K1) / B0
        g = math.sqrt(1.0 + p1 * p1 + P * P)
        return direction * np.array([B0 * p1, -(E1 * g + B0 * P), p1 - w * g])

    def den(y):
        return y[1] - w * math.sqrt(1.0 + y[1] ** 2 + y[0] ** 2)

    g0 = den([p2_at_0, P1_0])
    pieces = []
    terminated = None
    for target in (hi, lo):
        if target == 0.0:
            continue
        if g0 == 0.0:
            terminated = 0.0
            break
        direction = math.copysign(1.0, g0) * math.copysign(1.0, target)
        events = [
            ode.Event(lambda s, y, _t=target: y[2] - _t, terminal=True),
            ode.Event(lambda s, y: den(y), terminal=True),
        ]
        # s needed to cover |target| in xi is at most |target| / min|dxi/ds|; bound generously
        s_end = 1e3 * (abs(target) + 1.0) / max(abs(g0), 1e-6)
        res = ode.solve(lambda s, y: rate(s, y, direction), 0.0, [p2_at_0, P1_0, 0.0], s_end,
                        rtol=rel_tol, atol=1e-14, events=events, dense=False)
        if len(res.t_events[1]):
            xi_t = float(res.y_events[1][0][2])
            if terminated is None or abs(xi_t) < abs(terminated):
                terminated = xi_t
        pieces.append(res.y if target > 0 else res.y[::-1])
    if not pieces:
        pieces = [np.array([[p2_at_0, P1_0, 0.0]])]
    if len(pieces) == 2:
        ys = np.vstack([pieces[1][:-1], pieces[0]])
    else:
        ys = pieces[0]
    order = np.argsort(ys[:, 2], kind="stable")
    ys = ys[order]
    _, keep = np.unique(ys[:, 2], return_index=True)
    ys = ys[keep]

    wavelength = None
    if terminated is None:
        wavelength = abs(w) * period(K1, K2, B0, p2_at_0)
    tw = TravelingWave(
        w=w, K1=K1, K2=K2, B0=B0, xi=ys[:, 2], profile=ys[:, 0], P1=ys[:, 1],
        terminated_at=terminated, wavelength=wavelength, branch_sign=branch_sign,
    )
    tw.residual = profile_residual(tw)
    return tw


def profile_residual(tw: TravelingWave, margin: float = 1e-6) -> float:
    """Max mismatch between the integrated slope and the scalar profile equation.

    Evaluated at stored samples where ``|P1 - w gamma| > margin``.
    """
    P, p1 = tw.profile, tw.P1
    g = np.sqrt(1.0 + p1**2 + P**2)
    den = p1 - tw.w * g
    ok = np.abs(den) > margin
    if not np.any(ok):
        return math.nan
    slope = tw.B0 * p1[ok] / den[ok]
    sign = np.where(p1[ok] >= 0.0, 1, -1)
    ref = np.array([profile_rhs(float(x), tw.K1, tw.K2, tw.B0, tw.w, int(s)) for x, s in zip(P[ok], sign)])
    return float(np.max(np.abs(slope - ref) / np.maximum(1.0, np.abs(ref))))


# --- constant-K2 linear equation ---------------------------------------------------


def constant_k2_coefficients(state: FieldState, K2: float, C1: float, B0: float, e1_sign: int,
                             variant: str = "printed") -> tuple[float, float]:
    """Coefficients ``(L1, L2)`` of ``dy/dtheta = L1 + L2 y`` with ``y = 1/(p2 - B0)``.

    ``E1`` enters as ``e1_sign * sqrt(K2 - 2 gamma)``.  ``variant="printed"``
    uses ``E1 gamma + P2`` in the first term of ``L2``; ``variant="derived"``
    uses ``E1 gamma + B0 P2``, which is what eliminating ``e`` and ``p1``
    from the derivative system gives.  The two agree at ``B0 = 1``.
    """
    if C1 == 0.0:
        raise ValidationError("C1 = 0 has no linear form; use the full derivative system")
    P1, P2 = state.P1, state.P2
    g = lorentz_gamma(P1, P2)
    E1 = e1_sign * math.sqrt(max(K2 - 2.0 * g, 0.0))
    g3 = g**3
    L1 = -(1.0 + P2 * P2) * (E1 * g + C1 * P2) / (C1 * g3 * P1) - P1 * P2 / g3
    if variant == "printed":
        inner = E1 * g + P2
    elif variant == "derived":
        inner = E1 * g + B0 * P2
    else:
        raise ValueError(f"unknown variant {variant!r}")
    L2 = -(1.0 + P2 * P2) * inner / (g3 * P1) - B0 * P1 * P2 / g3
    return L1, L2


def constant_k2_linear_rhs(y: float, state: FieldState, C1: float, B0: float, e1_sign: int,
                           K2: float | None = None, variant: str = "printed") -> float:
    """``L1 + L2 * y`` at ``state`` (``K2`` defaults to the value of ``state``)."""
    if K2 is None:
        K2 = 2.0 * state.gamma + state.E1**2
    L1, L2 = constant_k2_coefficients(state, K2, C1, B0, e1_sign, variant)
    return L1 + L2 * y


def _l2_residue(P1: float, P2: float, E1: float, B0: float, variant: str) -> float:
    """``lim (theta - theta0) L2`` at a zero of ``P1``; 1 means the pole is removable."""
    g = lorentz_gamma(P1, P2)
    inner = E1 * g + (P2 if variant == "printed" else B0 * P2)
    dP1 = -(E1 * g + B0 * P2) / g
    return -(1.0 + P2 * P2) * inner / (g**3 * dP1)


@dataclass
class LinearSolution:
    """Solution of the constant-K2 linear equation along one characteristic."""

    theta: np.ndarray
    y: np.ndarray
    poles: list
    residues: list
    breaking_time: float | None
    variant: str

    @property
    def s(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.y

    def p2(self, B0: float) -> np.ndarray:
        return B0 + self.s


def solve_constant_k2(
    initial_point,
    B0: float,
    horizon: float,
    *,
    variant: str = "printed",
    t_eval=None,
    pole_gap: float = 1e-5,
    rel_tol: float = 1e-11,
) -> LinearSolution:
    """Integrate ``y = 1/(p2 - B0)`` with the linear constant-K2 equation.

    ``initial_point`` is ``[P1, P2, E1, rho, p1, p2, e]``.  The orbit comes
    from the characteristic system; at each zero ``theta0`` of ``P1`` the
    equation is bridged over ``[theta0 - gap, theta0 + gap]`` by linear
    extrapolation when the pole is removable, otherwise :class:`PoleCrossing`
    is raised.  A zero of ``y`` is reported as ``breaking_time``.
    """
    y0v = np.asarray(initial_point, dtype=float)
    P1, P2, E1 = y0v[0], y0v[1], y0v[2]
    p2, e = y0v[5], y0v[6]
    s0 = p2 - B0
    if abs(e - 1.0) < 1e-14:
        raise ValidationError("C1 is undefined at e = 1")
    C1 = s0 / (e - 1.0)
    K2 = 2.0 * lorentz_gamma(P1, P2) + E1 * E1
    t_eval = None if t_eval is None else np.asarray(t_eval, dtype=float)
    if s0 == 0.0:
        # s = 0 is a fixed point: p2 stays equal to B0
        th = t_eval if t_eval is not None else np.array([0.0, horizon])
        return LinearSolution(th, np.full(th.shape, np.inf), [], [], None, variant)

    cfg = SimConfig(B0=B0, horizon=horizon + 2.0 * pole_gap, rel_tol=1e-12, abs_tol=1e-14)
    orbit = integrate_characteristic("relativistic", [P1, P2, E1, 0.0, 0.0, 0.0, 0.0], cfg)
    poles = [float(t) for t in orbit.crossings("P1", 0.0) if 0.0 < t < horizon]
    if abs(P1) == 0.0:
        raise PoleCrossing(0.0, math.nan)

    def rate(t, z):
        st = FieldState(t, 0.0, z[0], z[1], z[2])
        g = st.gamma
        sgn = 1 if z[2] >= 0.0 else -1
        L1, L2 = constant_k2_coefficients(st, K2, C1, B0, sgn, variant)
        return np.array([-z[2] - B0 * z[1] / g, B0 * z[0] / g, z[0] / g, L1 + L2 * z[3]])

    ts_all, ys_all, residues = [], [], []
    t_start, z = 0.0, np.array([P1, P2, E1, 1.0 / s0])
    y_eval = None if t_eval is None else np.full(t_eval.shape, np.nan)
    breaking = None
    segments = [(p - pole_gap, p) for p in poles] + [(horizon, None)]
    for t_stop, pole in segments:
        ev = ode.Event(lambda t, zz: zz[3], terminal=True)
        res = ode.solve(rate, t_start, z, t_stop, rtol=rel_tol, atol=1e-13, events=[ev], dense=True)
        ts_all.append(res.t)
        ys_all.append(res.y[:, 3])
        if y_eval is not None:
            m = (t_eval >= t_start) & (t_eval <= res.t[-1])
            if np.any(m):
                y_eval[m] = res.solution(t_eval[m])[:, 3] if m.sum() > 1 else res.solution(t_eval[m][0])[3]
        if len(res.t_events[0]):
            breaking = float(res.t_events[0][0])
            break
        if pole is None:
            break
        zp = res.y[-1]
        r = _l2_residue(*orbit(pole)[:3], B0, variant)
        residues.append(r)
        if abs(r - 1.0) > 1e-3:
            exc = PoleCrossing(pole, r)
            exc.partial = LinearSolution(np.concatenate(ts_all), np.concatenate(ys_all), poles, residues,
                                         None, variant)
            raise exc
        slope = rate(t_stop, zp)[3]
        y_new = zp[3] + 2.0 * pole_gap * slope
        if (y_new > 0) != (zp[3] > 0):
            breaking = pole
            break
        t_start = pole + pole_gap
        z = np.concatenate([orbit(t_start)[:3], [y_new]])
        if y_eval is not None:
            gap = (t_eval > pole - pole_gap) & (t_eval < t_start)
            y_eval[gap] = zp[3] + (t_eval[gap] - (pole - pole_gap)) * slope
    theta = np.concatenate(ts_all)
    yv = np.concatenate(ys_all)
    if t_eval is not None:
        theta, yv = t_eval, y_eval
    return LinearSolution(theta, yv, poles, residues, breaking, variant)


def zero_order_y(theta, y0: float, C1: float, B0: float, form: str = "derived"):
    """Leading-order ``y(theta)`` on the small constant-K2 orbit through ``P2 = 0``.

    ``form="derived"``: ``(y0 + c) cos(w theta) - c`` with
    ``c = (B0 + 1/C1)/(1 + B0**2)``, ``w = sqrt(1 + B0**2)``.
    ``form="printed"``: ``(y0 + B0 + 1/C1) cos(w theta)**(1/(1+B0**2)) - (B0 + 1/C1)``.
    """
    theta = np.asarray(theta, dtype=float)
    w2 = 1.0 + B0 * B0
    cos = np.cos(math.sqrt(w2) * theta)
    if form == "derived":
        c = (B0 + 1.0 / C1) / w2
        return (y0 + c) * cos - c
    if form == "printed":
        c = B0 + 1.0 / C1
        return (y0 + c) * np.power(cos, 1.0 / w2) - c
    raise ValueError(f"unknown form {form!r}")


# --- u, lambda, sigma and eta variables ---------------------------------------------


def f_coefficients(P1, P2):
    """``F1 = (1+P1**2)/gamma**3``, ``F2 = P1 P2/gamma**3``, ``F3 = (1+P2**2)/gamma**3``."""
    g3 = lorentz_gamma(P1, P2) ** 3
    return (1.0 + P1 * P1) / g3, P1 * P2 / g3, (1.0 + P2 * P2) / g3


def ulam_rhs(u: float, lam: float, sigma: float, state: FieldState, B0: float) -> tuple[float, float, float]:
    """Rates of ``u = e/p1``, ``lambda = (e-1)/p1``, ``sigma = p2/p1``."""
    F1, F2, F3 = f_coefficients(state.P1, state.P2)
    du = u * u + B0 * F1 * u * sigma - B0 * F2 * u - F2 * sigma + F3
    dlam = lam * (u + B0 * F1 * sigma - B0 * F2)
    dsig = B0 * F1 * sigma * sigma + u * sigma - 2.0 * B0 * F2 * sigma + B0 * F3
    return du, dlam, dsig


def ulam_reduced_rhs(u: float, lam: float, state: FieldState, C1: float, B0: float) -> tuple[float, float]:
    """``(du, dlambda)`` after eliminating ``sigma = B0 u + (C1 - B0) lambda``."""
    F1, F2, F3 = f_coefficients(state.P1, state.P2)
    M1 = 1.0 + B0 * B0 * F1
    k = B0 * (C1 - B0) * F1
    du = M1 * u * u + k * u * lam - 2.0 * B0 * F2 * u - (C1 - B0) * F2 * lam + F3
    dlam = M1 * u * lam + k * lam * lam - B0 * F2 * lam
    return du, dlam


def ulam_from_derivatives(p1: float, p2: float, e: float) -> tuple[float, float, float]:
    return e / p1, (e - 1.0) / p1, p2 / p1


def derivatives_from_ulam(u: float, lam: float, C1: float, B0: float) -> tuple[float, float, float]:
    """Inverse map: ``(p1, p2, e)`` from ``u``, ``lambda`` and ``C1``."""
    d = u - lam
    return 1.0 / d, B0 + C1 * lam / d, u / d


def q_linear_rhs(eta1: float, eta2: float, state: FieldState, C1: float, B0: float) -> tuple[float, float]:
    """Rates of ``eta1 = u/lambda = e/(e-1)`` and ``eta2 = 1/lambda = p1/(e-1)``."""
    F1, F2, F3 = f_coefficients(state.P1, state.P2)
    d1 = -B0 * F2 * eta1 + F3 * eta2 - (C1 - B0) * F2
    d2 = -(1.0 + B0 * B0 * F1) * eta1 + B0 * F2 * eta2 - B0 * (C1 - B0) * F1
    return d1, d2


def riccati_p1_rhs(p1: float, state: FieldState, B0: float) -> float:
    """``dp1/dtheta`` on the invariant set ``p2 = B0``, ``e = 1``."""
    g3 = state.gamma**3
    return -1.0 - B0 * B0 / g3 - p1 * p1 / g3 - (p1 * state.P2 - B0 * state.P1) ** 2 / g3


# --- Hill normal form ------------------------------------------------------------------


def _field_rates(P1, P2, E1, B0):
    g = jsqrt(1.0 + P1 * P1 + P2 * P2)
    return -E1 - B0 * P2 / g, B0 * P1 / g, P1 / g


@dataclass
class HillValues:
    """Coefficient values (arrays over ``theta``); primes are theta-derivatives."""

    theta: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    dF1: np.ndarray
    dF2: np.ndarray
    dF3: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray
    K: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    N1: np.ndarray
    N2: np.ndarray


class HillCoefficients:
    """Coefficients of the linearized derivative dynamics along a reference orbit.

    ``orbit(theta)`` must return rows whose first three entries are
    ``P1, P2, E1``.  Derivatives in ``theta`` are exact: the orbit's rates are
    propagated through second-order jets, so no differencing is involved.
    """

    def __init__(self, orbit: Callable, B0: float, C1: float, theta0: float = 0.0):
        self.orbit = orbit
        self.B0 = float(B0)
        self.C1 = float(C1)
        P1, P2, _ = self._state(np.array([theta0]))
        self.F3_0 = float(((1.0 + P2**2) / (1.0 + P1**2 + P2**2) ** 1.5)[0])

    def _state(self, theta):
        s = np.atleast_2d(np.asarray(self.orbit(theta), dtype=float))
        return s[:, 0], s[:, 1], s[:, 2]

    def _jets(self, theta):
        P1, P2, E1 = self._state(theta)
        B0 = self.B0
        r1 = _field_rates(P1, P2, E1, B0)
        r2 = _field_rates(Jet(P1, r1[0]), Jet(P2, r1[1]), Jet(E1, r1[2]), B0)
        return tuple(Jet(v, d1, j.d1) for v, d1, j in zip((P1, P2, E1), r1, r2))

    def __call__(self, theta) -> HillValues:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        P1, P2, _ = self._jets(theta)
        B0, C1 = self.B0, self.C1
        g3 = (1.0 + P1 * P1 + P2 * P2) ** 1.5
        F1 = (1.0 + P1 * P1) / g3
        F2 = P1 * P2 / g3
        F3 = (1.0 + P2 * P2) / g3
        M1 = 1.0 + B0 * B0 * F1
        M2 = B0 * F2
        M3 = F3
        K = (M1.v * M3.v - M2.v**2 - M2.d1 - 0.75 * M1.d1**2 / M1.v**2
             + (M1.d2 + 2.0 * M2.v * M1.d1) / (2.0 * M1.v))
        G1 = (C1 - B0) * (F2.d1 - B0 * F2.v**2 + B0 * F1.v * F3.v - F2.v * F3.d1 / F3.v)
        G2 = F3.v * (1.0 + B0 * B0 * F1.v) - F2.v**2 * B0 * B0 + B0 * F2.d1 - B0 * F2.v * F3.d1 / F3.v
        G3 = -F3.d1 / F3.v
        dG3 = -(F3.d2 / F3.v - (F3.d1 / F3.v) ** 2)
        N1 = G1 * np.sqrt(self.F3_0 / F3.v)
        N2 = G2 - 0.25 * G3**2 - 0.5 * dG3
        return HillValues(theta, F1.v, F2.v, F3.v, F1.d1, F2.d1, F3.d1, M1.v, M2.v, M3.v,
                          K, G1, G2, G3, N1, N2)

    def K(self, theta):
        return self(theta).K

    def N1(self, theta):
        return self(theta).N1

    def N2(self, theta):
        return self(theta).N2


def hill_coefficients(orbit: Callable, B0: float, C1: float, theta0: float = 0.0) -> HillCoefficients:
    return HillCoefficients(orbit, B0, C1, theta0)


class PeriodicOrbit:
    """One period of a characteristic, evaluated periodically in ``theta``.

    Built from a field state; ``period`` comes from the quadrature and the
    orbit from a tight-tolerance integration with dense output.
    """

    def __init__(self, state: FieldState, B0: float, rel_tol: float = 1e-13):
        self.B0 = B0
        self.state = state
        self.K1 = state.P2 - B0 * state.E1
        self.K2 = 2.0 * state.gamma + state.E1**2
        if B0 != 0.0:
            self.period = period(self.K1, self.K2, B0, state.P2)
        else:
            self.period = _period_b0_zero(state)
        cfg = SimConfig(B0=B0, horizon=self.period, rel_tol=rel_tol, abs_tol=1e-15)
        self.trace = integrate_characteristic("relativistic", [state.P1, state.P2, state.E1, 0.0, 0.0, 0.0, 0.0], cfg)

    def __call__(self, theta):
        th = np.mod(np.asarray(theta, dtype=float), self.period)
        out = self.trace(th)
        return out[..., :3]


def _period_b0_zero(state: FieldState) -> float:
    """Period for ``B0 = 0``, where ``P2`` is constant and ``(P1, E1)`` oscillate.

    With ``E1 = a sin(phi)`` the momentum factors exactly as
    ``P1 = a cos(phi) sqrt((g + gp)/2)``, ``g = (K2 - E1**2)/2``,
    ``gp = sqrt(1 + P2**2)``, so ``theta = integral of g/P1 dE1`` has a smooth
    integrand in ``phi``.
    """
    K2 = 2.0 * state.gamma + state.E1**2
    gp = math.sqrt(1.0 + state.P2**2)
    a = math.sqrt(max(K2 - 2.0 * gp, 0.0))
    x, wts = np.polynomial.legendre.leggauss(GL_NODES)
    E = a * np.sin(0.5 * math.pi * x)
    g = 0.5 * (K2 - E * E)
    return float(math.pi * np.dot(wts, g * np.sqrt(2.0 / (g + gp))))


def small_amplitude_orbit(epsilon: float, B0: float) -> PeriodicOrbit:
    """Reference orbit with ``K1 = 0``, ``K2 = 2 + eps**2`` through ``P2 = E1 = 0``."""
    g = 1.0 + 0.5 * epsilon * epsilon
    return PeriodicOrbit(FieldState(0.0, 0.0, math.sqrt(g * g - 1.0), 0.0, 0.0), B0)
