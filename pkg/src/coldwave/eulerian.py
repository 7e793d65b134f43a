"""Finite-difference solver on a periodic grid, used as an independent oracle.

The system ``dU/dtheta + V1 dU/drho = S(U)`` with ``U = (P1, P2, E1)`` and
``S = (-E1 - B0 V2, B0 V1, V1)`` is advanced with the two-step Richtmyer
Lax-Wendroff scheme: a half step to the cell faces, then a full step with
face differences.  The scheme is second order on smooth solutions and has no
added viscosity, so runs must stop before breaking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .core import InitialData, ValidationError

DEFAULT_CFL = 0.4
MAX_CFL = 0.5
FIELDS = ("P1", "P2", "E1")


class CFLViolation(RuntimeError):
    """``max|V1| dt/dx`` exceeded the stability bound."""


class InsufficientCoverage(RuntimeError):
    """Characteristic positions do not span enough of the domain."""


@dataclass
class GridSolution:
    """Snapshots ``(theta, U)`` with ``U`` of shape ``(3, n)`` holding ``P1, P2, E1``."""

    L: float
    B0: float
    n: int
    cfl: float
    thetas: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    max_courant: float = 0.0

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ValidationError("grid size must be a power of two >= 16")
        if not 0.0 < self.cfl <= MAX_CFL:
            raise ValidationError(f"cfl must lie in (0, {MAX_CFL}]")

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def at(self, theta: float) -> np.ndarray:
        i = int(np.argmin(np.abs(np.asarray(self.thetas) - theta)))
        if abs(self.thetas[i] - theta) > 1e-9 * max(1.0, abs(theta)):
            raise ValueError(f"no snapshot at theta = {theta}")
        return self.snapshots[i]


def _source(U: np.ndarray, B0: float):
    P1, P2, E1 = U
    g = np.sqrt(1.0 + P1 * P1 + P2 * P2)
    V1, V2 = P1 / g, P2 / g
    return V1, np.array([-E1 - B0 * V2, B0 * V1, V1])


def step_grid(U: np.ndarray, B0: float, dt: float, dx: float) -> np.ndarray:
    """One Richtmyer step of length ``dt`` on a periodic grid with spacing ``dx``."""
    V1, S = _source(U, B0)
    courant = float(np.max(np.abs(V1))) * dt / dx
    if courant > MAX_CFL:
        raise CFLViolation(f"Courant number {courant:.3f} exceeds {MAX_CFL}")
    Up = np.roll(U, -1, axis=1)
    Um = 0.5 * (U + Up)
    Vf, Sf = _source(Um, B0)
    Uh = Um - 0.5 * dt * Vf * (Up - U) / dx + 0.5 * dt * Sf  # at i + 1/2
    Uh_m = np.roll(Uh, 1, axis=1)  # at i - 1/2
    Vs, Ss = _source(0.5 * (Uh + Uh_m), B0)
    return U - dt * Vs * (Uh - Uh_m) / dx + dt * Ss


def initial_grid(data: InitialData, n: int) -> np.ndarray:
    rho = np.arange(n) * (data.domain_length / n)
    (P1, _, _), (P2, _, _), (E1, _, _) = data.profiles(rho)
    return np.array([P1, P2, E1])


def evolve(
    U0,
    B0: float,
    L: float,
    theta_end: float,
    *,
    cfl: float = DEFAULT_CFL,
    snapshot_times=(),
) -> GridSolution:
    """Advance the ``(3, n)`` array ``U0`` to ``theta_end``.

    The step is ``dt = cfl * dx`` (``|V1| < 1`` so the Courant number stays
    below ``cfl``), shortened uniformly so that ``theta_end`` and every
    requested snapshot time are hit exactly.  Use :func:`initial_grid` to
    sample :class:`InitialData`.
    """
    U = np.array(U0, dtype=float)
    if U.ndim != 2 or U.shape[0] != 3:
        raise ValidationError("grid state must have shape (3, n)")
    n = U.shape[1]
    sol = GridSolution(L=L, B0=B0, n=n, cfl=cfl)
    dx = L / n
    stops = sorted({float(t) for t in snapshot_times if 0.0 < t < theta_end} | {float(theta_end)})
    t = 0.0
    sol.thetas.append(0.0)
    sol.snapshots.append(U.copy())
    for stop in stops:
        span = stop - t
        nsteps = max(1, math.ceil(span / (cfl * dx) - 1e-12))
        dt = span / nsteps
        for _ in range(nsteps):
            V1 = U[0] / np.sqrt(1.0 + U[0] ** 2 + U[1] ** 2)
            sol.max_courant = max(sol.max_courant, float(np.max(np.abs(V1))) * dt / dx)
            U = step_grid(U, B0, dt, dx)
        if not np.all(np.isfinite(U)):
            raise FloatingPointError(f"grid solution became non-finite before theta = {stop}")
        t = stop
        sol.thetas.append(t)
        sol.snapshots.append(U.copy())
    return sol


def density_field(E1: np.ndarray, dx: float) -> np.ndarray:
    """``N = 1 - dE1/drho`` with fourth-order centred differences (periodic)."""
    d = (8.0 * (np.roll(E1, -1) - np.roll(E1, 1)) - (np.roll(E1, -2) - np.roll(E1, 2))) / (12.0 * dx)
    return 1.0 - d


@dataclass
class CrossCheckReport:
    theta: float
    max_norm: dict
    l2: dict
    coverage: float
    reliable: bool

    @property
    def worst(self) -> float:
        return max(self.max_norm.values())


def cross_check(traces, grid_solution: GridSolution, theta: float, min_coverage: float = 0.99) -> CrossCheckReport:
    """Compare characteristic values at ``theta`` with the grid snapshot there.

    Values carried by the characteristics are interpolated onto the grid with
    a periodic monotone cubic (PCHIP) through their positions ``rho(theta)``.
    """
    L = grid_solution.L
    rows = []
    breaking = None
    for tr in traces:
        if tr is None:
            continue
        if tr.breaking_time is not None:
            breaking = tr.breaking_time if breaking is None else min(breaking, tr.breaking_time)
        if tr.eval_theta is not None and np.any(np.isclose(tr.eval_theta, theta, rtol=0, atol=1e-12)):
            j = int(np.argmin(np.abs(tr.eval_theta - theta)))
            rows.append(tr.eval_states[j])
        elif theta <= tr.theta[-1]:
            rows.append(tr(theta))
    if not rows:
        raise InsufficientCoverage("no characteristic reaches theta")
    Y = np.array(rows)
    pos = Y[:, 3]
    coverage = float((pos.max() - pos.min()) / L)
    if coverage < min_coverage:
        raise InsufficientCoverage(f"characteristics span {100 * coverage:.2f}% of the domain")
    x = np.mod(pos, L)
    order = np.argsort(x)
    x = x[order]
    Y = Y[order]
    xx = np.concatenate([x[-3:] - L, x, x[:3] + L])
    U = grid_solution.at(theta)
    rho = grid_solution.grid
    max_norm, l2 = {}, {}
    for k, name in enumerate(FIELDS):
        vals = np.concatenate([Y[-3:, k], Y[:, k], Y[:3, k]])
        f = PchipInterpolator(xx, vals)(rho)
        diff = f - U[k]
        max_norm[name] = float(np.max(np.abs(diff)))
        l2[name] = float(np.sqrt(np.mean(diff * diff)))
    reliable = breaking is None or theta < breaking
    return CrossCheckReport(theta, max_norm, l2, coverage, reliable)


def _spectral_shift(f: np.ndarray, shift: float, L: float) -> np.ndarray:
    n = f.shape[-1]
    k = np.fft.fftfreq(n, d=L / n) * 2.0 * math.pi
    return np.real(np.fft.ifft(np.fft.fft(f, axis=-1) * np.exp(-1j * k * shift), axis=-1))


def best_shift(U0: np.ndarray, U: np.ndarray, L: float) -> tuple[float, float]:
    """Shift ``s`` minimizing the RMS mismatch between ``U`` and ``U0`` translated by ``s``.

    Integer cell shifts locate the basin; a Fourier-interpolated shift
    refines it.  Returns ``(s mod L, rms mismatch)``.
    """
    U0 = np.atleast_2d(U0)
    U = np.atleast_2d(U)
    n = U0.shape[-1]
    dx = L / n
    errs = [float(np.mean((U - np.roll(U0, k, axis=-1)) ** 2)) for k in range(n)]
    k0 = int(np.argmin(errs))

    def mismatch(s):
        return float(np.sqrt(np.mean((U - _spectral_shift(U0, s, L)) ** 2)))

    r = minimize_scalar(mismatch, bounds=(k0 * dx - dx, k0 * dx + dx), method="bounded",
                        options={"xatol": 1e-10 * L})
    return float(np.mod(r.x, L)), float(r.fun)


def periodic_distance(a: float, b: float, L: float) -> float:
    d = abs(math.fmod(a - b, L))
    return min(d, L - d)
