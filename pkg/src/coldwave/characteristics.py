"""Characteristic systems, single-trace integration and seed ensembles.

Along ``d rho/d theta = V1`` the PDE system becomes the ODEs returned by
:func:`rhs_rel` (or :func:`rhs_nonrel`), and the spatial derivatives
``(p1, p2, e)`` obey the extended systems.  :func:`integrate` advances the
seven-component vector ``[P1, P2, E1, rho, p1, p2, e]`` with the compiled
Dormand-Prince kernel when it is available, or with the pure-Python fallback.
Set ``COLDWAVE_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels_py
from .core import (
    C1_SINGULAR_TOL,
    DerivativeState,
    FieldState,
    InitialData,
    SimConfig,
    ValidationError,
    lorentz_gamma,
)
from .ode import StepSizeUnderflow, dense_eval

try:
    if os.environ.get("COLDWAVE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_kernel = _compiled if _compiled is not None else _kernels_py
BACKEND: str = _kernel.BACKEND

#: Reclassify a step-size underflow as breaking within this distance of the
#: extrapolated blow-up time.
UNDERFLOW_WINDOW = 1e-8
EVENT_TOL = 1e-10

TRIGGERS = ("p1", "p2", "e")
COLUMNS = ("P1", "P2", "E1", "rho", "p1", "p2", "e")


def kernel(backend: str | None = None):
    """Return the kernel module for ``backend`` (``"cython"``, ``"python"`` or the default)."""
    if backend is None:
        return _kernel
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        if _compiled is None:
            raise ImportError("the compiled kernel is not available")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")


# --- right-hand sides ---------------------------------------------------------


def rhs_rel(state: FieldState, B0: float) -> tuple[float, float, float, float]:
    """Rates ``(dP1, dP2, dE1, drho)`` of the relativistic characteristic system."""
    g = lorentz_gamma(state.P1, state.P2)
    V1, V2 = state.P1 / g, state.P2 / g
    return (-state.E1 - B0 * V2, B0 * V1, V1, V1)


def rhs_rel_extended(state: FieldState, deriv: DerivativeState, B0: float) -> tuple[float, float, float]:
    """Rates ``(dp1, dp2, de)`` of the spatial derivatives along a relativistic characteristic."""
    P1, P2 = state.P1, state.P2
    g = lorentz_gamma(P1, P2)
    Q = (deriv.p1 * P1 + deriv.p2 * P2) / g**3
    vq1 = deriv.p1 / g - P1 * Q
    vq2 = deriv.p2 / g - P2 * Q
    return (
        -vq1 * deriv.p1 - B0 * vq2 - deriv.e,
        -vq1 * deriv.p2 + B0 * vq1,
        (1.0 - deriv.e) * vq1,
    )


def rhs_nonrel(state: FieldState, B0: float) -> tuple[float, float, float, float]:
    """Nonrelativistic rates; the ``P1``/``P2`` slots hold ``V1``/``V2``."""
    V1, V2 = state.P1, state.P2
    return (-state.E1 - B0 * V2, B0 * V1, V1, V1)


def rhs_nonrel_extended(deriv: DerivativeState, B0: float) -> tuple[float, float, float]:
    """Rates of ``(v1, v2, e)``, the gradients of ``(V1, V2, E1)``, in the nonrelativistic model."""
    v1, v2, e = deriv.p1, deriv.p2, deriv.e
    return (-v1 * v1 - B0 * v2 - e, (B0 - v2) * v1, (1.0 - e) * v1)


def _is_relativistic(model) -> bool:
    if model in (rhs_rel, "relativistic", "rel"):
        return True
    if model in (rhs_nonrel, "nonrelativistic", "nonrel"):
        return False
    raise ValidationError(f"unknown characteristic model {model!r}")


# --- traces -------------------------------------------------------------------


@dataclass
class CharacteristicTrace:
    """Stored steps of one characteristic.

    ``states`` has one row ``[P1, P2, E1, rho, p1, p2, e]`` per stored step.
    ``status`` is ``"horizon"``, ``"breaking"`` (threshold crossed),
    ``"suspected-breaking"`` (integration failed right at the extrapolated
    singularity) or ``"max-steps"``.
    """

    rho0: float
    B0: float
    relativistic: bool
    theta: np.ndarray
    states: np.ndarray
    status: str
    breaking_time: float | None = None
    blowup_estimate: float | None = None
    trigger: str | None = None
    integrals_drift: dict = field(default_factory=dict)
    rcont: np.ndarray | None = field(default=None, repr=False)
    eval_theta: np.ndarray | None = field(default=None, repr=False)
    eval_states: np.ndarray | None = field(default=None, repr=False)
    nsteps: int = 0
    nfev: int = 0

    def __len__(self) -> int:
        return len(self.theta)

    def column(self, name: str) -> np.ndarray:
        return self.states[:, COLUMNS.index(name)]

    @property
    def samples(self) -> list[tuple[float, FieldState, DerivativeState]]:
        return [
            (float(t), FieldState(float(t), y[3], y[0], y[1], y[2]), DerivativeState(y[4], y[5], y[6]))
            for t, y in zip(self.theta, self.states)
        ]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def integrals(self) -> tuple[np.ndarray, np.ndarray]:
        """``K1`` and ``K2`` at every stored sample."""
        P1, P2, E1 = self.states[:, 0], self.states[:, 1], self.states[:, 2]
        K1 = P2 - self.B0 * E1
        if self.relativistic:
            K2 = 2.0 * np.sqrt(1.0 + P1**2 + P2**2) + E1**2
        else:
            K2 = P1**2 + P2**2 + E1**2
        return K1, K2

    def max_derivative(self) -> np.ndarray:
        return np.max(np.abs(self.states[:, 4:7]), axis=1)

    def __call__(self, theta):
        """Dense output at ``theta`` (within the integrated range)."""
        if self.rcont is None:
            raise ValueError("dense output was not stored (stride > 1)")
        t_arr = np.atleast_1d(np.asarray(theta, dtype=float))
        idx = np.clip(np.searchsorted(self.theta, t_arr, side="right") - 1, 0, len(self.theta) - 2)
        out = np.empty((t_arr.size, 7))
        for j, (i, tv) in enumerate(zip(idx, t_arr)):
            out[j] = dense_eval(self.rcont[i], self.theta[i], self.theta[i + 1] - self.theta[i], tv)
        return out[0] if np.ndim(theta) == 0 else out

    def crossings(self, component: str | int, value: float, direction: int = 0) -> np.ndarray:
        """Times at which ``component`` crosses ``value``, located on the dense output."""
        j = COLUMNS.index(component) if isinstance(component, str) else int(component)
        g = self.states[:, j] - value
        out = []
        for i in range(len(g) - 1):
            ga, gb = g[i], g[i + 1]
            if not ((ga < 0.0 <= gb) or (ga > 0.0 >= gb)):
                continue
            if direction and ((gb > ga) != (direction > 0)):
                continue
            ta, tb = self.theta[i], self.theta[i + 1]
            h = tb - ta
            rc = self.rcont[i] if self.rcont is not None else None
            if rc is None:
                out.append(ta - ga * h / (gb - ga))
                continue
            while tb - ta > EVENT_TOL:
                tm = 0.5 * (ta + tb)
                gm = dense_eval(rc, self.theta[i], h, tm)[j] - value
                if (gm > 0) == (ga > 0):
                    ta, ga = tm, gm
                else:
                    tb = tm
            out.append(0.5 * (ta + tb))
        return np.array(out)


def _as_vector(initial_point) -> np.ndarray:
    if isinstance(initial_point, tuple) and len(initial_point) == 2 and isinstance(initial_point[0], FieldState):
        s, d = initial_point
        return np.array([s.P1, s.P2, s.E1, s.rho, d.p1, d.p2, d.e], dtype=float)
    y = np.array(initial_point, dtype=float).ravel()
    if y.size != 7:
        raise ValidationError("initial point must be (FieldState, DerivativeState) or 7 numbers")
    if not np.all(np.isfinite(y)):
        raise ValidationError("initial point is not finite")
    return y


def reciprocal_fit(theta: np.ndarray, m: np.ndarray) -> float | None:
    """Blow-up time of ``m ~ c/(theta* - theta)`` from a least-squares line through ``1/m``."""
    if len(theta) < 2:
        return None
    slope, intercept = np.polyfit(theta, 1.0 / m, 1)
    if not slope < 0.0:
        return None
    return float(-intercept / slope)


def _last_decade(theta: np.ndarray, m: np.ndarray, top: float):
    mask = (m >= 0.1 * top) & (m <= top)
    return theta[mask], m[mask]


def integrate(
    rhs,
    initial_point,
    config: SimConfig,
    *,
    t_eval: Sequence[float] | None = None,
    rhs_sign: float = 1.0,
    backend: str | None = None,
) -> CharacteristicTrace:
    """Integrate one characteristic from ``theta = 0`` to ``config.horizon`` or breaking.

    ``rhs`` selects the model: :func:`rhs_rel` / ``"relativistic"`` or
    :func:`rhs_nonrel` / ``"nonrelativistic"``.  ``rhs_sign = -1`` integrates
    the time-reversed system.

    Raises
    ------
    StepSizeUnderflow
        If the step size collapses away from an extrapolated blow-up; the
        partial trace is attached as ``exc.trace``.
    """
    rel = _is_relativistic(rhs)
    y0 = _as_vector(initial_point)
    k = kernel(backend)
    res = k.integrate_characteristic(
        y0, float(config.B0), rel, float(config.horizon), float(config.rel_tol), float(config.abs_tol),
        float(config.blowup_threshold), 0.0, int(config.max_steps), int(config.stride),
        None if t_eval is None else np.asarray(t_eval, dtype=float), float(rhs_sign), True,
    )
    theta, states = res["t"], res["y"]
    drift = res["drift"]
    c1_def = abs(y0[6] - 1.0) >= C1_SINGULAR_TOL
    trace = CharacteristicTrace(
        rho0=float(y0[3]), B0=float(config.B0), relativistic=rel, theta=theta, states=states,
        status="horizon",
        integrals_drift={"K1": float(drift[0]), "K2": float(drift[1]),
                         "C1": float(drift[2]) if c1_def else None},
        rcont=res["rcont"], nsteps=int(res["nsteps"]), nfev=int(res["nfev"]),
        eval_theta=None if t_eval is None else np.asarray(t_eval, dtype=float),
        eval_states=res["y_eval"],
    )
    status = res["status"]
    if status == k.STATUS_DONE:
        return trace
    if status == k.STATUS_MAX_STEPS:
        trace.status = "max-steps"
        return trace

    m = trace.max_derivative()
    D = config.blowup_threshold
    if status == k.STATUS_THRESHOLD:
        trace.status = "breaking"
        trace.trigger = TRIGGERS[int(np.argmax(np.abs(states[-1, 4:7])))]
        trace.breaking_time = _refine_threshold(res, D)
        th, mm = _last_decade(theta, m, D)
        est = reciprocal_fit(th, mm)
        trace.blowup_estimate = est if est is not None else trace.breaking_time
        return trace

    # step-size underflow or non-finite state
    finite = np.all(np.isfinite(states), axis=1)
    th, mm = theta[finite], m[finite]
    top = float(np.max(mm)) if mm.size else 0.0
    est = reciprocal_fit(*_last_decade(th, mm, top)) if top > 0 else None
    t_fail = float(th[-1]) if th.size else 0.0
    if est is not None and abs(t_fail - est) <= UNDERFLOW_WINDOW * max(1.0, abs(est)):
        trace.status = "suspected-breaking"
        trace.breaking_time = t_fail
        trace.blowup_estimate = est
        trace.trigger = TRIGGERS[int(np.argmax(np.abs(states[finite][-1, 4:7])))]
        return trace
    exc = StepSizeUnderflow(t_fail, float(res["last_h"]))
    exc.trace = trace
    raise exc


def _refine_threshold(res: dict, D: float) -> float:
    """Bisect the last step's continuous extension for ``max|p1,p2,e| = D``."""
    rc = res["last_rc"]
    t_old, h = float(res["last_t_old"]), float(res["last_h"])
    if rc is None or h <= 0.0:
        return float(res["t"][-1])
    rc = np.asarray(rc).reshape(5, 7)

    def g(t):
        y = dense_eval(rc, t_old, h, t)
        return float(np.max(np.abs(y[4:7]))) - D

    ta, tb = t_old, t_old + h
    if g(ta) >= 0.0 or g(tb) < 0.0:
        return tb
    while tb - ta > EVENT_TOL:
        tm = 0.5 * (ta + tb)
        if g(tm) >= 0.0:
            tb = tm
        else:
            ta = tm
    return 0.5 * (ta + tb)


def breaking_time(trace: CharacteristicTrace) -> float | None:
    """First threshold-crossing time of ``trace`` (None if it stayed below threshold)."""
    return trace.breaking_time


# --- ensembles ------------------------------------------------------------------


@dataclass
class EnsembleResult:
    """Traces for uniformly spaced seeds; failed seeds hold ``None`` and an entry in ``errors``."""

    seeds: np.ndarray
    traces: list
    errors: dict

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __getitem__(self, i):
        return self.traces[i]

    @property
    def breaking_times(self) -> np.ndarray:
        return np.array([
            np.nan if (t is None or t.breaking_time is None) else t.breaking_time for t in self.traces
        ])

    @property
    def min_breaking_time(self) -> float | None:
        bt = self.breaking_times
        bt = bt[np.isfinite(bt)]
        return float(bt.min()) if bt.size else None

    @property
    def breaking_seed(self) -> float | None:
        bt = self.breaking_times
        if not np.any(np.isfinite(bt)):
            return None
        return float(self.seeds[int(np.nanargmin(bt))])

    def summary(self) -> dict:
        return {
            "n_characteristics": len(self.traces),
            "n_broken": int(np.sum(np.isfinite(self.breaking_times))),
            "n_failed": len(self.errors),
            "min_breaking_time": self.min_breaking_time,
            "breaking_seed": self.breaking_seed,
        }


def seeds_for(data: InitialData, n: int) -> np.ndarray:
    return np.arange(n) * (data.domain_length / n)


def ensemble(
    data: InitialData,
    config: SimConfig,
    model="relativistic",
    *,
    seeds: Sequence[float] | None = None,
    t_eval: Sequence[float] | None = None,
    workers: int | None = None,
    backend: str | None = None,
) -> EnsembleResult:
    """One trace per seed (``config.n_characteristics`` seeds uniformly spaced on ``[0, L)``).

    Seeds run concurrently; a failing seed records its exception in
    ``errors`` and leaves the others untouched.
    """
    seeds = seeds_for(data, config.n_characteristics) if seeds is None else np.asarray(seeds, dtype=float)

    def one(rho0):
        try:
            return integrate(model, data.initial_vector(rho0), config, t_eval=t_eval, backend=backend), None
        except (StepSizeUnderflow, ValidationError, FloatingPointError) as exc:
            return None, exc

    workers = workers or min(len(seeds), os.cpu_count() or 1)
    if workers <= 1:
        results = [one(r) for r in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seeds))
    traces = [r[0] for r in results]
    errors = {i: r[1] for i, r in enumerate(results) if r[1] is not None}
    return EnsembleResult(seeds=seeds, traces=traces, errors=errors)


def time_reversal_error(trace: CharacteristicTrace, config: SimConfig, backend: str | None = None) -> float:
    """Integrate the final state of ``trace`` backwards and return the max deviation from the seed."""
    T = float(trace.theta[-1])
    cfg = SimConfig(B0=config.B0, horizon=T, rel_tol=config.rel_tol, abs_tol=config.abs_tol,
                    blowup_threshold=config.blowup_threshold)
    back = integrate("relativistic" if trace.relativistic else "nonrelativistic",
                     trace.final, cfg, rhs_sign=-1.0, backend=backend)
    return float(np.max(np.abs(back.final - trace.states[0])))
