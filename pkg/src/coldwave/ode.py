"""Dormand-Prince 5(4) integrator with PI step control and dense output.

This is the pure-Python reference for every time integration in the package.
The compiled kernel in ``_kernels.pyx`` repeats the same tableau, controller
and continuous extension for the characteristic system only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# Butcher tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0,
)
# continuous extension (4th order)
D1, D3, D4, D5, D6, D7 = (
    -12715105075.0 / 11282082432.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
)

# PI controller
BETA = 0.04
EXPO1 = 0.2 - 0.75 * BETA
SAFE = 0.9
FAC_MIN, FAC_MAX = 0.2, 10.0
UROUND = 2.220446049250313e-16


class StepSizeUnderflow(RuntimeError):
    """The step size fell below the resolution of the time variable."""

    def __init__(self, t: float, h: float, solution: "OdeSolution | None" = None):
        super().__init__(f"step size {h:.3e} underflow at t = {t:.17g}")
        self.t = t
        self.h = h
        self.solution = solution


def dense_eval(rc: np.ndarray, t_old: float, h: float, t):
    """Evaluate one step's continuous extension ``rc`` (shape (5, n)) at ``t``."""
    s = (t - t_old) / h
    s1 = 1.0 - s
    return rc[0] + s * (rc[1] + s1 * (rc[2] + s * (rc[3] + s1 * rc[4])))


def initial_step(fun, t0, y0, f0, direction, rtol, atol, order=5):
    sk = atol + rtol * np.abs(y0)
    dnf = float(np.mean((f0 / sk) ** 2))
    dny = float(np.mean((y0 / sk) ** 2))
    h = 1e-6 if dnf <= 1e-10 or dny <= 1e-10 else math.sqrt(dny / dnf) * 0.01
    y1 = y0 + direction * h * f0
    f1 = fun(t0 + direction * h, y1)
    der2 = float(np.sqrt(np.mean(((f1 - f0) / sk) ** 2))) / h
    der12 = max(abs(der2), math.sqrt(dnf))
    h1 = max(1e-6, h * 1e-3) if der12 <= 1e-15 else (0.01 / der12) ** (1.0 / order)
    return min(100.0 * h, h1)


@dataclass
class Event:
    """Root of ``g(t, y)``; ``direction`` +1 / -1 restricts the crossing sign."""

    g: Callable[[float, np.ndarray], float]
    direction: int = 0
    terminal: bool = False
    skip_start: bool = True


class OdeSolution:
    """Accepted steps with their continuous extensions."""

    def __init__(self, t: np.ndarray, y: np.ndarray, rcont: np.ndarray | None, h: np.ndarray | None = None):
        self.t = t
        self.y = y
        self.rcont = rcont
        # step lengths of the extensions; differ from diff(t) only for a step cut at an event
        self.h = np.diff(t) if h is None else h

    def __call__(self, t):
        if self.rcont is None:
            raise ValueError("dense output was not stored for this solution")
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        fwd = self.t[-1] >= self.t[0]
        grid = self.t if fwd else -self.t
        tt = t_arr if fwd else -t_arr
        idx = np.clip(np.searchsorted(grid, tt, side="right") - 1, 0, len(self.t) - 2)
        out = np.empty((t_arr.size, self.y.shape[1]))
        for j, (i, tv) in enumerate(zip(idx, t_arr)):
            out[j] = dense_eval(self.rcont[i], self.t[i], self.h[i], tv)
        return out[0] if np.ndim(t) == 0 else out


def locate_root(g, f_dense, ta: float, tb: float, ga: float, gb: float, tol: float = 1e-10):
    """Bisection for a sign change of ``g(t, y(t))`` on ``[ta, tb]``."""
    if ga == 0.0:
        return ta
    if gb == 0.0:
        return tb
    while abs(tb - ta) > tol:
        tm = 0.5 * (ta + tb)
        gm = g(tm, f_dense(tm))
        if gm == 0.0:
            return tm
        if (gm > 0) == (ga > 0):
            ta, ga = tm, gm
        else:
            tb, gb = tm, gm
    return 0.5 * (ta + tb)


@dataclass
class SolveResult:
    t: np.ndarray
    y: np.ndarray
    solution: OdeSolution
    status: str  # "done", "event", "stopped", "max_steps"
    t_events: list
    y_events: list
    nfev: int
    y_eval: np.ndarray | None = None


def solve(
    fun: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0,
    t_end: float,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    h0: float | None = None,
    max_steps: int = 10_000_000,
    events: Sequence[Event] = (),
    event_tol: float = 1e-10,
    t_eval=None,
    dense: bool = True,
    stride: int = 1,
    step_callback: Callable[[float, np.ndarray, float, np.ndarray, np.ndarray], bool] | None = None,
    max_step: float = math.inf,
) -> SolveResult:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end``.

    ``step_callback(t_old, y_old, t_new, y_new, rcont)`` runs after each
    accepted step; returning True stops the integration after that step.
    Only every ``stride``-th step is stored (the last step always is); dense
    output is only available with ``stride == 1``.
    """
    y = np.array(y0, dtype=float)
    n = y.size
    t = float(t0)
    direction = 1.0 if t_end >= t0 else -1.0
    k1 = np.asarray(fun(t, y), dtype=float)
    nfev = 1
    if h0 is None:
        h = initial_step(fun, t, y, k1, direction, rtol, atol)
        nfev += 1
    else:
        h = abs(h0)
    h = min(h, max_step)

    ts, ys, rcs, hs_list = [t], [y.copy()], [], []
    t_eval_arr = None if t_eval is None else np.asarray(t_eval, dtype=float)
    y_eval = None if t_eval_arr is None else np.full((t_eval_arr.size, n), np.nan)
    i_eval = 0
    if t_eval_arr is not None:
        while i_eval < t_eval_arr.size and (t_eval_arr[i_eval] - t) * direction <= 0.0:
            if t_eval_arr[i_eval] == t:
                y_eval[i_eval] = y
            i_eval += 1

    g_prev = [ev.g(t, y) for ev in events]
    t_events = [[] for _ in events]
    y_events = [[] for _ in events]
    err_old = 1e-4
    reject = False
    status = "max_steps"
    n_acc = 0
    for _ in range(max_steps):
        if (t_end - t) * direction <= 0.0:
            status = "done"
            break
        if abs(h) < 16.0 * UROUND * max(abs(t), 1.0):
            sol = OdeSolution(np.array(ts), np.array(ys), np.array(rcs) if (dense and stride == 1 and rcs) else None,
                              np.array(hs_list) if hs_list else None)
            raise StepSizeUnderflow(t, h, sol)
        last = False
        if (t + direction * h - t_end) * direction >= 0.0:
            h = abs(t_end - t)
            last = True
        hs = direction * h
        k2 = fun(t + C2 * hs, y + hs * (A21 * k1))
        k3 = fun(t + C3 * hs, y + hs * (A31 * k1 + A32 * k2))
        k4 = fun(t + C4 * hs, y + hs * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = fun(t + C5 * hs, y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        ysti = y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5)
        k6 = fun(t + hs, ysti)
        y1 = y + hs * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6)
        k7 = fun(t + hs, y1)
        nfev += 6
        errv = hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        sk = atol + rtol * np.maximum(np.abs(y), np.abs(y1))
        err = math.sqrt(float(np.sum((errv / sk) ** 2)) / n)
        if not math.isfinite(err):
            err = 1e10
        fac11 = err**EXPO1
        fac = fac11 / err_old**BETA
        fac = max(1.0 / FAC_MAX, min(1.0 / FAC_MIN, fac / SAFE))
        hnew = h / fac
        if err <= 1.0:
            err_old = max(err, 1e-4)
            ydiff = y1 - y
            bspl = hs * k1 - ydiff
            rc = np.empty((5, n))
            rc[0] = y
            rc[1] = ydiff
            rc[2] = bspl
            rc[3] = ydiff - hs * k7 - bspl
            rc[4] = hs * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7)
            t_old, y_old = t, y
            t = t_end if last else t + hs
            y = y1
            k1 = k7
            n_acc += 1

            def f_dense(tq, _rc=rc, _t0=t_old, _h=hs):
                return dense_eval(_rc, _t0, _h, tq)

            if t_eval_arr is not None:
                while i_eval < t_eval_arr.size and (t_eval_arr[i_eval] - t) * direction <= 0.0:
                    y_eval[i_eval] = f_dense(t_eval_arr[i_eval])
                    i_eval += 1

            stop = False
            t_stop = t
            for j, ev in enumerate(events):
                g_new = ev.g(t, y)
                ga = g_prev[j]
                g_prev[j] = g_new
                if ev.skip_start and t_old == t0 and ga == 0.0:
                    continue
                crossed = (ga < 0.0 <= g_new) or (ga > 0.0 >= g_new)
                if not crossed:
                    continue
                rising = g_new > ga
                if ev.direction and (rising != (ev.direction > 0)):
                    continue
                tr = locate_root(ev.g, f_dense, t_old, t, ga, g_new, event_tol)
                t_events[j].append(tr)
                y_events[j].append(f_dense(tr))
                if ev.terminal:
                    stop = True
                    t_stop = tr if (tr - t_stop) * direction < 0 else t_stop

            if step_callback is not None and step_callback(t_old, y_old, t, y, rc):
                stop = True
                status = "stopped"

            if stop and status != "stopped" and t_stop != t:
                # end the trajectory at the terminal event, not at the step end
                t, y = t_stop, f_dense(t_stop)
                if y_eval is not None:
                    y_eval[(t_eval_arr - t) * direction > 0.0] = np.nan
            if n_acc % stride == 0 or stop or last or (t_end - t) * direction <= 0.0:
                ts.append(t)
                ys.append(y.copy())
                if dense and stride == 1:
                    rcs.append(rc)
                    hs_list.append(hs)
            if stop:
                if status != "stopped":
                    status = "event"
                break
            if reject:
                hnew = min(hnew, h)
            reject = False
            h = min(hnew, max_step)
        else:
            h = h / min(1.0 / FAC_MIN, fac11 / SAFE)
            reject = True
    sol = OdeSolution(np.array(ts), np.array(ys), np.array(rcs) if (dense and stride == 1 and rcs) else None,
                      np.array(hs_list) if hs_list else None)
    return SolveResult(
        t=sol.t, y=sol.y, solution=sol, status=status,
        t_events=[np.array(v) for v in t_events], y_events=[np.array(v) for v in y_events],
        nfev=nfev, y_eval=y_eval,
    )
