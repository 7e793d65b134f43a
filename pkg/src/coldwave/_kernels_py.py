"""Pure-Python fallback of the compiled characteristic kernel.

Same contract as ``_kernels.integrate_characteristic``: integrates the seven
component system ``[P1, P2, E1, rho, p1, p2, e]`` with the Dormand-Prince
pair from :mod:`coldwave.ode`, stops at the blow-up threshold, and tracks the
drift of the first integrals on the fly.
"""

from __future__ import annotations

import math

import numpy as np

from . import ode

STATUS_DONE = 0
STATUS_THRESHOLD = 1
STATUS_UNDERFLOW = 2
STATUS_MAX_STEPS = 3
STATUS_NONFINITE = 4

BACKEND = "python"


def system_rhs(y, B0: float, relativistic: bool, sign: float = 1.0) -> np.ndarray:
    P1, P2, E1, _, p1, p2, e = y
    if relativistic:
        g = math.sqrt(1.0 + P1 * P1 + P2 * P2)
        V1, V2 = P1 / g, P2 / g
        Q = (p1 * P1 + p2 * P2) / (g * g * g)
        q1 = p1 / g - P1 * Q
        q2 = p2 / g - P2 * Q
    else:
        V1, V2 = P1, P2
        q1, q2 = p1, p2
    return np.array([
        sign * (-E1 - B0 * V2),
        sign * (B0 * V1),
        sign * V1,
        sign * V1,
        sign * (-q1 * p1 - B0 * q2 - e),
        sign * (-q1 * p2 + B0 * q1),
        sign * ((1.0 - e) * q1),
    ])


def _integrals(y, B0, relativistic):
    P1, P2, E1 = y[0], y[1], y[2]
    if relativistic:
        k2 = 2.0 * math.sqrt(1.0 + P1 * P1 + P2 * P2) + E1 * E1
    else:
        k2 = P1 * P1 + P2 * P2 + E1 * E1
    return P2 - B0 * E1, k2


def integrate_characteristic(
    y0,
    B0: float,
    relativistic: bool,
    t_end: float,
    rtol: float,
    atol: float,
    threshold: float,
    h0: float = 0.0,
    max_steps: int = 50_000_000,
    stride: int = 1,
    t_eval=None,
    rhs_sign: float = 1.0,
    store_dense: bool = True,
) -> dict:
    y0 = np.array(y0, dtype=float)
    K1_0, K2_0 = _integrals(y0, B0, relativistic)
    s1 = max(1.0, abs(K1_0))
    s2 = max(1.0, abs(K2_0))
    e0 = y0[6]
    C1 = (y0[5] - B0) / (e0 - 1.0) if abs(e0 - 1.0) >= 1e-14 else math.nan
    drift = np.zeros(3)
    if math.isnan(C1):
        drift[2] = math.nan
    store_dense = store_dense and stride == 1

    ts, ys, rcs = [0.0], [y0.copy()], []
    state = {"status": STATUS_DONE, "n": 0, "last_rc": None, "last_t_old": 0.0, "last_h": 0.0}
    low = 0.1 * threshold

    def callback(t_old, y_old, t, y, rc):
        state["n"] += 1
        state["last_rc"] = rc
        state["last_t_old"] = t_old
        state["last_h"] = t - t_old
        m = max(abs(y[4]), abs(y[5]), abs(y[6]))
        if not all(math.isfinite(v) for v in y):
            state["status"] = STATUS_NONFINITE
            return True
        if m >= threshold:
            state["status"] = STATUS_THRESHOLD
            ts.append(t)
            ys.append(y.copy())
            if store_dense:
                rcs.append(rc)
            return True
        k1, k2 = _integrals(y, B0, relativistic)
        d1 = abs(k1 - K1_0) / s1
        d2 = abs(k2 - K2_0) / s2
        if d1 > drift[0]:
            drift[0] = d1
        if d2 > drift[1]:
            drift[1] = d2
        if not math.isnan(C1):
            r = abs(y[5] - B0 - C1 * (y[6] - 1.0)) / max(1.0, abs(y[5]), abs(B0))
            if r > drift[2]:
                drift[2] = r
        if state["n"] % stride == 0 or m >= low or t == t_end:
            ts.append(t)
            ys.append(y.copy())
            if store_dense:
                rcs.append(rc)
        return False

    y_eval = None
    try:
        res = ode.solve(
            lambda t, y: system_rhs(y, B0, relativistic, rhs_sign),
            0.0, y0, t_end, rtol=rtol, atol=atol, h0=(h0 or None), max_steps=max_steps,
            t_eval=t_eval, dense=False, stride=max_steps + 1, step_callback=callback,
        )
        y_eval = res.y_eval
        nfev = res.nfev
        if res.status == "max_steps":
            state["status"] = STATUS_MAX_STEPS
    except ode.StepSizeUnderflow:
        state["status"] = STATUS_UNDERFLOW
        nfev = -1
    if t_eval is not None and y_eval is None:
        y_eval = np.full((len(t_eval), 7), np.nan)
    return {
        "t": np.array(ts),
        "y": np.array(ys),
        "rcont": np.array(rcs) if (store_dense and rcs) else None,
        "y_eval": y_eval,
        "status": state["status"],
        "drift": drift,
        "nsteps": state["n"],
        "nfev": nfev,
        "last_rc": state["last_rc"],
        "last_t_old": state["last_t_old"],
        "last_h": state["last_h"],
    }
