"""Time the compiled characteristic kernel against the pure-Python fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--horizon 200] [--repeat 3]``
"""

import argparse
import math
import time

import numpy as np

from coldwave import _kernels_py
from coldwave.core import small_perturbation_data

try:
    from coldwave import _kernels as compiled
except ImportError:
    compiled = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=200.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--b0", type=float, default=1.0)
    args = ap.parse_args()

    y0 = small_perturbation_data(0.1, args.b0).initial_vector(0.3)
    run = lambda mod: mod.integrate_characteristic(y0, args.b0, True, args.horizon, 1e-10, 1e-12, 1e6)

    t_py, r_py = best_of(lambda: run(_kernels_py), args.repeat)
    print(f"horizon {args.horizon:g} ({args.horizon / (2 * math.pi / math.sqrt(1 + args.b0**2)):.0f} periods), "
          f"{r_py['nsteps']} steps")
    print(f"python  {t_py * 1e3:9.2f} ms  ({t_py / r_py['nsteps'] * 1e6:.2f} us/step)")
    if compiled is None:
        print("cython  not built (install without COLDWAVE_NO_EXT to compile it)")
        return
    t_cy, r_cy = best_of(lambda: run(compiled), args.repeat)
    same = np.array_equal(r_py["y"], r_cy["y"])
    print(f"cython  {t_cy * 1e3:9.2f} ms  ({t_cy / r_cy['nsteps'] * 1e6:.2f} us/step)")
    print(f"speed-up {t_py / t_cy:.0f}x, identical trajectories: {same}")


if __name__ == "__main__":
    main()
