"""Compare the compiled kernel core against the pure-Python fallback.

Usage: python benchmarks/bench_backends.py [--quick]

Times the hot kernels on representative workloads (right-hand side and
Jacobian evaluation, trajectory integration, tangent propagation for
Lyapunov estimates, variational flow for monodromy work) and reports the
speedup plus the agreement between the two implementations.
"""

import argparse
import time

import numpy as np

from amocbox import model
from amocbox._kernels import _fallback

try:
    from amocbox._kernels import _core
except ImportError:
    _core = None

X0 = np.array([1.0, 0.0, 0.0, 0.5])


def timeit(fn, min_time=0.2):
    n, total = 0, 0.0
    fn()  # warm up
    while total < min_time:
        t0 = time.perf_counter()
        fn()
        total += time.perf_counter() - t0
        n += 1
    return total / n


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true",
                    help="shorter workloads (fallback is slow)")
    args = ap.parse_args()

    if _core is None:
        raise SystemExit("compiled core not built; nothing to compare")

    p = model.default_params(mu=-2.1086e-3, eta=-3.99)
    par = p.pack()
    t_int = 2e3 if args.quick else 2e4
    t_lyap = 1e3 if args.quick else 1e4
    t_var = 1e3 if args.quick else 5e3
    v0 = np.array([0.5, 0.5, 0.5, 0.5])

    cases = {
        "rhs (1000x)": lambda k: [k.rhs(X0, par) for _ in range(1000)],
        "jac (1000x)": lambda k: [k.jac(X0, par) for _ in range(1000)],
        f"flow_to {t_int:g} units": lambda k: k.flow_to(
            X0, par, 0.0, t_int, 1e-8, 1e-11, 10.0, 10**8),
        f"lyap_run {t_lyap:g} units": lambda k: k.lyap_run(
            X0, v0, par, t_lyap, 100.0, 1e-8, 1e-11, 10.0, 10**8),
        f"flow_var {t_var:g} units": lambda k: k.flow_var(
            X0, par, t_var, 1e-10, 1e-12, 10.0, 10**8, True),
    }

    print(f"{'case':<24} {'compiled':>12} {'python':>12} {'speedup':>9}")
    for name, fn in cases.items():
        tc = timeit(lambda: fn(_core))
        tp = timeit(lambda: fn(_fallback))
        print(f"{name:<24} {tc * 1e3:>10.2f}ms {tp * 1e3:>10.2f}ms "
              f"{tp / tc:>8.1f}x")

    # agreement on a shared workload
    end_c = _core.flow_to(X0, par, 0.0, t_int, 1e-10, 1e-12, 10.0, 10**8)[2]
    end_p = _fallback.flow_to(X0, par, 0.0, t_int, 1e-10, 1e-12, 10.0, 10**8)[2]
    print(f"\nendpoint agreement after {t_int:g} units: "
          f"max |diff| = {np.max(np.abs(end_c - end_p)):.3e}")


if __name__ == "__main__":
    main()
