"""Compiled vs NumPy kernels: Lindblad RK4 steps and the moment-equation integrator.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from optocool import _fallback
from optocool import covariance as cov
from optocool import kernels
from optocool.params import ReducedParams


def lindblad_case(dim_a, dim_b):
    rng = np.random.default_rng(0)
    n = dim_a * dim_b
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = x @ x.conj().T
    rho /= np.trace(rho).real
    return rho, (dim_a, dim_b, -1.0, 0.1, 0.05, 1e-5, 0.5, 0.01)


def dopri_case():
    rp = ReducedParams(kappa=0.05, gamma=1e-5, g_eff=0.2, n_th=1e3)
    A, b = cov.generator(rp)
    y0 = cov.MomentState.thermal(rp.n_th).to_vector()
    t_out = np.linspace(0.0, 500.0, 1001)
    return (A, b, y0, 0.0, t_out, cov.RTOL, cov.ATOL, cov.step_cap(rp), cov.H_MIN)


def best(func, repeat):
    return min(timeit.repeat(func, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    backends = {"numpy": _fallback}
    if kernels.compiled_backend is not None:
        backends["compiled"] = kernels.compiled_backend
    else:
        print("compiled extension not available; timing the NumPy kernels only")

    print(f"{'kernel':<28}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for dims, steps in (((10, 20), 20), ((20, 40), 5)):
        rho, extra = lindblad_case(*dims)
        times = {name: best(lambda m=m: m.lindblad_rk4(rho.copy(), *extra, steps), args.repeat) / steps
                 for name, m in backends.items()}
        report(f"lindblad rk4 step {dims[0]}x{dims[1]}", times)
    case = dopri_case()
    times = {name: best(lambda m=m: m.dopri_linear(*case), args.repeat) for name, m in backends.items()}
    report("dopri 0..500 (G=0.2)", times)


def report(label, times):
    cells = "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
    speed = times["numpy"] / times["compiled"] if "compiled" in times else float("nan")
    print(f"{label:<28}{cells}{speed:>9.1f}x")


if __name__ == "__main__":
    main()
