"""Growing-mode rate λ across (ω, μ), from both discretizations.

The order-4 and order-2 operators are independent routes to λ; their
agreement under refinement is the convergence evidence.
"""

import argparse
import math

from expnls.grid import make_grid
from expnls.linop import Which, assemble
from expnls.model import ModelParams
from expnls.profile import SolverConfig, shoot_profile
from expnls.stability import growing_mode, growing_mode_from_operators


def rate(omega, mu, n, order, width=10.0):
    p = ModelParams(omega, mu)
    sol = shoot_profile(p, make_grid(width / math.sqrt(omega), n),
                        SolverConfig(order=order))
    if order == 4:
        return growing_mode(sol, l_check=()).lam
    op_p = assemble(sol, Which.PLUS, 0, order)
    op_m = assemble(sol, Which.MINUS, 0, order)
    return growing_mode_from_operators(op_p, op_m, kernel=sol.phi).lam


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omega", type=float, nargs="+", default=[1.0, 2.0])
    ap.add_argument("--mu", type=int, nargs="+", default=[0, 1])
    ap.add_argument("--n", type=int, nargs="+", default=[512, 1024])
    args = ap.parse_args()
    print(f"{'omega':>5} {'mu':>3} {'n':>6} {'lambda (o4)':>14} {'lambda (o2)':>14}")
    for om in args.omega:
        for mu in args.mu:
            for n in args.n:
                print(f"{om:5g} {mu:3d} {n:6d} {rate(om, mu, n, 4):14.6f} "
                      f"{rate(om, mu, n, 2):14.6f}")


if __name__ == "__main__":
    main()
