"""Scaling-family table: conditions, K-set and outcome per λ.

    python scripts/blowup_table.py --omega 1 --mu 0 1 --lambdas 0.95 1.02 1.05 1.10
"""

import argparse
import math

from expnls.dynamics import DynamicsConfig, blowup_experiment
from expnls.grid import make_grid
from expnls.model import ModelParams
from expnls.profile import shoot_profile


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omega", type=float, default=1.0)
    ap.add_argument("--mu", type=int, nargs="+", default=[0, 1])
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.95, 1.02, 1.05, 1.10])
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--t-end", type=float, default=2.0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cfg = DynamicsConfig(t_end=args.t_end)
    for mu in args.mu:
        sol = shoot_profile(ModelParams(args.omega, mu),
                            make_grid(20.0 / math.sqrt(args.omega), args.n))
        print(f"ω={args.omega:g} μ={mu}  S(φ)={sol.action:.6f}  ‖∇φ‖²={sol.grad_norm_sq:.6f}")
        print(f"{'λ':>6} {'E':>10} {'I':>10} {'S':>10} {'kset':>8} {'outcome':>15} {'t*':>8}")
        for r in blowup_experiment(sol, args.lambdas, cfg, workers=args.workers):
            tb = f"{r.blowup_time_estimate:.4f}" if r.blowup_time_estimate else "-"
            print(f"{r.lam:6.3f} {r.energy:10.5f} {r.virial_i:10.5f} {r.action:10.5f} "
                  f"{r.kset:>8} {r.outcome:>15} {tb:>8}")


if __name__ == "__main__":
    main()
