"""Walk through the five-state toy chain where ignoring partial adherence backfires.

Run with ``python3 demos/toy_walkthrough.py``.
"""

import numpy as np

from adamdp import (
    AdherenceSpec,
    check_saddle,
    deterioration_curve,
    evaluate_policy,
    solve_adamdp,
    theta_sweep,
    toy_counterexample,
)
from adamdp.adherence import effective_policy
from adamdp.instances import toy_thresholds

lam = 0.5
bundle = toy_counterexample(lam, epsilon=-1)
inst = bundle.instance
base, alg = bundle.baseline("base"), bundle.baseline("alg")

# Returns of the two fixed policies
print("R(base) =", evaluate_policy(inst, base)[1])
print("R(alg)  =", evaluate_policy(inst, alg)[1])
theta_tilde, theta_bar = toy_thresholds(lam)
print(f"theta_tilde = {theta_tilde:.4f}, theta_bar = {theta_bar:.4f}")

# Following alg only partially is worse than never following it
print("\ntheta   R(eff(alg))   optimal")
for theta in np.linspace(0, 1, 11):
    r_alg = evaluate_policy(inst, effective_policy(alg, base, theta))[1]
    r_opt = solve_adamdp(inst, base, AdherenceSpec.scalar(theta)).expected_return
    print(f"{theta:5.2f}   {r_alg:11.5f}   {r_opt:7.5f}")

# The optimal recommendation switches once, at theta_bar
sweep = theta_sweep(inst, base)
print("\nbreakpoints:", sweep.breakpoints)
for seg in sweep.segments:
    print(f"  [{seg.lo:.6f}, {seg.hi:.6f}] actions {seg.recommendation.actions()}")
print("structural checks:", sweep.checks)

# Relative loss of recommending the full-adherence optimum
grid = np.array([0.0, 0.25, 0.5, 0.75, 0.9, 1.0])
print("\ndeterioration:", np.round(deterioration_curve(inst, base, grid), 4))

# The optimal recommendation is an equilibrium against adversarial adherence
rep = check_saddle(inst, base, 0.95)
for name, value in rep.rows():
    print(f"  {name:28s} {value:.8f}")
