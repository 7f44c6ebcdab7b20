"""Compare optimal and naive recommendations on random instances.

For each instance the naive recommendation is the nominal optimum; the
script reports the largest relative loss over a grid of adherence levels and
the number of distinct optimal recommendations found by the sweep.

Run with ``python3 demos/random_instance_study.py``.
"""

import numpy as np

from adamdp import random_instance, random_policy, theta_sweep

rng = np.random.default_rng(2024)
rows = []
for trial in range(10):
    S, A = int(rng.integers(3, 7)), int(rng.integers(2, 4))
    inst = random_instance(rng, S, A)
    base = random_policy(rng, S, A, deterministic=True)
    sweep = theta_sweep(inst, base, grid_size=51)
    det = sweep.deterioration
    worst = int(np.nanargmax(det))
    rows.append((trial, S, A, inst.discount, len(sweep.segments), det[worst], sweep.grid[worst],
                 all(sweep.checks.values())))

print("trial  S  A  discount  segments  max_loss  at_theta  checks")
for trial, S, A, lam, nseg, loss, at, ok in rows:
    print(f"{trial:5d} {S:2d} {A:2d}  {lam:8.4f}  {nseg:8d}  {loss:8.4%}  {at:8.2f}  {ok}")
