"""Random, adversarial and budgeted adherence on the toy chain, then robust variants.

Run with ``python3 demos/adversaries_and_robustness.py``.
"""

from adamdp import (
    AdherenceDistribution,
    AdversaryKind,
    AdversaryModel,
    BaselineAmbiguity,
    CardinalityBudget,
    ThetaInterval,
    adversary_best_response,
    evaluate_constrained,
    robust_baseline_solve,
    robust_theta_solve,
    simulate_random_adherence,
    toy_counterexample,
)

bundle = toy_counterexample(0.5, epsilon=-1)
inst = bundle.instance
base, alg, star = (bundle.baseline(n) for n in ("base", "alg", "star"))

# Random adherence: the mean return matches the deterministic mixture (0.275)
for kind in AdherenceDistribution.KINDS:
    rep = simulate_random_adherence(inst, alg, base, AdherenceDistribution(kind, 0.5),
                                    horizon=50, trials=50_000, seed=1)
    print(f"{kind:9s} mean {rep.mean:.4f} +/- {rep.std_error:.4f}")

# Adversarial adherence in [theta, 1]
for kind in (AdversaryKind.UNCONSTRAINED, AdversaryKind.TIME_INVARIANT):
    u, worst = adversary_best_response(inst, alg, base, AdversaryModel(kind, 0.5))
    print(f"{kind.value:15s} worst return {worst:.5f} with u = {u.round(3)}")

# At most k states adhere, chosen adversarially
for k in range(4):
    u, worst = evaluate_constrained(inst, alg, base, CardinalityBudget(k))
    print(f"k = {k}: adhering {u}, worst return {worst:.5f}")

# Uncertain adherence level
res, cert = robust_theta_solve(inst, base, ThetaInterval(0.85, 1.0))
print("robust over [0.85, 1]:", res.recommendation.actions(), f"return {res.expected_return:.5f}",
      "certified" if cert.ok else "not certified")

# Uncertain baseline: either base or star
amb = BaselineAmbiguity.from_policies([base, star])
res = robust_baseline_solve(inst, amb, 0.5)
print("robust baseline:", res.recommendation.actions(), f"return {res.expected_return:.5f}")
