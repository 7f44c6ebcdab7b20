"""Adversary limited to a budget of adhering states: exhaustive oracle and MIP export."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ENUMERATION_GUARD,
    MdpInstance,
    as_policy,
    batch_returns,
    require_valid,
)
from .errors import GuardExceededError, InvalidSpecError
from .lpformat import Constraint, LinearModel, write_model

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CardinalityBudget:
    """At most ``k`` states in which the agent follows the recommendation."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise InvalidSpecError(f"budget must be a non-negative integer, got {self.k!r}")

    def check(self, n_states: int) -> None:
        if self.k > n_states:
            raise InvalidSpecError(f"budget {self.k} exceeds the number of states {n_states}")


def count_subsets(n_states: int, k: int) -> int:
    return sum(math.comb(n_states, j) for j in range(min(k, n_states) + 1))


def adherence_patterns(n_states: int, k: int, guard: int = ENUMERATION_GUARD) -> np.ndarray:
    """All binary ``u`` with ``sum(u) <= k``, in lexicographic order, as a ``(K, S)`` array."""
    total = count_subsets(n_states, k)
    if total > guard:
        raise GuardExceededError(f"{total} adherence patterns exceed guard {guard}")
    pats = [u for u in itertools.product((0, 1), repeat=n_states) if sum(u) <= k]
    return np.array(pats, dtype=int).reshape(-1, n_states)


def evaluate_constrained(inst: MdpInstance, pi_alg, pi_base, budget: CardinalityBudget,
                         guard: int = ENUMERATION_GUARD) -> tuple[np.ndarray, float]:
    """Worst return when an adversary picks up to ``k`` states that follow ``pi_alg``.

    Every binary ``u`` with ``sum(u) <= k`` is scored by exact evaluation of
    ``u_s pi_alg[s] + (1 - u_s) pi_base[s]``; among (numerically) tied minima the
    lexicographically smallest ``u`` is returned.
    """
    require_valid(inst)
    budget.check(inst.n_states)
    alg = as_policy(pi_alg, inst).probs
    base = as_policy(pi_base, inst).probs
    pats = adherence_patterns(inst.n_states, budget.k, guard)
    u = pats[:, :, None].astype(float)
    returns = batch_returns(inst, u * alg + (1.0 - u) * base)
    best = returns.min()
    idx = int(np.flatnonzero(returns <= best + TIE_RTOL * max(1.0, abs(best)))[0])
    return pats[idx], float(returns[idx])


def constrained_mip_model(inst: MdpInstance, pi_alg, pi_base, budget: CardinalityBudget) -> LinearModel:
    """Mixed-integer model of the budgeted adversary.

    With ``R = r_max / (1 - discount)``, ``D = sum_a (pi_alg - pi_base)[s, a] P[s, a]``
    and baseline/recommendation expected rewards ``rb``/``ra``::

        min  p0 . v
        v_s >= discount z_s + rb_s + u_s (ra_s - rb_s) + discount Pb_s . v
        -2R (1 - u_s) <= z_s - D_s . v <= 2R (1 - u_s)
        -R u_s <= z_s <= 2R u_s
        sum_s u_s <= k,   u binary,   v, z free

    The bounds on ``z`` presume non-negative rewards.
    """
    require_valid(inst)
    budget.check(inst.n_states)
    alg = as_policy(pi_alg, inst).probs
    base = as_policy(pi_base, inst).probs
    S, lam = inst.n_states, inst.discount
    big = inst.reward_bound / (1.0 - lam)
    Pb = np.einsum("sa,sat->st", base, inst.transitions)
    D = np.einsum("sa,sat->st", alg - base, inst.transitions)
    rb = np.einsum("sa,sa->s", base, inst.expected_rewards)
    ra = np.einsum("sa,sa->s", alg, inst.expected_rewards)
    v = [f"v_{s}" for s in range(S)]
    z = [f"z_{s}" for s in range(S)]
    u = [f"u_{s}" for s in range(S)]
    model = LinearModel(objective=list(zip(v, inst.initial_dist.tolist())), free=v + z, binaries=u,
                        comment=f"budgeted adversarial adherence: {S} states, k = {budget.k}")
    cons = model.constraints
    for s in range(S):
        coef = -lam * Pb[s]
        coef[s] += 1.0
        terms = list(zip(v, coef.tolist())) + [(z[s], -lam), (u[s], -(ra[s] - rb[s]))]
        cons.append(Constraint(f"value_{s}", terms, ">=", float(rb[s])))
    for s in range(S):
        band = [(z[s], 1.0)] + list(zip(v, (-D[s]).tolist()))
        cons.append(Constraint(f"band_lo_{s}", band + [(u[s], -2.0 * big)], ">=", -2.0 * big))
        cons.append(Constraint(f"band_hi_{s}", band + [(u[s], 2.0 * big)], "<=", 2.0 * big))
    for s in range(S):
        cons.append(Constraint(f"zlo_{s}", [(z[s], 1.0), (u[s], big)], ">=", 0.0))
        cons.append(Constraint(f"zhi_{s}", [(z[s], 1.0), (u[s], -2.0 * big)], "<=", 0.0))
    cons.append(Constraint("budget", [(name, 1.0) for name in u], "<=", float(budget.k)))
    return model


def export_mip(inst: MdpInstance, pi_alg, pi_base, budget: CardinalityBudget, sink) -> None:
    """Write :func:`constrained_mip_model` in LP format to a path or text stream."""
    write_model(constrained_mip_model(inst, pi_alg, pi_base, budget), sink)
