"""Adherence-aware solves: effective policies, surrogate MDPs, value iteration and LP export.

An agent shown recommendation ``pi_alg`` follows it with weight ``theta`` and
otherwise falls back on ``pi_base``. The adherence level can be a scalar, a
per-state vector or a per-state-action matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import (
    MdpInstance,
    SolveResult,
    StationaryPolicy,
    as_policy,
    batch_returns,
    evaluate_values,
    greedy_actions,
    polish_greedy,
    q_values,
    require_valid,
    solve_nominal,
    stopping_threshold,
    value_iterate,
)
from .errors import DimensionError, InvalidSpecError
from .lpformat import Constraint, LinearModel, write_model


class AdherenceKind(Enum):
    SCALAR = "scalar"
    PER_STATE = "per_state"
    PER_STATE_ACTION = "per_state_action"


@dataclass(frozen=True, eq=False)
class AdherenceSpec:
    """Adherence levels in [0, 1]; ``values`` is 0-d, ``(S,)`` or ``(S, A)`` by ``kind``."""

    kind: AdherenceKind
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        expected_ndim = {AdherenceKind.SCALAR: 0, AdherenceKind.PER_STATE: 1,
                         AdherenceKind.PER_STATE_ACTION: 2}[self.kind]
        if vals.ndim != expected_ndim:
            raise InvalidSpecError(f"{self.kind.value} adherence needs a {expected_ndim}-d array, "
                                   f"got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0) or np.any(vals > 1):
            raise InvalidSpecError(f"adherence levels must lie in [0, 1], got {vals.tolist()}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def scalar(cls, theta: float) -> "AdherenceSpec":
        return cls(AdherenceKind.SCALAR, theta)

    @classmethod
    def per_state(cls, thetas) -> "AdherenceSpec":
        return cls(AdherenceKind.PER_STATE, thetas)

    @classmethod
    def per_state_action(cls, thetas) -> "AdherenceSpec":
        return cls(AdherenceKind.PER_STATE_ACTION, thetas)

    @property
    def is_state_action(self) -> bool:
        return self.kind is AdherenceKind.PER_STATE_ACTION

    def state_levels(self, n_states: int) -> np.ndarray:
        """Per-state vector for scalar and per-state specs."""
        if self.kind is AdherenceKind.SCALAR:
            return np.full(n_states, float(self.values))
        if self.kind is AdherenceKind.PER_STATE:
            if self.values.shape != (n_states,):
                raise DimensionError(f"per-state adherence has {self.values.shape[0]} entries, "
                                     f"instance has {n_states} states")
            return np.array(self.values)
        raise InvalidSpecError("per-state-action adherence has no per-state vector")

    def state_action_levels(self, n_states: int, n_actions: int) -> np.ndarray:
        """Full ``(S, A)`` matrix of levels for any kind."""
        if self.kind is AdherenceKind.PER_STATE_ACTION:
            if self.values.shape != (n_states, n_actions):
                raise DimensionError(f"per-state-action adherence has shape {self.values.shape}, "
                                     f"expected {(n_states, n_actions)}")
            return np.array(self.values)
        return np.repeat(self.state_levels(n_states)[:, None], n_actions, axis=1)

    def __repr__(self):
        return f"AdherenceSpec.{self.kind.value}({self.values.tolist()!r})"


def as_spec(spec) -> AdherenceSpec:
    """Accept a spec, a float (scalar) or a 1-d/2-d array."""
    if isinstance(spec, AdherenceSpec):
        return spec
    arr = np.asarray(spec, dtype=float)
    kind = {0: AdherenceKind.SCALAR, 1: AdherenceKind.PER_STATE,
            2: AdherenceKind.PER_STATE_ACTION}.get(arr.ndim)
    if kind is None:
        raise InvalidSpecError(f"cannot interpret adherence of shape {arr.shape}")
    return AdherenceSpec(kind, arr)


def _base_actions(pi_base: StationaryPolicy) -> np.ndarray:
    if not pi_base.is_deterministic():
        raise InvalidSpecError("per-state-action adherence requires a deterministic baseline")
    return pi_base.actions()


def effective_policy(pi_alg, pi_base, spec) -> StationaryPolicy:
    """Policy actually executed when ``pi_alg`` is recommended over ``pi_base``.

    Scalar and per-state specs mix rows: ``theta_s pi_alg[s] + (1 - theta_s) pi_base[s]``.
    For per-state-action specs, a recommended non-baseline action ``a`` is taken
    with probability ``pi_alg[s, a] theta_sa``; the baseline action absorbs the rest.
    """
    pi_alg = as_policy(pi_alg)
    pi_base = as_policy(pi_base)
    spec = as_spec(spec)
    if pi_alg.probs.shape != pi_base.probs.shape:
        raise DimensionError(f"policy shapes differ: {pi_alg.probs.shape} vs {pi_base.probs.shape}")
    S, A = pi_alg.probs.shape
    if spec.is_state_action:
        base = _base_actions(pi_base)
        th = spec.state_action_levels(S, A)
        eff = pi_alg.probs * th
        rows = np.arange(S)
        eff[rows, base] = 0.0
        eff[rows, base] = 1.0 - eff.sum(axis=1)
        return StationaryPolicy(eff)
    th = spec.state_levels(S)[:, None]
    if np.all(th == 1.0):
        return pi_alg
    if np.all(th == 0.0):
        return pi_base
    return StationaryPolicy(th * pi_alg.probs + (1.0 - th) * pi_base.probs)


def _baseline_terms(inst: MdpInstance, pi_base: StationaryPolicy):
    """Baseline-induced chain rows ``Pb[s, s']`` and expected rewards ``rb[s]``."""
    Pb = np.einsum("sa,sat->st", pi_base.probs, inst.transitions)
    rb = np.einsum("sa,sa->s", pi_base.probs, inst.expected_rewards)
    return Pb, rb


def _surrogate_from(inst: MdpInstance, P_new: np.ndarray, r_new: np.ndarray) -> MdpInstance:
    # expected rewards replicated over next states keep the (S, A, S) layout
    rewards = np.repeat(r_new[:, :, None], inst.n_states, axis=2)
    return inst.replace(transitions=P_new, rewards=rewards)


def build_surrogate(inst: MdpInstance, pi_base, spec) -> MdpInstance:
    """Ordinary MDP whose optimal policies are the optimal recommendations.

    ``P'[s, a] = theta_s P[s, a] + (1 - theta_s) sum_b pi_base[s, b] P[s, b]``
    and likewise for expected rewards. Scalar and per-state specs only.
    """
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    spec = as_spec(spec)
    th = spec.state_levels(inst.n_states)
    Pb, rb = _baseline_terms(inst, pi_base)
    P_new = th[:, None, None] * inst.transitions + (1.0 - th)[:, None, None] * Pb[:, None, :]
    r_new = th[:, None] * inst.expected_rewards + (1.0 - th)[:, None] * rb[:, None]
    return _surrogate_from(inst, P_new, r_new)


def build_surrogate_state_action(inst: MdpInstance, pi_base, spec) -> MdpInstance:
    """Surrogate for per-state-action adherence with a deterministic baseline.

    ``P'[s, a] = theta_sa P[s, a] + (1 - theta_sa) P[s, base(s)]``, rewards alike.
    """
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    base = _base_actions(pi_base)
    th = as_spec(spec).state_action_levels(inst.n_states, inst.n_actions)
    rows = np.arange(inst.n_states)
    Pb = inst.transitions[rows, base]
    rb = inst.expected_rewards[rows, base]
    P_new = th[:, :, None] * inst.transitions + (1.0 - th)[:, :, None] * Pb[:, None, :]
    r_new = th * inst.expected_rewards + (1.0 - th) * rb[:, None]
    return _surrogate_from(inst, P_new, r_new)


def adherence_operator(inst: MdpInstance, pi_base, spec, v: np.ndarray) -> np.ndarray:
    """``f(v)[s] = theta_s max_a Q[s, a] + (1 - theta_s) sum_a pi_base[s, a] Q[s, a]``."""
    pi_base = as_policy(pi_base, inst)
    spec = as_spec(spec)
    if spec.is_state_action:
        return q_values(build_surrogate_state_action(inst, pi_base, spec), v).max(axis=1)
    th = spec.state_levels(inst.n_states)
    Q = q_values(inst, v)
    return th * Q.max(axis=1) + (1.0 - th) * np.einsum("sa,sa->s", pi_base.probs, Q)


def recommendation_scores(inst: MdpInstance, pi_base: StationaryPolicy, th: np.ndarray,
                          v: np.ndarray) -> np.ndarray:
    """Value of recommending each action: ``theta_s Q[s, a] + (1 - theta_s) T^base_s(v)``."""
    Q = q_values(inst, v)
    tb = np.einsum("sa,sa->s", pi_base.probs, Q)
    return th[:, None] * Q + (1.0 - th)[:, None] * tb[:, None]


def solve_adamdp(inst: MdpInstance, pi_base, spec, tol: float = 1e-8,
                 prefer=None) -> SolveResult:
    """Optimal deterministic recommendation under adherence ``spec``.

    Value-iterates ``f`` from zero until ``|v - f(v)|_inf <= tol (1 - discount) / (2 discount)``,
    extracts the greedy recommendation and refines it by exact evaluation until it
    is greedy for its own effective value function. Ties go to the lowest action
    index, or to the largest weight in ``prefer`` (an ``(S, A)`` matrix) first.
    The reported value and return are exact for the effective policy.

    Per-state-action specs are solved as the nominal problem on
    :func:`build_surrogate_state_action`.
    """
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    spec = as_spec(spec)
    pref = None if prefer is None else np.asarray(getattr(prefer, "probs", prefer), dtype=float)

    if spec.is_state_action:
        sur = solve_nominal(build_surrogate_state_action(inst, pi_base, spec), tol, prefer=pref)
        eff = effective_policy(sur.recommendation, pi_base, spec)
        value = evaluate_values(inst, eff.probs)
        return SolveResult(sur.recommendation, eff, value, float(inst.initial_dist @ value),
                           sur.iterations, sur.residual, sur.threshold, {"spec": spec})

    th = spec.state_levels(inst.n_states)
    eye = np.eye(inst.n_actions)
    v, iterations, residual = value_iterate(
        lambda w: adherence_operator(inst, pi_base, spec, w), inst.n_states, inst.discount, tol)
    actions = greedy_actions(recommendation_scores(inst, pi_base, th, v), pref)

    def mix(acts):
        return th[:, None] * eye[acts] + (1.0 - th)[:, None] * pi_base.probs

    actions, value = polish_greedy(inst, actions,
                                   lambda w: recommendation_scores(inst, pi_base, th, w),
                                   mix, pref)
    rec = StationaryPolicy(eye[actions])
    eff = effective_policy(rec, pi_base, spec)
    return SolveResult(rec, eff, value, float(inst.initial_dist @ value), iterations, residual,
                       stopping_threshold(tol, inst.discount), {"spec": spec})


def mixture_returns(inst: MdpInstance, recs: np.ndarray, pi_base, thetas,
                    chunk: int = 256) -> np.ndarray:
    """``R[k, j]`` = return of ``thetas[j] recs[k] + (1 - thetas[j]) pi_base``.

    ``recs`` is a ``(K, S, A)`` stack of recommendations; work is chunked over ``K``.
    """
    base = as_policy(pi_base, inst).probs
    th = np.asarray(thetas, dtype=float)[None, :, None, None]
    out = np.empty((len(recs), th.shape[1]))
    for i in range(0, len(recs), chunk):
        block = recs[i:i + chunk][:, None]
        out[i:i + chunk] = batch_returns(inst, th * block + (1.0 - th) * base)
    return out


def adamdp_lp_model(inst: MdpInstance, pi_base, spec) -> LinearModel:
    """LP whose optimum is the optimal adherence-aware return.

    ``min p0 . v`` subject to, for every ``(s, a)``,
    ``v_s >= theta_s P[s,a] (r + discount v) + (1 - theta_s) sum_b pi_base[s,b] P[s,b] (r + discount v)``.
    """
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    spec = as_spec(spec)
    th = spec.state_levels(inst.n_states)
    Pb, rb = _baseline_terms(inst, pi_base)
    lam = inst.discount
    names = [f"v_{s}" for s in range(inst.n_states)]
    model = LinearModel(objective=list(zip(names, inst.initial_dist.tolist())), free=names,
                        comment=f"adherence-aware MDP: {inst.n_states} states, "
                                f"{inst.n_actions} actions, discount {lam!r}")
    for s in range(inst.n_states):
        for a in range(inst.n_actions):
            row = th[s] * inst.transitions[s, a] + (1.0 - th[s]) * Pb[s]
            coeffs = -lam * row
            coeffs[s] += 1.0
            rhs = th[s] * inst.expected_rewards[s, a] + (1.0 - th[s]) * rb[s]
            model.constraints.append(
                Constraint(f"c_{s}_{a}", list(zip(names, coeffs.tolist())), ">=", float(rhs)))
    return model


def export_lp(inst: MdpInstance, pi_base, spec, sink) -> None:
    """Write the adherence-aware LP (``|S|`` free variables, ``|S||A|`` rows) in LP format."""
    write_model(adamdp_lp_model(inst, pi_base, spec), sink)
