"""Finite discounted MDPs: representation, validation, policy evaluation, nominal solve.

Conventions used throughout the package:

* transitions ``P[s, a, s']`` and rewards ``r[s, a, s']`` are dense float arrays;
* a stationary policy is an ``(S, A)`` row-stochastic matrix;
* the return of a policy is ``p0 @ v`` where ``v`` is its value function.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionError, GuardExceededError, InvalidInstanceError

PROB_TOL = 1e-9
FIXED_POINT_TOL = 1e-10
TIE_RTOL = 1e-11
ENUMERATION_GUARD = 10**6


def _frozen_array(x, ndim: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MdpInstance:
    """A finite MDP ``(S, A, P, r, p0, discount)``.

    Construction only checks shapes; probabilistic invariants are reported by
    :func:`validate_instance` and enforced by the solvers.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    initial_dist: np.ndarray
    discount: float
    state_names: tuple[str, ...] | None = None
    action_names: tuple[str, ...] | None = None

    def __post_init__(self):
        P = _frozen_array(self.transitions, 3, "transitions")
        r = np.array(self.rewards, dtype=float)
        if r.ndim == 2:
            # state-action rewards are broadcast over the next state
            r = np.repeat(r[:, :, None], P.shape[2], axis=2)
        r = _frozen_array(r, 3, "rewards")
        p0 = _frozen_array(self.initial_dist, 1, "initial_dist")
        S, A, S2 = P.shape
        if S != S2:
            raise DimensionError(f"transitions must be (S, A, S), got {P.shape}")
        if r.shape != P.shape:
            raise DimensionError(f"rewards shape {r.shape} != transitions shape {P.shape}")
        if p0.shape != (S,):
            raise DimensionError(f"initial_dist must have length {S}, got {p0.shape}")
        if S == 0 or A == 0:
            raise DimensionError("an instance needs at least one state and one action")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "initial_dist", p0)
        object.__setattr__(self, "discount", float(self.discount))
        for attr, n in (("state_names", S), ("action_names", A)):
            names = getattr(self, attr)
            if names is not None:
                names = tuple(str(x) for x in names)
                if len(names) != n:
                    raise DimensionError(f"{attr} must have {n} entries, got {len(names)}")
                object.__setattr__(self, attr, names)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @cached_property
    def expected_rewards(self) -> np.ndarray:
        """``rbar[s, a] = P[s, a] . r[s, a]``."""
        out = np.einsum("sat,sat->sa", self.transitions, self.rewards)
        out.setflags(write=False)
        return out

    @property
    def reward_bound(self) -> float:
        """``max |r[s, a, s']|``."""
        return float(np.max(np.abs(self.rewards)))

    def state_label(self, s: int) -> str:
        return self.state_names[s] if self.state_names else str(s)

    def action_label(self, a: int) -> str:
        return self.action_names[a] if self.action_names else str(a)

    def replace(self, **changes) -> "MdpInstance":
        fields = dict(
            transitions=self.transitions,
            rewards=self.rewards,
            initial_dist=self.initial_dist,
            discount=self.discount,
            state_names=self.state_names,
            action_names=self.action_names,
        )
        fields.update(changes)
        return MdpInstance(**fields)


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Per-state action distribution ``probs[s, a]``."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen_array(self.probs, 2, "policy"))

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "StationaryPolicy":
        actions = np.asarray(actions, dtype=int)
        if np.any(actions < 0) or np.any(actions >= n_actions):
            raise DimensionError(f"action index out of range for {n_actions} actions: {actions}")
        return cls(np.eye(n_actions)[actions])

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "StationaryPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    def is_deterministic(self) -> bool:
        return bool(np.all(np.any(self.probs == 1.0, axis=1)))

    def actions(self) -> np.ndarray:
        """Chosen action per state; only meaningful for deterministic policies."""
        if not self.is_deterministic():
            raise ValueError("policy is randomized; it has no single action per state")
        return np.argmax(self.probs, axis=1)

    def violations(self) -> list[str]:
        out = []
        if not np.all(np.isfinite(self.probs)):
            out.append("policy has non-finite entries")
            return out
        for s in np.flatnonzero(np.any(self.probs < 0, axis=1)):
            out.append(f"policy row {s} has negative entries")
        sums = self.probs.sum(axis=1)
        for s in np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL):
            out.append(f"policy row {s} sums to {sums[s]!r}")
        return out

    def __eq__(self, other):
        if not isinstance(other, StationaryPolicy):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self):
        return hash((self.probs.shape, self.probs.tobytes()))

    def __repr__(self):
        if self.is_deterministic():
            return f"StationaryPolicy.deterministic({self.actions().tolist()}, {self.n_actions})"
        return f"StationaryPolicy({self.probs.tolist()})"


def as_policy(pi, inst: MdpInstance | None = None) -> StationaryPolicy:
    """Coerce a matrix or policy and check it against ``inst``'s dimensions."""
    if not isinstance(pi, StationaryPolicy):
        pi = StationaryPolicy(pi)
    if inst is not None and pi.probs.shape != (inst.n_states, inst.n_actions):
        raise DimensionError(
            f"policy shape {pi.probs.shape} does not match instance "
            f"({inst.n_states}, {inst.n_actions})"
        )
    bad = pi.violations()
    if bad:
        raise DimensionError("; ".join(bad))
    return pi


@dataclass(frozen=True)
class Violation:
    """One failed invariant: ``kind`` is a stable tag, ``location`` indexes the entry."""

    kind: str
    location: tuple
    magnitude: float
    message: str

    def __str__(self):
        return self.message


def validate_instance(inst: MdpInstance) -> list[Violation]:
    """Return every invariant violation of ``inst`` (empty when valid)."""
    out: list[Violation] = []
    P, r, p0 = inst.transitions, inst.rewards, inst.initial_dist

    if np.all(np.isnan(P)):
        out.append(Violation("required_external", (), math.nan,
                             "REQUIRED-EXTERNAL: transition probabilities have not been provided"))
    else:
        missing = np.argwhere(np.isnan(P).any(axis=2))
        for s, a in missing:
            out.append(Violation("required_external", (int(s), int(a)), math.nan,
                                 f"REQUIRED-EXTERNAL: transitions for (s={s}, a={a}) not provided"))
        filled = ~np.isnan(P).any(axis=2)
        if np.any(np.isinf(P)):
            out.append(Violation("non_finite_probability", (), math.inf,
                                 "transitions contain infinite entries"))
        for s, a, t in np.argwhere(P < 0):
            out.append(Violation("negative_probability", (int(s), int(a), int(t)), float(-P[s, a, t]),
                                 f"P[{s}][{a}][{t}] = {P[s, a, t]!r} is negative"))
        sums = P.sum(axis=2)
        for s, a in np.argwhere(filled & (np.abs(sums - 1.0) > PROB_TOL)):
            deficit = 1.0 - sums[s, a]
            out.append(Violation("transition_row_sum", (int(s), int(a)), float(deficit),
                                 f"P[{s}][{a}] sums to {sums[s, a]!r} (s={s}, a={a}, deficit {deficit:.12g})"))

    if not np.all(np.isfinite(r)):
        out.append(Violation("non_finite_reward", (), math.nan, "rewards contain non-finite entries"))

    if not np.all(np.isfinite(p0)):
        out.append(Violation("non_finite_initial", (), math.nan, "initial_dist has non-finite entries"))
    else:
        for s in np.flatnonzero(p0 < 0):
            out.append(Violation("negative_initial_prob", (int(s),), float(-p0[s]),
                                 f"p0[{s}] = {p0[s]!r} is negative"))
        total = float(p0.sum())
        if abs(total - 1.0) > PROB_TOL:
            out.append(Violation("initial_dist_sum", (), 1.0 - total,
                                 f"initial_dist sums to {total!r}"))

    lam = inst.discount
    if not (0.0 < lam < 1.0):
        out.append(Violation("discount_range", (), lam, f"discount not in (0,1): {lam!r}"))
    return out


def require_valid(inst: MdpInstance) -> None:
    bad = validate_instance(inst)
    if bad:
        raise InvalidInstanceError(bad)


# ---------------------------------------------------------------------------
# Bellman machinery


def q_values(inst: MdpInstance, v: np.ndarray) -> np.ndarray:
    """``Q[s, a] = P[s, a] . (r[s, a] + discount * v)``."""
    return inst.expected_rewards + inst.discount * (inst.transitions @ v)


def policy_matrices(inst: MdpInstance, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Markov chain ``P_pi[s, s']`` and reward vector ``r_pi[s]`` induced by ``probs``.

    ``probs`` may carry leading batch dimensions.
    """
    P_pi = np.einsum("...sa,sat->...st", probs, inst.transitions)
    r_pi = np.einsum("...sa,sa->...s", probs, inst.expected_rewards)
    return P_pi, r_pi


def bellman(inst: MdpInstance, v: np.ndarray) -> np.ndarray:
    """Classical optimality operator ``max_a Q[s, a]``."""
    return q_values(inst, v).max(axis=1)


def policy_operator(inst: MdpInstance, probs: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``T^pi(v)[s] = sum_a pi[s, a] Q[s, a]``."""
    return np.einsum("sa,sa->s", probs, q_values(inst, v))


def greedy_actions(scores: np.ndarray, prefer: np.ndarray | None = None,
                   rtol: float = TIE_RTOL) -> np.ndarray:
    """Row-wise argmax with deterministic tie-breaking.

    Actions within ``rtol * max(1, |row|)`` of the row maximum count as tied.
    Among tied actions the one with the largest ``prefer[s, a]`` wins, then the
    lowest index.
    """
    best = scores.max(axis=1, keepdims=True)
    scale = np.maximum(1.0, np.abs(scores).max(axis=1, keepdims=True))
    tied = scores >= best - rtol * scale
    if prefer is None:
        return np.argmax(tied, axis=1)
    key = np.where(tied, prefer, -np.inf)
    return np.argmax(key, axis=1)


def evaluate_values(inst: MdpInstance, probs: np.ndarray) -> np.ndarray:
    """Exact value functions by a dense linear solve; supports batched ``probs``."""
    P_pi, r_pi = policy_matrices(inst, probs)
    eye = np.eye(inst.n_states)
    return np.linalg.solve(eye - inst.discount * P_pi, r_pi[..., None])[..., 0]


def batch_returns(inst: MdpInstance, probs: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Returns of many policies at once; ``probs`` has shape ``(..., S, A)``."""
    probs = np.asarray(probs, dtype=float)
    lead = probs.shape[:-2]
    flat = probs.reshape((-1,) + probs.shape[-2:])
    out = np.empty(len(flat))
    for i in range(0, len(flat), chunk):
        out[i:i + chunk] = evaluate_values(inst, flat[i:i + chunk]) @ inst.initial_dist
    return out.reshape(lead)


def theta_lipschitz(inst: MdpInstance) -> float:
    """Bound on ``|dR/dtheta|`` for any mixture ``theta pi + (1 - theta) pi'``: ``2 r_max / (1 - discount)^2``."""
    return 2.0 * inst.reward_bound / (1.0 - inst.discount) ** 2


def evaluate_policy(inst: MdpInstance, pi, method: str = "direct") -> tuple[np.ndarray, float]:
    """Value function and return of a stationary policy.

    Parameters
    ----------
    inst : MdpInstance
    pi : StationaryPolicy or array_like
        ``(S, A)`` action distribution per state.
    method : {"direct", "iterative"}
        ``"direct"`` solves ``(I - discount P_pi) v = r_pi``; ``"iterative"``
        applies ``T^pi`` from zero until successive iterates differ by at most
        1e-10 in sup-norm.

    Returns
    -------
    values : ndarray of shape (S,)
    ret : float
        ``initial_dist @ values``.
    """
    require_valid(inst)
    pi = as_policy(pi, inst)
    if method == "direct":
        v = evaluate_values(inst, pi.probs)
    elif method == "iterative":
        P_pi, r_pi = policy_matrices(inst, pi.probs)
        v = np.zeros(inst.n_states)
        while True:
            nv = r_pi + inst.discount * (P_pi @ v)
            done = np.max(np.abs(nv - v)) <= FIXED_POINT_TOL
            v = nv
            if done:
                break
    else:
        raise ValueError(f"unknown evaluation method {method!r}")
    return v, float(inst.initial_dist @ v)


def stopping_threshold(tol: float, discount: float) -> float:
    """Residual at which value iteration yields a ``tol``-optimal greedy policy."""
    return tol * (1.0 - discount) / (2.0 * discount)


def value_iterate(operator, n_states: int, discount: float, tol: float,
                  max_iter: int = 1_000_000) -> tuple[np.ndarray, int, float]:
    """Iterate ``v <- operator(v)`` from zero until ``|v - operator(v)|_inf <= threshold``.

    Returns the last iterate, the iteration count and the final residual.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    threshold = stopping_threshold(tol, discount)
    v = np.zeros(n_states)
    for it in range(max_iter):
        fv = operator(v)
        residual = float(np.max(np.abs(fv - v)))
        if residual <= threshold:
            return v, it, residual
        v = fv
    raise RuntimeError(f"value iteration did not reach residual {threshold:g} in {max_iter} steps")


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Outcome of a solver.

    ``value`` is the exact value function of ``effective`` and
    ``expected_return = initial_dist @ value``; ``residual`` is the last
    value-iteration residual, at most ``threshold``.
    """

    recommendation: StationaryPolicy
    effective: StationaryPolicy
    value: np.ndarray
    expected_return: float
    iterations: int
    residual: float
    threshold: float
    extras: dict = field(default_factory=dict)


def polish_greedy(inst: MdpInstance, actions: np.ndarray, scores_of, mix_of,
                  prefer: np.ndarray | None = None, max_rounds: int = 1000):
    """Policy-iteration clean-up of a greedy policy extracted from value iteration.

    ``mix_of(actions)`` returns the effective ``(S, A)`` policy executed when
    ``actions`` is recommended; ``scores_of(v)`` returns per-action scores whose
    argmax defines greedy recommendations. Iterates evaluate/improve until the
    recommendation is greedy with respect to its own exact value function.
    """
    for _ in range(max_rounds):
        v = evaluate_values(inst, mix_of(actions))
        new = greedy_actions(scores_of(v), prefer)
        if np.array_equal(new, actions):
            return actions, v
        actions = new
    raise RuntimeError("greedy polishing did not stabilise")


def solve_nominal(inst: MdpInstance, tol: float = 1e-8, prefer=None) -> SolveResult:
    """Optimal deterministic stationary policy of ``inst`` by value iteration.

    Stops once ``|v - T(v)|_inf <= tol (1 - discount) / (2 discount)``. The greedy
    policy is then refined by exact evaluation until it is greedy with respect to
    its own value function, so the reported value and return are exact for the
    returned policy. Ties go to the lowest action index unless ``prefer`` (an
    ``(S, A)`` weight matrix) says otherwise.
    """
    require_valid(inst)
    v, iterations, residual = value_iterate(lambda w: bellman(inst, w), inst.n_states,
                                            inst.discount, tol)
    pref = None if prefer is None else np.asarray(getattr(prefer, "probs", prefer), dtype=float)
    eye = np.eye(inst.n_actions)
    actions = greedy_actions(q_values(inst, v), pref)
    actions, value = polish_greedy(inst, actions, lambda w: q_values(inst, w),
                                   lambda acts: eye[acts], pref)
    pi = StationaryPolicy(eye[actions])
    return SolveResult(pi, pi, value, float(inst.initial_dist @ value), iterations,
                       residual, stopping_threshold(tol, inst.discount))


# ---------------------------------------------------------------------------
# Enumeration helpers


def count_deterministic(n_states: int, n_actions: int) -> int:
    return n_actions ** n_states


def deterministic_policies(n_states: int, n_actions: int,
                           guard: int = ENUMERATION_GUARD) -> Iterator[tuple[int, ...]]:
    """Every deterministic policy as an action tuple, in lexicographic order."""
    total = count_deterministic(n_states, n_actions)
    if total > guard:
        raise GuardExceededError(
            f"{n_actions}^{n_states} = {total} deterministic policies exceed guard {guard}")
    return itertools.product(range(n_actions), repeat=n_states)


def deterministic_policy_array(n_states: int, n_actions: int,
                               guard: int = ENUMERATION_GUARD) -> np.ndarray:
    """All deterministic policies stacked as a ``(K, S, A)`` one-hot array."""
    acts = np.array(list(deterministic_policies(n_states, n_actions, guard)), dtype=int)
    return np.eye(n_actions)[acts.reshape(-1, n_states)]
