"""Recommendations robust to an uncertain adherence level or an uncertain baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adherence import AdherenceSpec, effective_policy, mixture_returns, solve_adamdp
from .core import (
    ENUMERATION_GUARD,
    MdpInstance,
    SolveResult,
    StationaryPolicy,
    as_policy,
    deterministic_policy_array,
    q_values,
    require_valid,
    stopping_threshold,
    theta_lipschitz,
    value_iterate,
)
from .errors import DimensionError, InvalidSpecError

TIE_ATOL = 1e-12


@dataclass(frozen=True)
class ThetaInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise InvalidSpecError(f"need 0 <= lo <= hi <= 1, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class RobustThetaCertificate:
    """Grid check of ``max_pi min_theta R``: ``ok`` iff it matches ``value`` within ``slack``."""

    grid: np.ndarray
    maxmin: float
    minmax: float
    value: float
    slack: float
    ok: bool


def robust_theta_solve(inst: MdpInstance, pi_base, interval: ThetaInterval, tol: float = 1e-8,
                       grid_size: int = 101, guard: int = ENUMERATION_GUARD,
                       certify: bool = True) -> tuple[SolveResult, RobustThetaCertificate | None]:
    """Best recommendation against the least favourable adherence in ``interval``.

    The answer is the optimal recommendation at ``interval.lo``. The certificate
    scores every deterministic recommendation on a uniform grid over the interval
    and compares ``max_pi min_theta`` with the returned value, allowing ``tol``
    plus the grid step times a Lipschitz bound of the return in ``theta``.
    """
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    result = solve_adamdp(inst, pi_base, AdherenceSpec.scalar(interval.lo), tol)
    if not certify:
        return result, None
    recs = deterministic_policy_array(inst.n_states, inst.n_actions, guard)
    grid = np.linspace(interval.lo, interval.hi, grid_size)
    R = mixture_returns(inst, recs, pi_base, grid)
    maxmin = float(R.min(axis=1).max())
    minmax = float(R.max(axis=0).min())
    step = (interval.hi - interval.lo) / max(grid_size - 1, 1)
    slack = tol + theta_lipschitz(inst) * step
    ok = abs(maxmin - result.expected_return) <= slack
    return result, RobustThetaCertificate(grid, maxmin, minmax, result.expected_return, slack, ok)


@dataclass(frozen=True, eq=False)
class BaselineAmbiguity:
    """Per-state sets of candidate baseline rows, given by their vertices.

    ``per_state_vertices[s]`` is a ``(k_s, A)`` array of distributions over actions.
    """

    per_state_vertices: tuple

    def __post_init__(self):
        verts = []
        for s, vs in enumerate(self.per_state_vertices):
            arr = np.array(vs, dtype=float)
            if arr.ndim == 1:
                arr = arr[None, :]
            if arr.ndim != 2 or arr.shape[0] == 0:
                raise InvalidSpecError(f"state {s} needs a nonempty list of vertices")
            if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-9):
                raise InvalidSpecError(f"state {s} has a vertex that is not a distribution")
            arr.setflags(write=False)
            verts.append(arr)
        if not verts:
            raise InvalidSpecError("ambiguity set needs at least one state")
        if len({v.shape[1] for v in verts}) != 1:
            raise DimensionError("vertices disagree on the number of actions")
        object.__setattr__(self, "per_state_vertices", tuple(verts))

    @classmethod
    def singleton(cls, pi_base) -> "BaselineAmbiguity":
        return cls([row[None, :] for row in as_policy(pi_base).probs])

    @classmethod
    def from_policies(cls, policies) -> "BaselineAmbiguity":
        """Per-state vertices taken from each policy's row (duplicates kept)."""
        mats = [as_policy(p).probs for p in policies]
        return cls([np.stack([m[s] for m in mats]) for s in range(mats[0].shape[0])])

    @property
    def n_states(self) -> int:
        return len(self.per_state_vertices)

    @property
    def n_actions(self) -> int:
        return self.per_state_vertices[0].shape[1]

    def worst_vertices(self, Q: np.ndarray, current: np.ndarray | None = None) -> np.ndarray:
        """Index of the vertex minimising ``b . Q[s]`` per state.

        ``current`` indices are kept unless another vertex is strictly better.
        """
        out = np.empty(self.n_states, dtype=int)
        for s, vs in enumerate(self.per_state_vertices):
            scores = vs @ Q[s]
            best = int(np.argmin(scores))
            if current is not None and scores[current[s]] <= scores[best] + TIE_ATOL * max(1.0, abs(scores[best])):
                best = int(current[s])
            out[s] = best
        return out

    def policy(self, indices) -> StationaryPolicy:
        return StationaryPolicy(np.stack([vs[i] for vs, i in zip(self.per_state_vertices, indices)]))

    def worst_values(self, Q: np.ndarray) -> np.ndarray:
        return np.array([float(np.min(vs @ Q[s])) for s, vs in enumerate(self.per_state_vertices)])


def robust_baseline_operator(inst: MdpInstance, ambiguity: BaselineAmbiguity, theta: float,
                             v: np.ndarray) -> np.ndarray:
    """``v_s <- max_pi min_b theta pi . Q_s + (1 - theta) b . Q_s``.

    The inner minimum does not involve ``pi``, so the maximum is ``theta max_a Q_sa``.
    """
    Q = q_values(inst, v)
    return theta * Q.max(axis=1) + (1.0 - theta) * ambiguity.worst_values(Q)


def robust_baseline_solve(inst: MdpInstance, ambiguity: BaselineAmbiguity, theta: float,
                          tol: float = 1e-8) -> SolveResult:
    """Best recommendation when each baseline row may be any point of its vertex hull.

    The per-state saddle problem separates: the recommendation part is linear in
    the recommended row and the baseline part does not depend on it, so a
    deterministic greedy recommendation is optimal and the adversary picks a
    vertex. After value iteration, the worst baseline is refined by alternating
    exact adherence-aware solves with worst-vertex updates; each round lowers the
    value, so the loop ends at the robust fixed point.

    ``extras["worst_baseline"]`` holds the least favourable baseline policy.
    """
    require_valid(inst)
    if (ambiguity.n_states, ambiguity.n_actions) != (inst.n_states, inst.n_actions):
        raise DimensionError("ambiguity set does not match the instance dimensions")
    if not 0.0 <= theta <= 1.0:
        raise InvalidSpecError(f"theta must lie in [0, 1], got {theta!r}")
    spec = AdherenceSpec.scalar(theta)
    v, iterations, residual = value_iterate(
        lambda w: robust_baseline_operator(inst, ambiguity, theta, w),
        inst.n_states, inst.discount, tol)
    idx = ambiguity.worst_vertices(q_values(inst, v))
    seen = set()
    while True:
        base = ambiguity.policy(idx)
        res = solve_adamdp(inst, base, spec, tol)
        new = ambiguity.worst_vertices(q_values(inst, res.value), current=idx)
        key = tuple(new.tolist())
        if np.array_equal(new, idx) or key in seen:
            break
        seen.add(tuple(idx.tolist()))
        idx = new
    eff = effective_policy(res.recommendation, base, spec)
    return SolveResult(res.recommendation, eff, res.value, res.expected_return, iterations,
                       residual, stopping_threshold(tol, inst.discount),
                       {"worst_baseline": base, "spec": spec})
