"""Adversarial and random adherence: best responses, saddle checks and Monte Carlo."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .adherence import AdherenceSpec, mixture_returns, recommendation_scores, solve_adamdp
from .core import (
    ENUMERATION_GUARD,
    MdpInstance,
    StationaryPolicy,
    as_policy,
    deterministic_policy_array,
    evaluate_values,
    greedy_actions,
    policy_operator,
    q_values,
    require_valid,
    theta_lipschitz,
    value_iterate,
)
from .errors import InvalidSpecError

TIE_RTOL = 1e-11


class AdversaryKind(Enum):
    UNCONSTRAINED = "unconstrained"
    TIME_INVARIANT = "time_invariant"
    STATE_INVARIANT = "state_invariant"
    TIME_STATE_INVARIANT = "time_state_invariant"


@dataclass(frozen=True)
class AdversaryModel:
    """An adversary choosing adherence weights in ``[theta, 1]``.

    ``UNCONSTRAINED`` picks ``u[s, t]`` freely, ``TIME_INVARIANT`` picks ``u[s]``,
    ``STATE_INVARIANT`` picks ``u[t]`` and ``TIME_STATE_INVARIANT`` a single ``u``.
    """

    kind: AdversaryKind
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidSpecError(f"theta must lie in [0, 1], got {self.theta!r}")


def _mixture(u: np.ndarray, alg: np.ndarray, base: np.ndarray) -> np.ndarray:
    return u[:, None] * alg + (1.0 - u[:, None]) * base


def _worst_u(inst, alg, base, theta, v, current=None):
    t_alg = policy_operator(inst, alg, v)
    t_base = policy_operator(inst, base, v)
    low = theta * t_alg + (1.0 - theta) * t_base
    scale = np.maximum(1.0, np.maximum(np.abs(low), np.abs(t_alg)))
    tied = np.abs(low - t_alg) <= TIE_RTOL * scale
    u = np.where(low <= t_alg, theta, 1.0)
    if current is not None:
        u = np.where(tied, current, u)
    else:
        u = np.where(tied, theta, u)
    return u


def adversary_best_response(inst: MdpInstance, pi_alg, pi_base, model: AdversaryModel,
                            tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Least favourable adherence weights against a fixed recommendation.

    Iterates ``v_s <- min_{u in [theta, 1]} u T^alg_s(v) + (1 - u) T^base_s(v)``;
    the objective is linear in ``u`` so only ``u in {theta, 1}`` is checked, ties
    going to ``theta``. The resulting stationary ``u`` is refined by exact
    evaluation until it is a best response to its own value function. A
    stationary adversary is as strong as a time-varying one here, so the routine
    serves both the unconstrained and the time-invariant model.

    Returns
    -------
    worst_u : ndarray of shape (S,)
    worst_return : float
        Exact return of the effective policy under ``worst_u``.
    """
    if model.kind not in (AdversaryKind.UNCONSTRAINED, AdversaryKind.TIME_INVARIANT):
        raise InvalidSpecError(f"{model.kind.value} adversaries are checked by check_saddle")
    require_valid(inst)
    alg = as_policy(pi_alg, inst).probs
    base = as_policy(pi_base, inst).probs
    theta = model.theta

    def op(v):
        t_alg = policy_operator(inst, alg, v)
        t_base = policy_operator(inst, base, v)
        return np.minimum(theta * t_alg + (1.0 - theta) * t_base, t_alg)

    v, _, _ = value_iterate(op, inst.n_states, inst.discount, tol)
    u = _worst_u(inst, alg, base, theta, v)
    for _ in range(1000):
        value = evaluate_values(inst, _mixture(u, alg, base))
        new = _worst_u(inst, alg, base, theta, value, current=u)
        if np.array_equal(new, u):
            break
        u = new
    else:
        raise RuntimeError("adversary refinement did not stabilise")
    return u, float(inst.initial_dist @ value)


@dataclass(frozen=True, eq=False)
class SaddleReport:
    """Equilibrium quantities at the optimal recommendation for one ``theta``.

    ``worst_u_*`` and ``worst_return_*`` come from :func:`adversary_best_response`
    for the unconstrained and time-invariant adversaries; ``maxmin`` and ``minmax``
    are grid estimates over a single scalar ``u in [theta, 1]``.
    """

    theta: float
    recommendation: StationaryPolicy
    optimal_return: float
    worst_u_unconstrained: np.ndarray
    worst_return_unconstrained: float
    worst_u_time_invariant: np.ndarray
    worst_return_time_invariant: float
    maxmin: float
    minmax: float
    slack: float
    tol: float

    @property
    def u_is_theta(self) -> bool:
        return bool(np.all(np.abs(self.worst_u_unconstrained - self.theta) <= self.tol)
                    and np.all(np.abs(self.worst_u_time_invariant - self.theta) <= self.tol))

    @property
    def returns_match(self) -> bool:
        return (abs(self.worst_return_unconstrained - self.optimal_return) <= self.tol
                and abs(self.worst_return_time_invariant - self.optimal_return) <= self.tol)

    @property
    def scalar_game_match(self) -> bool:
        return (abs(self.maxmin - self.optimal_return) <= self.slack
                and abs(self.minmax - self.optimal_return) <= self.slack)

    @property
    def ok(self) -> bool:
        return self.u_is_theta and self.returns_match and self.scalar_game_match

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("theta", self.theta),
            ("optimal_return", self.optimal_return),
            ("worst_return_unconstrained", self.worst_return_unconstrained),
            ("worst_return_time_invariant", self.worst_return_time_invariant),
            ("maxmin_scalar", self.maxmin),
            ("minmax_scalar", self.minmax),
            ("slack", self.slack),
            ("ok", float(self.ok)),
        ]


def check_saddle(inst: MdpInstance, pi_base, theta: float, tol: float = 1e-6,
                 grid_size: int = 1001, guard: int = ENUMERATION_GUARD) -> SaddleReport:
    """Check that the optimal recommendation is an equilibrium against adversarial adherence.

    Computes the optimal recommendation at ``theta``, the best responses of the
    unconstrained and time-invariant adversaries to it, and, over every
    deterministic recommendation and a ``grid_size`` grid of scalar ``u`` in
    ``[theta, 1]``, both ``max_pi min_u`` and ``min_u max_pi``. The scalar game is
    compared with slack ``tol + L * step`` where ``L`` bounds ``|dR/du|``.
    """
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    recs = deterministic_policy_array(inst.n_states, inst.n_actions, guard)
    opt = solve_adamdp(inst, pi_base, AdherenceSpec.scalar(theta), min(tol, 1e-8))
    # Among equally good recommendations take one greedy for Q itself; at theta = 0
    # every recommendation ties, but only these leave the adversary nothing to exploit.
    scores = recommendation_scores(inst, pi_base, np.full(inst.n_states, float(theta)), opt.value)
    rec = StationaryPolicy(np.eye(inst.n_actions)[greedy_actions(scores, q_values(inst, opt.value))])
    responses = {
        kind: adversary_best_response(inst, rec, pi_base,
                                      AdversaryModel(kind, theta), min(tol, 1e-8))
        for kind in (AdversaryKind.UNCONSTRAINED, AdversaryKind.TIME_INVARIANT)
    }
    grid = np.linspace(theta, 1.0, grid_size)
    R = mixture_returns(inst, recs, pi_base, grid)
    step = (1.0 - theta) / max(grid_size - 1, 1)
    u_inf, r_inf = responses[AdversaryKind.UNCONSTRAINED]
    u_one, r_one = responses[AdversaryKind.TIME_INVARIANT]
    return SaddleReport(
        theta=float(theta), recommendation=rec,
        optimal_return=opt.expected_return,
        worst_u_unconstrained=u_inf, worst_return_unconstrained=r_inf,
        worst_u_time_invariant=u_one, worst_return_time_invariant=r_one,
        maxmin=float(R.min(axis=1).max()), minmax=float(R.max(axis=0).min()),
        slack=tol + theta_lipschitz(inst) * step, tol=tol)


# ---------------------------------------------------------------------------
# Random adherence


@dataclass(frozen=True)
class AdherenceDistribution:
    """Law of the per-period adherence weight, with mean ``theta``.

    ``"bernoulli"`` draws 0 or 1, ``"uniform"`` draws from
    ``[max(0, 2 theta - 1), min(1, 2 theta)]`` and ``"constant"`` always yields ``theta``.
    """

    kind: str
    theta: float

    KINDS = ("bernoulli", "uniform", "constant")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidSpecError(f"unknown adherence distribution {self.kind!r}; "
                                   f"expected one of {self.KINDS}")
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidSpecError(f"theta must lie in [0, 1], got {self.theta!r}")

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "bernoulli":
            return 0.0, 1.0
        if self.kind == "uniform":
            return max(0.0, 2.0 * self.theta - 1.0), min(1.0, 2.0 * self.theta)
        return self.theta, self.theta

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "bernoulli":
            return (rng.random(n) < self.theta).astype(float)
        if self.kind == "uniform":
            lo, hi = self.support
            return rng.uniform(lo, hi, n)
        return np.full(n, self.theta)


@dataclass(frozen=True)
class McReport:
    mean: float
    std_error: float
    trials: int
    horizon: int
    seed: int
    truncation: float

    def rows(self) -> list[tuple[str, float]]:
        return [("mean", self.mean), ("std_error", self.std_error), ("trials", self.trials),
                ("horizon", self.horizon), ("seed", self.seed), ("truncation", self.truncation)]


MC_CHUNK = 1 << 14


def default_horizon(inst: MdpInstance, budget: float = 1e-6) -> int:
    """Smallest ``H`` with ``discount**H * r_max / (1 - discount) <= budget * max(1, r_max / (1 - discount))``."""
    scale = inst.reward_bound / (1.0 - inst.discount)
    if scale == 0.0:
        return 1
    target = budget * max(1.0, scale)
    return max(1, math.ceil(math.log(target / scale) / math.log(inst.discount)))


def _simulate_chunk(inst, alg, base, dist, horizon, n, rng):
    cum_p = np.cumsum(inst.transitions, axis=2)
    S, A = alg.shape
    state = np.minimum((rng.random(n)[:, None] > np.cumsum(inst.initial_dist)).sum(axis=1), S - 1)
    total = np.zeros(n)
    disc = 1.0
    for _ in range(horizon):
        u = dist.sample(rng, n)
        probs = u[:, None] * alg[state] + (1.0 - u[:, None]) * base[state]
        action = np.minimum((rng.random(n)[:, None] > np.cumsum(probs, axis=1)).sum(axis=1), A - 1)
        nxt = np.minimum((rng.random(n)[:, None] > cum_p[state, action]).sum(axis=1), S - 1)
        total += disc * inst.rewards[state, action, nxt]
        disc *= inst.discount
        state = nxt
    return total


def simulate_random_adherence(inst: MdpInstance, pi_alg, pi_base, dist: AdherenceDistribution,
                              horizon: int | None = None, trials: int = 100_000, seed: int = 0,
                              workers: int = 1) -> McReport:
    """Monte Carlo estimate of the return under random per-period adherence.

    Each period one weight ``u_t`` is drawn per trajectory, shared by all states,
    and the action is sampled from ``u_t pi_alg[s] + (1 - u_t) pi_base[s]``.
    Trajectories are simulated in fixed-size chunks, each with its own stream
    spawned from ``seed``, so the estimate does not depend on ``workers``.
    ``truncation`` bounds the discounted reward beyond ``horizon``.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if horizon is None:
        horizon = default_horizon(inst)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    require_valid(inst)
    alg = as_policy(pi_alg, inst).probs
    base = as_policy(pi_base, inst).probs
    sizes = [min(MC_CHUNK, trials - i) for i in range(0, trials, MC_CHUNK)]
    streams = [np.random.Generator(np.random.Philox(ss))
               for ss in np.random.SeedSequence(seed).spawn(len(sizes))]
    jobs = list(zip(sizes, streams))

    def run(job):
        n, rng = job
        return _simulate_chunk(inst, alg, base, dist, horizon, n, rng)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    returns = np.concatenate(parts)
    mean = math.fsum(returns) / trials
    if trials > 1:
        var = math.fsum((returns - mean) ** 2) / (trials - 1)
        std_error = math.sqrt(var / trials)
    else:
        std_error = 0.0
    truncation = inst.discount ** horizon * inst.reward_bound / (1.0 - inst.discount)
    return McReport(mean, std_error, trials, horizon, seed, truncation)
