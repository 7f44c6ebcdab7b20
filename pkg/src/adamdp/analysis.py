"""How optimal recommendations and their returns change with the adherence level."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adherence import AdherenceSpec, effective_policy, solve_adamdp
from .core import (
    MdpInstance,
    StationaryPolicy,
    as_policy,
    evaluate_policy,
    evaluate_values,
    policy_matrices,
    require_valid,
    solve_nominal,
)
from .errors import DegenerateReturnError, InvalidSpecError
from .instances import toy_counterexample

MONOTONE_SLACK = 1e-9


def reachable_states(inst: MdpInstance, probs: np.ndarray) -> np.ndarray:
    """Boolean mask of states reachable from the support of ``initial_dist`` under ``probs``."""
    P_pi, _ = policy_matrices(inst, probs)
    seen = inst.initial_dist > 0
    frontier = seen.copy()
    while frontier.any():
        nxt = (P_pi[frontier] > 0).any(axis=0) & ~seen
        seen |= nxt
        frontier = nxt
    return seen


def canonical_recommendation(inst: MdpInstance, pi_base, theta: float,
                             tol: float = 1e-10) -> tuple[StationaryPolicy, float]:
    """Optimal recommendation at ``theta`` with a canonical choice among optimal ones.

    Ties are resolved towards the baseline action, and, for a deterministic
    baseline, states that the effective policy never reaches receive the baseline
    action. Both rules leave the return unchanged. Returns the recommendation
    and its return.
    """
    pi_base = as_policy(pi_base, inst)
    spec = AdherenceSpec.scalar(theta)
    res = solve_adamdp(inst, pi_base, spec, tol, prefer=pi_base)
    rec = res.recommendation
    if pi_base.is_deterministic():
        unreachable = ~reachable_states(inst, res.effective.probs)
        if unreachable.any():
            probs = np.array(rec.probs)
            probs[unreachable] = pi_base.probs[unreachable]
            rec = StationaryPolicy(probs)
    return rec, res.expected_return


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    recommendation: StationaryPolicy


@dataclass(frozen=True, eq=False)
class ThetaSweep:
    """Optimal and naive returns on a grid of adherence levels, with policy segments.

    ``naive_policy`` is the canonical optimal recommendation at full adherence;
    ``returns_naive`` are its returns under partial adherence. ``breakpoints``
    are midpoints of brackets narrower than the bisection tolerance.
    """

    grid: np.ndarray
    returns_opt: np.ndarray
    returns_naive: np.ndarray
    recommendations: list
    segments: list
    breakpoints: np.ndarray
    naive_policy: StationaryPolicy
    baseline_return: float
    nominal_return: float
    checks: dict = field(default_factory=dict)

    @property
    def deterioration(self) -> np.ndarray:
        """``(returns_opt - returns_naive) / returns_opt``; NaN where ``returns_opt`` is zero."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.returns_opt != 0.0,
                            (self.returns_opt - self.returns_naive) / self.returns_opt, np.nan)

    @property
    def segment_ids(self) -> np.ndarray:
        return np.searchsorted(self.breakpoints, self.grid, side="right")


def _actions_key(pi: StationaryPolicy) -> bytes:
    return pi.probs.tobytes()


def _bisect(solve, lo, rec_lo, hi, rec_hi, tol, out):
    """Append ``(theta, left, right)`` for every policy change in ``[lo, hi]``."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        rec_mid = solve(mid)
        if rec_mid == rec_lo:
            lo = mid
        elif rec_mid == rec_hi:
            hi = mid
        else:
            # a third policy lives inside the bracket
            _bisect(solve, lo, rec_lo, mid, rec_mid, tol, out)
            _bisect(solve, mid, rec_mid, hi, rec_hi, tol, out)
            return
    out.append((0.5 * (lo + hi), rec_lo, rec_hi))


def theta_sweep(inst: MdpInstance, pi_base, grid_size: int = 101, bisection_tol: float = 1e-6,
                tol: float = 1e-10, workers: int = 1) -> ThetaSweep:
    """Solve on a uniform ``theta`` grid, locate policy changes and check their structure.

    Adjacent grid points with different canonical recommendations are bisected
    until the bracket is at most ``bisection_tol`` wide. ``checks`` records:

    * ``"monotone"``: optimal returns are non-decreasing (slack 1e-9);
    * ``"above_baseline"``: optimal returns never fall below the baseline return;
    * ``"baseline_stays_below"``: once the baseline is recommended, it is also
      recommended for every smaller ``theta``;
    * ``"top_is_nominal"``: the top segment's recommendation is nominally optimal.

    Segments narrower than the grid spacing can be missed unless they sit
    inside a bracket that is being bisected.
    """
    if grid_size < 2:
        raise InvalidSpecError("grid_size must be at least 2")
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    grid = np.linspace(0.0, 1.0, grid_size)

    def point(theta):
        return canonical_recommendation(inst, pi_base, float(theta), tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(point, grid))
    else:
        solved = [point(t) for t in grid]
    recs = [r for r, _ in solved]
    returns_opt = np.array([ret for _, ret in solved])

    naive = recs[-1]
    naive_returns = np.array([evaluate_policy(inst, effective_policy(naive, pi_base, t))[1]
                              for t in grid])

    changes = []
    for i in range(grid_size - 1):
        if recs[i] != recs[i + 1]:
            _bisect(lambda t: point(t)[0], grid[i], recs[i], grid[i + 1], recs[i + 1],
                    bisection_tol, changes)
    breakpoints = np.array([b for b, _, _ in changes])
    segments, start, current = [], 0.0, recs[0]
    for b, left, right in changes:
        segments.append(Segment(start, float(b), left))
        start, current = float(b), right
    segments.append(Segment(start, 1.0, current))

    _, base_ret = evaluate_policy(inst, pi_base)
    nominal = solve_nominal(inst, tol)
    _, top_ret = evaluate_policy(inst, segments[-1].recommendation)
    checks = {
        "monotone": bool(np.all(np.diff(returns_opt) >= -MONOTONE_SLACK)),
        "above_baseline": bool(np.all(returns_opt >= base_ret - MONOTONE_SLACK)),
        "top_is_nominal": bool(abs(top_ret - nominal.expected_return)
                               <= 1e-8 * max(1.0, abs(nominal.expected_return))),
    }
    if pi_base.is_deterministic():
        is_base = [seg.recommendation == pi_base for seg in segments]
        last_base = max((i for i, b in enumerate(is_base) if b), default=-1)
        checks["baseline_stays_below"] = all(is_base[:last_base + 1])
    return ThetaSweep(grid, returns_opt, naive_returns, recs, segments, breakpoints, naive,
                      base_ret, nominal.expected_return, checks)


def deterioration_curve(inst: MdpInstance, pi_base, grid, naive=None,
                        tol: float = 1e-10) -> np.ndarray:
    """Relative loss of recommending ``naive`` instead of the optimal recommendation.

    ``naive`` defaults to the canonical optimal recommendation at full adherence.
    Raises :class:`DegenerateReturnError` if the optimal return is zero at some grid point.
    """
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    if naive is None:
        naive, _ = canonical_recommendation(inst, pi_base, 1.0, tol)
    naive = as_policy(naive, inst)
    out = []
    for theta in np.asarray(grid, dtype=float):
        opt = solve_adamdp(inst, pi_base, AdherenceSpec.scalar(theta), tol).expected_return
        if opt == 0.0:
            raise DegenerateReturnError(f"optimal return is zero at theta = {theta!r}")
        _, ret = evaluate_policy(inst, effective_policy(naive, pi_base, theta))
        out.append((opt - ret) / opt)
    return np.array(out)


def _toy_gap(lam: float, theta: float) -> tuple[MdpInstance, float]:
    bundle = toy_counterexample(lam, -1)
    inst = bundle.instance
    _, r_base = evaluate_policy(inst, bundle.baseline("base"))
    _, r_eff = evaluate_policy(inst, effective_policy(bundle.baseline("alg"), bundle.baseline("base"), theta))
    return inst, r_base - r_eff


def worst_case_family(M: float, theta: float, xtol: float = 1e-12) -> tuple[MdpInstance, float]:
    """Toy chain (``epsilon = -1``) on which full-adherence optimisation loses at least ``M``.

    The recommendation is the ``"alg"`` policy of :func:`toy_counterexample`,
    which is return-optimal at full adherence. Its shortfall against the
    baseline at adherence ``theta`` is ``2 theta lam^2 / (1 - lam) (theta_tilde - theta)``,
    increasing in ``lam`` wherever it is positive. Discounts ``1 - 2^-k`` are
    scanned until the evaluated gap reaches ``M``, then the discount is lowered by
    bisection while keeping the gap at least ``M``. Returns the instance and gap.
    """
    if not 0.0 < theta < 1.0:
        raise InvalidSpecError(f"theta must lie in (0, 1), got {theta!r}")
    if M < 0:
        raise InvalidSpecError(f"M must be non-negative, got {M!r}")
    lo = None
    for k in range(1, 53):
        hi = 1.0 - 2.0**-k
        inst, gap = _toy_gap(hi, theta)
        if gap >= M:
            break
        lo = hi
    else:
        raise InvalidSpecError(f"no discount below 1 reaches a gap of {M!r} at theta {theta!r}")
    if lo is not None:
        while hi - lo > xtol:
            mid = 0.5 * (lo + hi)
            cand, g = _toy_gap(mid, theta)
            if g >= M:
                hi, inst, gap = mid, cand, g
            else:
                lo = mid
    return inst, gap


@dataclass(frozen=True)
class ValueSimilarReport:
    """Outcome of the value-similar state check at ``state``.

    ``values`` holds the optimal effective value at ``state`` per ``theta`` and
    ``swapped_values`` the value after giving ``state`` the baseline row.
    """

    state: int
    precondition: bool
    reference: float
    thetas: np.ndarray
    values: np.ndarray
    swapped_values: np.ndarray
    tol: float

    @property
    def ok(self) -> bool:
        if not self.precondition:
            return True
        return bool(np.all(np.abs(self.values - self.reference) <= self.tol)
                    and np.all(np.abs(self.swapped_values - self.reference) <= self.tol))

    @property
    def message(self) -> str:
        if not self.precondition:
            return "precondition not met"
        return "holds" if self.ok else "violated"


def value_similar_check(inst: MdpInstance, pi_base, s_bar: int, thetas,
                        tol: float = 1e-8) -> ValueSimilarReport:
    """Check that a state where baseline and nominal optimum agree in value stays that way.

    If the nominally optimal value at ``s_bar`` equals the baseline's value there
    (within 1e-8), records for each ``theta`` the optimal effective value at
    ``s_bar`` and the value after replacing the recommendation's row at ``s_bar``
    by the baseline's row.
    """
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    thetas = np.asarray(thetas, dtype=float)
    v_star = solve_nominal(inst, 1e-10).value
    v_base = evaluate_values(inst, pi_base.probs)
    ref = float(v_star[s_bar])
    if abs(ref - v_base[s_bar]) > 1e-8:
        empty = np.full(len(thetas), np.nan)
        return ValueSimilarReport(s_bar, False, ref, thetas, empty, empty.copy(), tol)
    values, swapped = [], []
    for theta in thetas:
        res = solve_adamdp(inst, pi_base, AdherenceSpec.scalar(theta), 1e-10)
        values.append(res.value[s_bar])
        probs = np.array(res.recommendation.probs)
        probs[s_bar] = pi_base.probs[s_bar]
        eff = effective_policy(StationaryPolicy(probs), pi_base, theta)
        swapped.append(evaluate_values(inst, eff.probs)[s_bar])
    return ValueSimilarReport(s_bar, True, ref, thetas, np.array(values), np.array(swapped), tol)


@dataclass(frozen=True)
class SuboptimalityReport:
    bound: float
    actual: float
    holds: bool


def suboptimality_bound(inst: MdpInstance, pi_base, pi_alg, theta: float,
                        tol: float = 1e-10) -> SuboptimalityReport:
    """Compare the loss of recommending ``pi_alg`` with ``theta / (1 - lam) * d * |v*|_inf``.

    ``d = max_s |pi*_s - pi_alg,s|_1`` where ``pi*`` is the optimal recommendation
    and ``v*`` its effective value function. ``actual`` is
    ``|v* - v^{eff(pi_alg)}|_inf``; ``holds`` reports ``actual <= bound + 1e-8``.
    The inequality is not universal: it can fail when rewards of the
    recommended and baseline actions differ sharply and ``theta`` is small, so
    it is reported rather than asserted.
    """
    require_valid(inst)
    pi_base = as_policy(pi_base, inst)
    pi_alg = as_policy(pi_alg, inst)
    res = solve_adamdp(inst, pi_base, AdherenceSpec.scalar(theta), tol)
    dist = float(np.max(np.abs(res.recommendation.probs - pi_alg.probs).sum(axis=1)))
    v_opt = res.value
    bound = theta / (1.0 - inst.discount) * dist * float(np.max(np.abs(v_opt)))
    v_alg = evaluate_values(inst, effective_policy(pi_alg, pi_base, theta).probs)
    actual = float(np.max(np.abs(v_opt - v_alg)))
    return SuboptimalityReport(bound, actual, actual <= bound + 1e-8)
