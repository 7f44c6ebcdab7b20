"""Built-in instances, random instance generators and the JSON bundle format."""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .core import MdpInstance, StationaryPolicy, as_policy
from .errors import BundleFormatError, DimensionError
from .robust import BaselineAmbiguity

SCHEMA_VERSION = "1"
KNOWN_KEYS = {
    "schema_version", "name", "description", "provenance", "n_states", "n_actions",
    "state_names", "action_names", "discount", "initial_dist", "rewards", "transitions",
    "baselines", "baseline_ambiguity",
}


def _same_array(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(frozen=True, eq=False)
class InstanceBundle:
    """An instance with named baseline policies and descriptive metadata."""

    instance: MdpInstance
    baselines: dict[str, StationaryPolicy]
    name: str = ""
    description: str = ""
    provenance: str = ""
    baseline_ambiguity: BaselineAmbiguity | None = None

    def __post_init__(self):
        checked = {str(k): as_policy(p, self.instance) for k, p in self.baselines.items()}
        object.__setattr__(self, "baselines", checked)
        amb = self.baseline_ambiguity
        if amb is not None and (amb.n_states != self.instance.n_states
                                or amb.n_actions != self.instance.n_actions):
            raise DimensionError("baseline ambiguity does not match the instance dimensions")

    def baseline(self, name: str) -> StationaryPolicy:
        try:
            return self.baselines[name]
        except KeyError:
            known = ", ".join(sorted(self.baselines)) or "none"
            raise KeyError(f"unknown baseline {name!r} (available: {known})") from None

    def __eq__(self, other):
        if not isinstance(other, InstanceBundle):
            return NotImplemented
        a, b = self.instance, other.instance
        same_inst = (
            _same_array(a.transitions, b.transitions)
            and _same_array(a.rewards, b.rewards)
            and _same_array(a.initial_dist, b.initial_dist)
            and a.discount == b.discount
            and a.state_names == b.state_names
            and a.action_names == b.action_names
        )
        same_base = (self.baselines.keys() == other.baselines.keys() and all(
            _same_array(self.baselines[k].probs, other.baselines[k].probs) for k in self.baselines))
        amb_a, amb_b = self.baseline_ambiguity, other.baseline_ambiguity
        if (amb_a is None) != (amb_b is None):
            same_amb = False
        else:
            same_amb = amb_a is None or (len(amb_a.per_state_vertices) == len(amb_b.per_state_vertices)
                                         and all(_same_array(x, y) for x, y in zip(
                                             amb_a.per_state_vertices, amb_b.per_state_vertices)))
        return (same_inst and same_base and same_amb and self.name == other.name
                and self.description == other.description and self.provenance == other.provenance)

    __hash__ = None


# ---------------------------------------------------------------------------
# Toy counterexample


def _det(actions, n_actions):
    return StationaryPolicy.deterministic(actions, n_actions)


def toy_counterexample(lam: float, epsilon: float = -1.0) -> InstanceBundle:
    """Five-state deterministic chain where ignoring partial adherence backfires.

    States ``1..5`` (indices 0..4). In states 1, 2 and 3 action ``0`` and action
    ``1`` move to ``(2, 3)``, ``(4, 5)`` and ``(4, 5)`` respectively; states 4 and 5
    are absorbing. The reward collected in a state is 0, 0.1, 0, 1 and
    ``1 + epsilon`` for states 1 to 5, whatever the action. The agent starts in
    state 1.

    Baselines:

    * ``"base"``: 1 -> 3, 2 -> 5, 3 -> 4, with return ``lam**2 / (1 - lam)``;
    * ``"alg"``: 1 -> 2, 2 -> 4, 3 -> 5, with return ``0.1 lam + lam**2 / (1 - lam)``;
    * ``"star"``: 1 -> 2, 2 -> 4, 3 -> 4, the nominal optimum for ``epsilon = -1``.
    """
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {lam!r}")
    if epsilon not in (-1, 1):
        raise ValueError(f"epsilon must be -1 or +1, got {epsilon!r}")
    epsilon = int(epsilon)
    nxt = np.array([[1, 2], [3, 4], [3, 4], [3, 3], [4, 4]])
    P = np.zeros((5, 2, 5))
    for s in range(5):
        for a in range(2):
            P[s, a, nxt[s, a]] = 1.0
    state_reward = np.array([0.0, 0.1, 0.0, 1.0, 1.0 + epsilon])
    r = np.broadcast_to(state_reward[:, None, None], P.shape).copy()
    p0 = np.eye(5)[0]
    inst = MdpInstance(P, r, p0, lam, state_names=("1", "2", "3", "4", "5"),
                       action_names=("first", "second"))
    baselines = {
        "base": _det([1, 1, 0, 0, 0], 2),
        "alg": _det([0, 0, 1, 0, 0], 2),
        "star": _det([0, 0, 0, 0, 0], 2),
    }
    return InstanceBundle(
        inst, baselines, name="toy",
        description=f"five-state counterexample, discount {lam!r}, epsilon {epsilon:+d}",
        provenance="closed-form returns: base lam^2/(1-lam), alg 0.1 lam + lam^2/(1-lam)")


def toy_thresholds(lam: float) -> tuple[float, float]:
    """``(theta_tilde, theta_bar)`` for the toy chain: ``1 - 0.1(1-lam)/(2 lam)`` and ``1 - 0.1(1-lam)/lam``."""
    return 1.0 - 0.1 * (1.0 - lam) / (2.0 * lam), 1.0 - 0.1 * (1.0 - lam) / lam


def toy_closed_form(lam: float, theta, epsilon: float = -1.0):
    """Return of the ``"alg"`` recommendation on the toy chain at adherence ``theta``."""
    theta = np.asarray(theta, dtype=float)
    t_tilde, _ = toy_thresholds(lam)
    r_base = lam**2 / (1.0 - lam)
    if epsilon == -1:
        return r_base + 2.0 * theta * r_base * (theta - t_tilde)
    r_alg = 0.1 * lam + r_base
    return r_alg + 2.0 * r_base * (1.0 - theta) * (theta - (1.0 - t_tilde))


# ---------------------------------------------------------------------------
# Templates whose transition tensors must be supplied externally


def machine_replacement_template() -> InstanceBundle:
    """Machine replacement rewards, discount and start state; transitions left as NaN.

    States ``1..8, R1, R2``; actions ``repair`` and ``wait``. The state reward is
    20 everywhere except 0 in state 8, 18 in R1 and 10 in R2. Until transitions
    are filled in, validation reports them as required external data.
    """
    names = ("1", "2", "3", "4", "5", "6", "7", "8", "R1", "R2")
    state_reward = np.array([20.0] * 7 + [0.0, 18.0, 10.0])
    P = np.full((10, 2, 10), np.nan)
    r = np.broadcast_to(state_reward[:, None, None], P.shape).copy()
    inst = MdpInstance(P, r, np.eye(10)[0], 0.99, state_names=names,
                       action_names=("repair", "wait"))
    repair_some = np.ones(10, dtype=int)
    repair_some[[7, 8]] = 0
    baselines = {
        "always_wait": _det(np.ones(10, dtype=int), 2),
        "repair_8_R1": _det(repair_some, 2),
    }
    return InstanceBundle(
        inst, baselines, name="machine",
        description="machine replacement; fill transitions before solving",
        provenance="transition probabilities: REQUIRED-EXTERNAL")


def healthcare_template() -> InstanceBundle:
    """Stylised treatment problem; only the mortality row of the transitions is known.

    States ``1..5`` of increasing severity plus an absorbing mortality state ``m``;
    actions ``low``, ``medium`` and ``high`` earn 20, 15 and 10 outside ``m`` and 0
    in ``m``. The remaining transitions are NaN and must be supplied.
    """
    names = ("1", "2", "3", "4", "5", "m")
    P = np.full((6, 3, 6), np.nan)
    P[5] = 0.0
    P[5, :, 5] = 1.0
    sa_reward = np.tile([20.0, 15.0, 10.0], (6, 1))
    sa_reward[5] = 0.0
    r = np.repeat(sa_reward[:, :, None], 6, axis=2)
    inst = MdpInstance(P, r, np.eye(6)[0], 0.99, state_names=names,
                       action_names=("low", "medium", "high"))
    baselines = {f"always_{a}": _det(np.full(6, i), 3)
                 for i, a in enumerate(("low", "medium", "high"))}
    return InstanceBundle(
        inst, baselines, name="healthcare",
        description="stylised healthcare problem; fill transitions before solving",
        provenance="transition probabilities outside the mortality state: REQUIRED-EXTERNAL")


# ---------------------------------------------------------------------------
# Random instances


def random_instance(rng, n_states: int, n_actions: int, discount: float | None = None,
                    reward_range: tuple[float, float] = (0.0, 1.0),
                    concentration: float = 1.0) -> MdpInstance:
    """Dense random instance with Dirichlet transition rows and uniform rewards.

    ``discount`` defaults to a uniform draw from [0.5, 0.95]; the initial
    distribution is a Dirichlet draw.
    """
    rng = np.random.default_rng(rng)
    P = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions))
    r = rng.uniform(*reward_range, size=(n_states, n_actions, n_states))
    p0 = rng.dirichlet(np.ones(n_states))
    lam = rng.uniform(0.5, 0.95) if discount is None else discount
    return MdpInstance(P, r, p0, lam)


def random_policy(rng, n_states: int, n_actions: int,
                  deterministic: bool = False) -> StationaryPolicy:
    rng = np.random.default_rng(rng)
    if deterministic:
        return _det(rng.integers(n_actions, size=n_states), n_actions)
    return StationaryPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))


# ---------------------------------------------------------------------------
# JSON bundle format


def _to_json_array(arr: np.ndarray):
    flat = [None if math.isnan(x) else x for x in np.asarray(arr, dtype=float).ravel().tolist()]
    out = np.array(flat, dtype=object).reshape(np.shape(arr))
    return out.tolist()


def bundle_to_dict(bundle: InstanceBundle) -> dict:
    inst = bundle.instance
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": bundle.name,
        "description": bundle.description,
        "provenance": bundle.provenance,
        "n_states": inst.n_states,
        "n_actions": inst.n_actions,
        "state_names": list(inst.state_names) if inst.state_names else None,
        "action_names": list(inst.action_names) if inst.action_names else None,
        "discount": inst.discount,
        "initial_dist": inst.initial_dist.tolist(),
        "rewards": _to_json_array(inst.rewards),
        "transitions": _to_json_array(inst.transitions),
        "baselines": {k: p.probs.tolist() for k, p in bundle.baselines.items()},
    }
    if bundle.baseline_ambiguity is not None:
        doc["baseline_ambiguity"] = [v.tolist() for v in bundle.baseline_ambiguity.per_state_vertices]
    return doc


def save_bundle(bundle: InstanceBundle, path) -> None:
    """Write ``bundle`` as UTF-8 JSON; floats use shortest round-trip decimals."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(bundle_to_dict(bundle), fh, indent=1, allow_nan=False)
        fh.write("\n")


def _array_field(doc: dict, key: str, shape: tuple, allow_null: bool = False) -> np.ndarray:
    if key not in doc:
        raise BundleFormatError(f"missing required field {key!r}")
    raw = doc[key]
    try:
        arr = np.array(raw, dtype=object)
    except ValueError as exc:
        raise BundleFormatError(f"field {key!r} is not a rectangular array: {exc}") from None
    if arr.shape != shape:
        raise BundleFormatError(f"field {key!r} has shape {arr.shape}, expected {shape}")
    out = np.empty(shape, dtype=float)
    for idx, x in np.ndenumerate(arr):
        where = key + "".join(f"[{i}]" for i in idx)
        if x is None:
            if not allow_null:
                raise BundleFormatError(f"{where} is null")
            out[idx] = np.nan
        elif isinstance(x, (int, float)) and not isinstance(x, bool):
            out[idx] = float(x)
        else:
            raise BundleFormatError(f"{where} is not a number: {x!r}")
    return out


def _probability_field(doc, key, shape, allow_null=False) -> np.ndarray:
    arr = _array_field(doc, key, shape, allow_null)
    bad = np.argwhere(arr < 0)
    if len(bad):
        idx = tuple(int(i) for i in bad[0])
        where = key + "".join(f"[{i}]" for i in idx)
        raise BundleFormatError(f"{where} = {float(arr[idx])!r} is a negative probability")
    return arr


def bundle_from_dict(doc: dict, source: str = "<dict>") -> InstanceBundle:
    if not isinstance(doc, dict):
        raise BundleFormatError(f"{source}: top level must be a JSON object")
    unknown = sorted(set(doc) - KNOWN_KEYS)
    if unknown:
        warnings.warn(f"{source}: ignoring unknown keys {unknown}", stacklevel=3)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if str(version) != SCHEMA_VERSION:
        raise BundleFormatError(f"{source}: unsupported schema_version {version!r}")
    try:
        S, A = int(doc["n_states"]), int(doc["n_actions"])
        lam = doc["discount"]
    except KeyError as exc:
        raise BundleFormatError(f"{source}: missing required field {exc.args[0]!r}") from None
    except (TypeError, ValueError):
        raise BundleFormatError(f"{source}: n_states and n_actions must be integers") from None
    if S <= 0 or A <= 0:
        raise BundleFormatError(f"{source}: n_states and n_actions must be positive")
    if not isinstance(lam, (int, float)) or isinstance(lam, bool):
        raise BundleFormatError(f"{source}: discount is not a number: {lam!r}")
    try:
        P = _probability_field(doc, "transitions", (S, A, S), allow_null=True)
        r = _array_field(doc, "rewards", (S, A, S))
        p0 = _probability_field(doc, "initial_dist", (S,))
        baselines = {}
        for k, m in (doc.get("baselines") or {}).items():
            key = f"baselines[{k!r}]"
            baselines[str(k)] = StationaryPolicy(_probability_field({key: m}, key, (S, A)))
        amb = None
        if doc.get("baseline_ambiguity") is not None:
            raw = doc["baseline_ambiguity"]
            if not isinstance(raw, list) or len(raw) != S:
                raise BundleFormatError(f"baseline_ambiguity must list vertices for {S} states")
            verts = []
            for s, vs in enumerate(raw):
                if not isinstance(vs, list) or not vs:
                    raise BundleFormatError(f"baseline_ambiguity[{s}] must be a nonempty list")
                verts.append(_probability_field({f"baseline_ambiguity[{s}]": vs},
                                                f"baseline_ambiguity[{s}]", (len(vs), A)))
            amb = BaselineAmbiguity(verts)
        inst = MdpInstance(P, r, p0, float(lam), state_names=doc.get("state_names"),
                           action_names=doc.get("action_names"))
        return InstanceBundle(inst, baselines, name=str(doc.get("name", "")),
                              description=str(doc.get("description", "")),
                              provenance=str(doc.get("provenance", "")),
                              baseline_ambiguity=amb)
    except BundleFormatError as exc:
        raise BundleFormatError(f"{source}: {exc}") from None
    except (DimensionError, ValueError) as exc:
        raise BundleFormatError(f"{source}: {exc}") from None


def load_bundle(path) -> InstanceBundle:
    """Read a bundle written by :func:`save_bundle`.

    Malformed JSON is reported with line and column; structural problems name
    the offending field; unknown top-level keys only trigger a warning.
    Probabilistic invariants beyond non-negativity are left to
    :func:`adamdp.core.validate_instance`.
    """
    source = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return bundle_from_dict(doc, source)
