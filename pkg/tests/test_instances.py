import json
import warnings

import numpy as np
import pytest

from adamdp import (
    BaselineAmbiguity,
    BundleFormatError,
    InstanceBundle,
    evaluate_policy,
    healthcare_template,
    load_bundle,
    machine_replacement_template,
    random_instance,
    random_policy,
    save_bundle,
    toy_counterexample,
    validate_instance,
)
from adamdp.adherence import effective_policy
from adamdp.instances import bundle_from_dict, bundle_to_dict, toy_closed_form, toy_thresholds
from oracles import TOY_BASE, toy_returns, toy_theta_bar, toy_theta_tilde


class TestToy:
    @pytest.mark.parametrize("eps", [-1, 1])
    def test_valid(self, eps):
        assert validate_instance(toy_counterexample(0.5, eps).instance) == []

    def test_thresholds(self):
        for lam in (0.3, 0.5, 0.9):
            assert toy_thresholds(lam) == pytest.approx((toy_theta_tilde(lam), toy_theta_bar(lam)))
        assert toy_thresholds(0.5) == pytest.approx((0.95, 0.9))

    @pytest.mark.parametrize("eps", [-1, 1])
    def test_random_closed_forms(self, eps):
        rng = np.random.default_rng(40 + eps)
        for lam, theta in rng.uniform([0.05, 0.0], [0.95, 1.0], size=(20, 2)):
            bundle = toy_counterexample(lam, eps)
            pi = effective_policy(bundle.baseline("alg"), bundle.baseline("base"), theta)
            _, r = evaluate_policy(bundle.instance, pi)
            assert r == pytest.approx(toy_returns(lam, theta, eps), abs=1e-10)
            assert toy_closed_form(lam, theta, eps) == pytest.approx(toy_returns(lam, theta, eps), abs=1e-12)

    def test_baseline_lookup(self, toy):
        with pytest.raises(KeyError, match="available: alg, base, star"):
            toy.baseline("nope")

    @pytest.mark.parametrize("lam, eps", [(1.0, -1), (0.5, 0)])
    def test_bad_arguments(self, lam, eps):
        with pytest.raises(ValueError):
            toy_counterexample(lam, eps)


class TestTemplates:
    def test_machine_needs_external_transitions(self):
        bundle = machine_replacement_template()
        kinds = {v.kind for v in validate_instance(bundle.instance)}
        assert kinds == {"required_external"}
        assert bundle.instance.discount == 0.99
        np.testing.assert_array_equal(bundle.instance.rewards[:, 0, 0],
                                      [20] * 7 + [0, 18, 10])
        assert set(bundle.baselines) == {"always_wait", "repair_8_R1"}

    def test_healthcare_mortality_row(self):
        bundle = healthcare_template()
        problems = validate_instance(bundle.instance)
        assert {v.kind for v in problems} == {"required_external"}
        assert {v.location[0] for v in problems} == set(range(5))
        np.testing.assert_array_equal(bundle.instance.transitions[5, :, 5], 1.0)
        np.testing.assert_array_equal(bundle.instance.rewards[0, :, 0], [20, 15, 10])


class TestRandom:
    def test_valid_and_reproducible(self):
        a = random_instance(7, 5, 3)
        b = random_instance(7, 5, 3)
        assert validate_instance(a) == []
        np.testing.assert_array_equal(a.transitions, b.transitions)
        assert 0.5 <= a.discount <= 0.95

    def test_policies(self):
        assert random_policy(1, 4, 3, deterministic=True).is_deterministic()
        assert random_policy(1, 4, 3).probs.shape == (4, 3)


class TestJson:
    def test_round_trip_is_bitwise(self, tmp_path, toy):
        amb = BaselineAmbiguity.from_policies([toy.baseline("base"), toy.baseline("star")])
        bundle = InstanceBundle(toy.instance, toy.baselines, toy.name, toy.description,
                                toy.provenance, amb)
        path = tmp_path / "toy.json"
        save_bundle(bundle, path)
        assert load_bundle(path) == bundle

    def test_round_trip_random(self, tmp_path):
        inst = random_instance(3, 4, 2)
        bundle = InstanceBundle(inst, {"pi": random_policy(3, 4, 2)}, name="r")
        path = tmp_path / "r.json"
        save_bundle(bundle, path)
        assert load_bundle(path) == bundle

    def test_nan_survives(self, tmp_path):
        path = tmp_path / "machine.json"
        save_bundle(machine_replacement_template(), path)
        assert "NaN" not in path.read_text()
        assert load_bundle(path) == machine_replacement_template()

    def test_negative_probability(self, toy):
        doc = bundle_to_dict(toy)
        doc["transitions"][0][0][1] = -0.5
        with pytest.raises(BundleFormatError, match=r"transitions\[0\]\[0\]\[1\] = -0\.5"):
            bundle_from_dict(doc)

    def test_unknown_key_warns(self, toy):
        doc = bundle_to_dict(toy)
        doc["colour"] = "blue"
        with pytest.warns(UserWarning, match="colour"):
            assert bundle_from_dict(doc) == toy

    def test_missing_field(self, toy):
        doc = bundle_to_dict(toy)
        del doc["rewards"]
        with pytest.raises(BundleFormatError, match="rewards"):
            bundle_from_dict(doc)

    def test_bad_shape(self, toy):
        doc = bundle_to_dict(toy)
        doc["initial_dist"] = [1.0, 0.0]
        with pytest.raises(BundleFormatError, match="initial_dist"):
            bundle_from_dict(doc)

    def test_malformed_json_location(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "n_states": 1,\n  oops\n}')
        with pytest.raises(BundleFormatError, match=r"bad\.json:3:3"):
            load_bundle(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_bundle(tmp_path / "absent.json")

    def test_no_warning_for_known_keys(self, toy):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            bundle_from_dict(json.loads(json.dumps(bundle_to_dict(toy))))

    def test_baseline_applies_to_loaded(self, tmp_path, toy):
        path = tmp_path / "toy.json"
        save_bundle(toy, path)
        loaded = load_bundle(path)
        np.testing.assert_array_equal(loaded.baseline("base").probs, TOY_BASE)
