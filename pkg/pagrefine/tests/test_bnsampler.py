import tempfile
import unittest
from pathlib import Path

import numpy as np

from pagrefine.bnsampler import (
    BayesNet,
    NetworkError,
    _config_index,
    fixture_names,
    forward_sample,
    joint_distribution,
    load_bayes_net,
    load_fixture,
    random_bayes_net,
    save_bayes_net,
    validate,
)


def conditional_mutual_information(a, c, b):
    """Plug-in I(A; C | B) in nats."""
    shape = (a.max() + 1, c.max() + 1)
    total = 0.0
    for value in np.unique(b):
        sel = b == value
        joint = np.zeros(shape)
        np.add.at(joint, (a[sel], c[sel]), 1.0)
        joint /= joint.sum()
        independent = np.outer(joint.sum(axis=1), joint.sum(axis=0))
        seen = joint > 0
        total += sel.mean() * np.sum(joint[seen] * np.log(joint[seen] / independent[seen]))
    return total


class ValidationTests(unittest.TestCase):
    """validate lists every problem rather than stopping at the first."""

    def test_fixtures_are_valid(self):
        for name in fixture_names():
            self.assertEqual(validate(load_fixture(name)), [], name)

    def test_cyclic_structure(self):
        bn = BayesNet(
            ("A", "B"),
            (2, 2),
            ((1,), (0,)),
            (np.full((2, 2), 0.5), np.full((2, 2), 0.5)),
        )
        errors = validate(bn)
        self.assertTrue(any("cyclic" in e for e in errors), errors)

    def test_row_sum_and_shape_reported_together(self):
        bn = BayesNet(
            ("A", "B"),
            (2, 2),
            ((), (0,)),
            (np.array([[0.3, 0.6]]), np.array([[0.5, 0.5]])),
        )
        errors = validate(bn)
        self.assertEqual(len(errors), 2)
        self.assertIn("sums to", errors[0])
        self.assertIn("CPT shape", errors[1])

    def test_sampling_an_invalid_network_raises_with_list(self):
        bn = BayesNet(("A",), (2,), ((),), (np.array([[0.3, 0.3]]),))
        with self.assertRaises(NetworkError) as ctx:
            forward_sample(bn, 10, 0)
        self.assertEqual(len(ctx.exception.errors), 1)

    def test_unknown_parent_in_json(self):
        with self.assertRaises(NetworkError):
            BayesNet.from_dict(
                {"nodes": [{"name": "A", "card": 2, "parents": ["Z"], "cpt": [[1, 0]]}]}
            )


class SamplingTests(unittest.TestCase):
    """Ancestral sampling is seeded and matches the exact joint."""

    def test_chain_shape_and_determinism(self):
        bn = load_fixture("chain")
        ds = forward_sample(bn, 1000, seed=1)
        self.assertEqual(ds.rows.shape, (1000, 3))
        self.assertEqual(ds.variable_names, ("A", "B", "C"))
        np.testing.assert_array_equal(ds.rows, forward_sample(bn, 1000, seed=1).rows)
        self.assertFalse(np.array_equal(ds.rows, forward_sample(bn, 1000, seed=2).rows))

    def test_mixed_radix_rows(self):
        bn = load_fixture("collider")
        states = np.array([[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0]])
        np.testing.assert_array_equal(_config_index(bn, 2, states), [0, 1, 2, 3])

    def test_empirical_joint_matches_exact_joint(self):
        bn = load_fixture("collider")
        joint = joint_distribution(bn)
        self.assertAlmostEqual(joint.sum(), 1.0)
        ds = forward_sample(bn, 40000, seed=9)
        counts = np.zeros(bn.cardinalities)
        np.add.at(counts, tuple(ds.rows.T), 1)
        np.testing.assert_allclose(counts / 40000, joint, atol=0.015)

    def test_exact_joint_of_chain(self):
        joint = joint_distribution(load_fixture("chain"))
        self.assertAlmostEqual(joint[1, 1, 1], 0.4 * 0.8 * 0.75)

    def test_chain_ends_independent_given_middle(self):
        a, b, c = forward_sample(load_fixture("chain"), 50000, seed=12).rows.T
        rng = np.random.default_rng(0)
        noise = []
        for _ in range(20):
            shuffled = c.copy()
            for value in np.unique(b):
                idx = np.flatnonzero(b == value)
                shuffled[idx] = rng.permutation(c[idx])
            noise.append(conditional_mutual_information(a, shuffled, b))
        floor = 10 * np.mean(noise)
        self.assertLess(conditional_mutual_information(a, c, b), floor)
        # Marginally the ends are strongly dependent.
        self.assertGreater(conditional_mutual_information(a, c, np.zeros_like(b)), floor)

    def test_root_frequency_within_three_sigma(self):
        bn = BayesNet(("R",), (2,), ((),), (np.array([[0.7, 0.3]]),))
        share = forward_sample(bn, 10000, seed=7).rows[:, 0].mean()
        self.assertLessEqual(abs(share - 0.3), 3 * np.sqrt(0.3 * 0.7 / 10000))

    def test_deterministic_cpts_force_one_configuration(self):
        c_rows = np.tile([0.0, 1.0], (6, 1))
        c_rows[1 * 3 + 2] = [1.0, 0.0]
        bn = BayesNet(
            ("A", "B", "C"),
            (2, 3, 2),
            ((), (0,), (0, 1)),
            (np.array([[0.0, 1.0]]), np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), c_rows),
        )
        rows = forward_sample(bn, 500, seed=3).rows
        np.testing.assert_array_equal(rows, np.tile([1, 2, 0], (500, 1)))


class GeneratorTests(unittest.TestCase):
    def test_random_network_is_valid_and_seeded(self):
        bn = random_bayes_net(10, seed=3)
        self.assertEqual(validate(bn), [])
        self.assertEqual(bn.to_dict(), random_bayes_net(10, seed=3).to_dict())
        self.assertTrue(all(len(p) <= 3 for p in bn.parents))
        self.assertTrue(all(2 <= c <= 3 for c in bn.cardinalities))

    def test_bundled_benchmarks(self):
        self.assertEqual(load_fixture("bench8").node_count, 8)
        self.assertEqual(load_fixture("bench15").node_count, 15)
        with self.assertRaises(NetworkError):
            load_fixture("alarm")

    def test_save_and_load(self):
        bn = random_bayes_net(5, seed=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bn.json"
            save_bayes_net(bn, path)
            self.assertEqual(load_bayes_net(path).to_dict(), bn.to_dict())


if __name__ == "__main__":
    unittest.main()
