import unittest

import numpy as np
from scipy.special import expit

from pagrefine.bnsampler import forward_sample, load_fixture
from pagrefine.data import build_layout, one_hot_expand, state_frequencies
from pagrefine.errors import InputError
from pagrefine.graphs import (
    Mark,
    Pag,
    PagEdge,
    admissible_pairs,
    lift_to_state_mask,
    oracle_pag_from_dag,
    pag_admissibility,
    unresolved_pairs,
)
from pagrefine.objective import Hyperparameters, penalty_weights
from pagrefine.optimizer import OptimizerConfig, init_logits, random_prior, refine
from pagrefine.pipeline import align_pag, build_prior, run_refinement


class RunRefinementTests(unittest.TestCase):
    """A full default run keeps forbidden entries at exactly zero."""

    @classmethod
    def setUpClass(cls):
        cls.bn = load_fixture("chain")
        cls.dataset = forward_sample(cls.bn, 1000, seed=4)
        cls.pag = oracle_pag_from_dag(cls.bn.dag)
        cls.result = run_refinement(cls.dataset, cls.pag, truth=cls.bn.dag)

    def test_forbidden_entries_are_exactly_zero(self):
        S = lift_to_state_mask(self.result.admissibility, self.result.layout)
        self.assertTrue(np.all(self.result.adjacency[S == 0] == 0.0))
        self.assertEqual(len(self.result.trace), 140)

    def test_masked_logits_leave_outputs_bit_identical(self):
        layout = build_layout(self.dataset)
        X = one_hot_expand(self.dataset, layout)
        m = pag_admissibility(self.pag)
        S = lift_to_state_mask(m, layout)
        P = penalty_weights(state_frequencies(X, layout), layout)
        Q = unresolved_pairs(m)
        prior = random_prior(Q, seed=0)
        W0 = init_logits(S, prior, layout)
        junk = W0 + np.where(S == 0, 3.0, 0.0)
        B = admissible_pairs(m)
        args = (X, S, P, B, Q, prior, Hyperparameters(), OptimizerConfig(), layout)
        W_a, trace_a = refine(*args, W0=W0)
        W_b, trace_b = refine(*args, W0=junk)
        np.testing.assert_array_equal(expit(W_a) * S, expit(W_b) * S)
        self.assertTrue(trace_a.to_frame().equals(trace_b.to_frame()))

    def test_result_is_a_dag_with_metrics(self):
        self.assertEqual(self.result.graph.nodes, ("A", "B", "C"))
        self.assertIsNotNone(self.result.metrics)
        self.assertIn("SHD=", self.result.summary())
        self.assertEqual(self.result.metrics.pag_unresolved_ratio, 1.0)
        self.assertIsNotNone(self.result.metrics.baseline_shd)


class BundledNetworkTests(unittest.TestCase):
    """Default runs on the bundled networks lower the loss; priors never hurt."""

    def test_final_loss_not_above_first(self):
        for name in ("chain", "collider", "bench8"):
            bn = load_fixture(name)
            dataset = forward_sample(bn, 2000, seed=1)
            result = run_refinement(dataset, oracle_pag_from_dag(bn.dag))
            records = result.trace.records
            self.assertLessEqual(records[-1].loss.total, records[0].loss.total, name)

    def test_biased_prior_leaves_no_more_open_pairs_on_chain(self):
        bn = load_fixture("chain")
        dataset = forward_sample(bn, 2000, seed=1)
        pag = oracle_pag_from_dag(bn.dag)
        biased = run_refinement(dataset, pag, prior_mode="random")
        flat = run_refinement(dataset, pag, prior_mode="none")
        self.assertLessEqual(biased.unresolved_ratio, flat.unresolved_ratio)


class PagAlignmentTests(unittest.TestCase):
    def test_reorders_by_name(self):
        pag = Pag(("C", "A"), (PagEdge(0, 1, Mark.ARROW, Mark.TAIL),))
        aligned = align_pag(pag, ("A", "C"))
        self.assertEqual(aligned.nodes, ("A", "C"))
        self.assertEqual(aligned.edges, (PagEdge(0, 1, Mark.TAIL, Mark.ARROW),))

    def test_mismatch(self):
        with self.assertRaises(InputError):
            align_pag(Pag(("A", "B"), ()), ("A", "C"))


class PriorModeTests(unittest.TestCase):
    def test_modes(self):
        m = np.array([[0, 1], [1, 0]])
        Q = unresolved_pairs(m)
        self.assertEqual(len(build_prior("random", Q, 0, 0.9, ("A", "B"), m).entries), 1)
        self.assertEqual(build_prior("none", Q, 0, 0.9, ("A", "B"), m).entries, ())
        with self.assertRaises(InputError):
            build_prior("file", Q, 0, 0.9, ("A", "B"), m)


if __name__ == "__main__":
    unittest.main()
