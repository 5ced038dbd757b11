import unittest
from itertools import combinations

import numpy as np

from pagrefine.evaluation import (
    EvaluationError,
    evaluate,
    evaluate_graphs,
    f1_directed,
    shd,
    skeleton_f1,
    summarize_runs,
    unresolved_ratio,
)
from pagrefine.graphs import Dag, DirectedGraph, is_acyclic


def reference_shd(E, T, n):
    """Count node pairs whose (i->j, j->i) indicator pair differs."""
    total = 0
    for i, j in combinations(range(n), 2):
        if (E[i, j], E[j, i]) != (T[i, j], T[j, i]):
            total += 1
    return total


def reference_counts(E, T):
    tp = int(np.logical_and(E, T).sum())
    return tp, int(E.sum()), int(T.sum())


def random_edges(rng, n, p=0.25):
    return {(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < p}


def all_digraphs(n):
    possible = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in range(2 ** len(possible)):
        yield {e for k, e in enumerate(possible) if bits >> k & 1}


class MetricOracleTests(unittest.TestCase):
    """shd and directed F1 agree with matrix-based reference counts."""

    def compare(self, est_edges, truth_edges, nodes):
        n = len(nodes)
        est = DirectedGraph(nodes, frozenset(est_edges))
        truth = DirectedGraph(nodes, frozenset(truth_edges))
        E, T = est.adjacency(), truth.adjacency()
        self.assertEqual(shd(est, truth), reference_shd(E, T, n))
        tp, n_est, n_truth = reference_counts(E, T)
        precision, recall, _ = f1_directed(est, truth)
        self.assertEqual(precision, tp / n_est if n_est else 0.0)
        self.assertEqual(recall, tp / n_truth if n_truth else 0.0)

    def test_exhaustive_three_nodes(self):
        nodes = ("A", "B", "C")
        graphs = list(all_digraphs(3))
        for est in graphs:
            for truth in graphs:
                self.compare(est, truth, nodes)

    def test_shd_is_a_metric_on_three_node_dags(self):
        nodes = ("A", "B", "C")
        dags = [Dag(nodes, frozenset(e)) for e in all_digraphs(3) if is_acyclic(e, 3)[0]]
        self.assertEqual(len(dags), 25)
        d = [[shd(a, b) for b in dags] for a in dags]
        for x in range(len(dags)):
            self.assertEqual(d[x][x], 0)
            for y in range(len(dags)):
                self.assertEqual(d[x][y], d[y][x])
                for z in range(len(dags)):
                    self.assertLessEqual(d[x][z], d[x][y] + d[y][z])

    def test_random_six_node_pairs(self):
        rng = np.random.default_rng(6)
        nodes = tuple("ABCDEF")
        for _ in range(200):
            self.compare(random_edges(rng, 6), random_edges(rng, 6), nodes)

    def test_unresolved_ratio_reference(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            n = 6
            s = rng.random((n, n))
            Q = [(i, j) for i, j in combinations(range(n), 2) if rng.random() < 0.5]
            if not Q:
                continue
            expected = np.mean([float(s[i, j] > 0.3 and s[j, i] > 0.3) for i, j in Q])
            self.assertAlmostEqual(unresolved_ratio(s, Q, 0.3), expected, delta=1e-12)


class MetricExampleTests(unittest.TestCase):
    def setUp(self):
        self.truth = Dag(("A", "B", "C"), frozenset({(0, 1), (1, 2)}))

    def test_identical_graphs(self):
        self.assertEqual(shd(self.truth, self.truth), 0)
        self.assertEqual(f1_directed(self.truth, self.truth), (1.0, 1.0, 1.0))

    def test_reversed_edge_costs_one(self):
        est = Dag(("A", "B", "C"), frozenset({(1, 0), (1, 2)}))
        self.assertEqual(shd(est, self.truth), 1)
        self.assertEqual(f1_directed(est, self.truth), (0.5, 0.5, 0.5))
        self.assertEqual(skeleton_f1(est, self.truth), (1.0, 1.0, 1.0))

    def test_node_order_is_aligned_by_name(self):
        est = Dag(("C", "B", "A"), frozenset({(2, 1), (1, 0)}))
        self.assertEqual(shd(est, self.truth), 0)

    def test_node_set_mismatch(self):
        est = Dag(("X", "Y", "Z"), frozenset())
        with self.assertRaises(EvaluationError) as ctx:
            shd(est, self.truth)
        self.assertIn("node-set mismatch", str(ctx.exception))

    def test_empty_unresolved_set_warns(self):
        with self.assertLogs("pagrefine.evaluation", "WARNING"):
            self.assertEqual(unresolved_ratio(np.zeros((2, 2)), [], 0.1), 0.0)

    def test_report_with_baseline(self):
        est = Dag(("A", "B", "C"), frozenset({(1, 0), (1, 2)}))
        s = np.array([[0, 0.05, 0], [0.9, 0, 0.8], [0, 0.02, 0]])
        Q = [(0, 1), (1, 2)]
        report = evaluate(est, self.truth, s, Q, 0.1, raw_edges=2, baseline=self.truth)
        self.assertEqual(report.shd, 1)
        self.assertEqual(report.unresolved_ratio, 0.0)
        self.assertEqual(report.baseline_shd, 0)
        self.assertEqual(report.baseline_f1, 1.0)
        self.assertEqual(report.to_dict()["truth_edges"], 2)

    def test_graph_files_comparison_counts_two_cycles(self):
        est = DirectedGraph(("A", "B", "C"), frozenset({(0, 1), (1, 0), (1, 2)}))
        report = evaluate_graphs(est, self.truth, 0.1)
        self.assertEqual(report.shd, 1)
        self.assertEqual(report.unresolved_ratio, 0.5)


class SummaryTests(unittest.TestCase):
    def test_mean_and_std(self):
        stats = summarize_runs(
            [{"shd": 1, "f1": 0.5, "note": "x"}, {"shd": 3, "f1": 1.0, "note": "y"}]
        )
        self.assertEqual(set(stats), {"shd", "f1"})
        self.assertAlmostEqual(stats["shd"]["mean"], 2.0)
        self.assertAlmostEqual(stats["shd"]["std"], np.sqrt(2.0))
        self.assertAlmostEqual(stats["f1"]["mean"], 0.75)

    def test_single_run_has_zero_std(self):
        stats = summarize_runs([{"shd": 4}])
        self.assertEqual(stats["shd"], {"mean": 4.0, "std": 0.0})


if __name__ == "__main__":
    unittest.main()
