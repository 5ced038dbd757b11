import tempfile
import unittest
from pathlib import Path

from pagrefine.config import ConfigError, load_config


class ConfigTests(unittest.TestCase):
    """Defaults, then the TOML file, then command-line overrides."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, text):
        path = self.dir / "run.toml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_defaults(self):
        cfg = load_config()
        self.assertEqual(cfg.hp.lambda1, 0.01)
        self.assertEqual(cfg.hp.lambda2, 5.0)
        self.assertEqual(cfg.hp.lambda3, 0.1)
        self.assertEqual(cfg.hp.tau, 0.1)
        self.assertEqual(cfg.optimizer.eta, 0.01)
        self.assertEqual(cfg.optimizer.steps, 140)
        self.assertEqual(cfg.prior_mode, "random")
        self.assertTrue(cfg.cycle_projection)

    def test_file_values_and_relative_paths(self):
        cfg = load_config(self.write('data = "in/data.csv"\nsteps = 20\nbatch_size = 64\n'))
        self.assertEqual(cfg.data, self.dir.resolve() / "in" / "data.csv")
        self.assertEqual(cfg.optimizer.steps, 20)
        self.assertEqual(cfg.optimizer.batch_size, 64)

    def test_flags_win(self):
        cfg = load_config(self.write("tau = 0.2\nseed = 3\n"), {"tau": 0.3, "seed": None})
        self.assertEqual(cfg.hp.tau, 0.3)
        self.assertEqual(cfg.optimizer.seed, 3)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            load_config(self.write("lamda1 = 0.5\n"))
        self.assertIn("lamda1", str(ctx.exception))

    def test_tables_rejected(self):
        with self.assertRaises(ConfigError):
            load_config(self.write("[optimizer]\neta = 0.1\n"))

    def test_invalid_toml(self):
        with self.assertRaises(ConfigError):
            load_config(self.write("tau = = 1\n"))

    def test_bad_values(self):
        with self.assertRaises(ConfigError):
            load_config(overrides={"prior_mode": "llm"})
        with self.assertRaises(ConfigError):
            load_config(overrides={"tau": 0.0})
        with self.assertRaises(ConfigError):
            load_config(overrides={"batch_size": "half"})
        with self.assertRaises(ConfigError):
            load_config(overrides={"prior_probability": 0.4})

    def test_missing_input_names_the_path(self):
        cfg = load_config(overrides={"data": str(self.dir / "absent.csv"), "pag": str(self.dir)})
        with self.assertRaises(ConfigError) as ctx:
            cfg.check_paths()
        self.assertIn("absent.csv", str(ctx.exception))

    def test_pag_required_unless_taken_from_truth(self):
        data = self.dir / "data.csv"
        data.write_text("A\n0\n1\n", encoding="utf-8")
        with self.assertRaises(ConfigError) as ctx:
            load_config(overrides={"data": str(data)}).check_paths()
        self.assertIn("pag", str(ctx.exception))
        truth = self.dir / "truth.json"
        truth.write_text("{}", encoding="utf-8")
        load_config(
            overrides={"data": str(data), "truth": str(truth), "pag_from_truth": True}
        ).check_paths()

    def test_max_rows(self):
        self.assertIsNone(load_config().max_rows)
        cfg = load_config(self.write("max_rows = 500\n"), {"max_rows": None})
        self.assertEqual(cfg.max_rows, 500)
        self.assertEqual(cfg.to_dict()["max_rows"], 500)
        for bad in (0, -3, "many"):
            with self.assertRaises(ConfigError):
                load_config(overrides={"max_rows": bad})

    def test_shipped_configs_read_the_cardinality_sidecar(self):
        configs = Path(__file__).resolve().parents[2] / "configs"
        for name in ("collider", "bench8"):
            cfg = load_config(configs / f"{name}.toml")
            self.assertEqual(cfg.cardinalities.name, "cardinalities.json", name)
            self.assertEqual(cfg.cardinalities.parent, cfg.data.parent, name)

    def test_to_dict_round_trips_paths_as_strings(self):
        cfg = load_config(overrides={"data": "x.csv"})
        self.assertEqual(cfg.to_dict()["data"], "x.csv")
        self.assertEqual(cfg.to_dict()["steps"], 140)


if __name__ == "__main__":
    unittest.main()
