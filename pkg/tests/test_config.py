import unittest
from pathlib import Path

from tests.helpers import config_from, temp_dir, write_config
from utils.config import SimConfig, format_config, known_keys, load_config, parse_config, write_resolved
from utils.errors import ConfigurationError


class TestParse(unittest.TestCase):
    def test_empty_text_gives_defaults(self):
        config = parse_config("")
        self.assertEqual(config, SimConfig())
        self.assertEqual(config.grid.n, 513)
        self.assertEqual(config.diag.gamma, 0.1)
        self.assertEqual(config.output.snapshot_times, ())

    def test_comments_and_values(self):
        config = parse_config(
            "# run\n; alt comment\n\ngrid.n = 129\ninit.kind = ball\ninit.radius = 2\ninit.normalize = no\n"
            "output.snapshot_times = 0.5, 1.0\n"
        )
        self.assertEqual(config.grid.n, 129)
        self.assertEqual(config.init.kind, "ball")
        self.assertEqual(config.init.radius, 2.0)
        self.assertIs(config.init.normalize, False)
        self.assertEqual(config.output.snapshot_times, (0.5, 1.0))

    def test_gamma_range(self):
        with self.assertRaises(ConfigurationError) as ctx:
            config_from(diag__gamma=0.2)
        self.assertEqual(ctx.exception.key, "diag.gamma")
        self.assertIn("(0, 1/7)", str(ctx.exception))
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_unknown_key_suggests(self):
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config("grid.nn = 129")
        self.assertIn("did you mean 'grid.n'", str(ctx.exception))

    def test_unknown_section(self):
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config("nonsense = 1")
        self.assertEqual(ctx.exception.key, "nonsense")

    def test_type_mismatch(self):
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config("grid.n = many")
        self.assertEqual(ctx.exception.key, "grid.n")

    def test_bad_bool(self):
        with self.assertRaises(ConfigurationError):
            parse_config("init.normalize = maybe")

    def test_missing_equals(self):
        with self.assertRaises(ConfigurationError):
            parse_config("grid.n 129")

    def test_alpha_requires_nondivergence(self):
        with self.assertRaises(ConfigurationError) as ctx:
            config_from(flow__alpha=0.5)
        self.assertEqual(ctx.exception.key, "flow.alpha")
        config = config_from(flow__alpha=0.5, flow__rhs="nondivergence")
        self.assertEqual(config.flow.alpha, 0.5)

    def test_file_init_needs_path(self):
        with self.assertRaises(ConfigurationError) as ctx:
            config_from(init__kind="file")
        self.assertEqual(ctx.exception.key, "init.path")

    def test_duplicate_key_warns(self):
        with self.assertLogs("utils.config", level="WARNING"):
            config = parse_config("grid.n = 129\ngrid.n = 257")
        self.assertEqual(config.grid.n, 257)


class TestFormat(unittest.TestCase):
    def test_round_trip(self):
        config = config_from(grid__n=129, init__kind="ball", output__snapshot_times="0.25, 0.5", init__normalize="false")
        self.assertEqual(parse_config(format_config(config)), config)

    def test_every_key_listed(self):
        lines = format_config(SimConfig()).splitlines()
        self.assertEqual([line.split(" = ")[0] for line in lines], known_keys())


class TestFiles(unittest.TestCase):
    def test_load_none(self):
        self.assertEqual(load_config(None), SimConfig())

    def test_load_missing(self):
        with self.assertRaises(ConfigurationError):
            load_config("/nonexistent/run.cfg")

    def test_load_and_write_resolved(self):
        with temp_dir() as tmp:
            config = load_config(write_config(tmp, grid__n=65, time__t_end=0.5))
            self.assertEqual(config.grid.n, 65)
            path = write_resolved(config, Path(tmp) / "out")
            self.assertEqual(path.name, "config.resolved")
            self.assertEqual(load_config(path), config)
