#!/usr/bin/env python3
"""End-to-end checks of the hal command-line tool.

Usage: test_cli.py <path-to-hal> <schema-dir>
"""

import json
import os
import pathlib
import subprocess
import sys
import tempfile
import unittest

import jsonschema

HAL = ""
SCHEMAS = pathlib.Path()


def run(*args, cwd, env=None, check=True):
    full_env = dict(os.environ)
    full_env.pop("HAL_SEED", None)
    if env:
        full_env.update(env)
    proc = subprocess.run([HAL, *args], cwd=cwd, env=full_env, capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"hal {' '.join(args)} exited {proc.returncode}: {proc.stderr}")
    return proc


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def validate_jsonl(path, name):
    s = schema(name)
    lines = path.read_text().splitlines()
    for line in lines:
        jsonschema.validate(json.loads(line), s)
    return [json.loads(line) for line in lines]


def validate_json(path, name):
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, schema(name))
    return doc


def first_json(text):
    doc, _ = json.JSONDecoder().raw_decode(text)
    return doc


class Pipeline(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = pathlib.Path(cls.tmp.name)
        cls.runs = {}
        for tag in ("a", "b"):
            out = cls.dir / tag
            run("--output-dir", str(out), "simulate", "--system", "tcp-reno", "--n-traj", "8", "--horizon", "50",
                "--seed", "1", cwd=cls.dir)
            ds = str(out / "dataset.jsonl")
            run("--output-dir", str(out), "segment", "--dataset", ds, cwd=cls.dir)
            run("--output-dir", str(out), "recover", "--dataset", ds, "-m", "3", "--iterations", "40", "--folds", "2",
                "--n-test", "2", cwd=cls.dir)
            run("--output-dir", str(out), "train-events", "--dataset", ds, "-m", "3", "--iterations", "40",
                "--n-test", "2", cwd=cls.dir)
            run("--output-dir", str(out), "evaluate", "--model", str(out / "model.json"), "--events",
                str(out / "events.json"), "--dataset", ds, "--n-test", "2", cwd=cls.dir)
            run("--output-dir", str(out), "pathology", cwd=cls.dir)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_reruns_are_byte_identical(self):
        a, b = self.dir / "a", self.dir / "b"
        names = sorted(p.name for p in a.iterdir())
        self.assertEqual(names, sorted(p.name for p in b.iterdir()))
        self.assertGreaterEqual(len(names), 10)
        for name in names:
            with self.subTest(file=name):
                self.assertEqual((a / name).read_bytes(), (b / name).read_bytes())

    def test_outputs_validate(self):
        out = self.dir / "a"
        validate_jsonl(out / "dataset.jsonl", "dataset_line")
        validate_jsonl(out / "dataset.segments.jsonl", "segments_line")
        labeled = validate_jsonl(out / "labels.segments.jsonl", "segments_line")
        self.assertTrue(all("recovered_modes" in line for line in labeled))
        report = validate_json(out / "recovery_report.json", "recovery_report")
        self.assertEqual(report["method"], "nha")
        self.assertEqual(len(report["runs"][0]["fold_val_mse"]), 2)
        validate_json(out / "model.json", "recovery_model")
        validate_json(out / "events.json", "event_module")
        metrics = validate_json(out / "event_metrics.json", "event_metrics")
        self.assertGreater(metrics["n_train_events"], 0)
        validate_json(out / "evaluation.json", "evaluation")
        validate_json(out / "pathology.json", "pathology")

    def test_pathology_counts_follow_the_estimate(self):
        report = json.loads((self.dir / "a" / "pathology.json").read_text())
        for r in report["runs"]:
            if r["tau_estimate"] < 0.5 - 1e-9:
                self.assertGreater(r["wrongly_nonzero"], 0)
                self.assertEqual(r["wrongly_zero"], 0)
            elif r["tau_estimate"] > 0.5 + 1e-9:
                self.assertGreater(r["wrongly_zero"], 0)
                self.assertEqual(r["wrongly_nonzero"], 0)
        rows = (self.dir / "a" / "pathology.csv").read_text().splitlines()
        self.assertGreater(len(rows), 1)


class Simulation(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = pathlib.Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_sls_dataset_is_deterministic(self):
        outs = []
        for tag in ("x", "y"):
            run("--output-dir", tag, "simulate", "--system", "sls", "--n-traj", "10", "--horizon", "10", "--seed", "7",
                cwd=self.dir)
            outs.append((self.dir / tag / "dataset.jsonl").read_bytes())
        self.assertEqual(outs[0], outs[1])
        self.assertEqual(len(outs[0].decode().splitlines()), 10)

    def test_tcp_visits_every_mode(self):
        run("--output-dir", "o", "simulate", "--system", "tcp-reno", "--n-traj", "40", "--horizon", "200", "--seed", "1",
            cwd=self.dir)
        lines = validate_jsonl(self.dir / "o" / "dataset.jsonl", "dataset_line")
        self.assertEqual(len(lines), 40)
        for line in lines:
            self.assertEqual(set(line["modes"]), {0, 1, 2}, line["id"])

    def test_toy_jump_halves_the_state(self):
        run("--output-dir", "o", "simulate", "--system", "toy", "--n-traj", "3", "--horizon", "1", "--seed", "2",
            cwd=self.dir)
        for line in validate_jsonl(self.dir / "o" / "dataset.jsonl", "dataset_line"):
            self.assertEqual(len(line["event_times"]), 1)
            modes = line["modes"]
            k = modes.index(1)
            self.assertEqual(modes[:k], [0] * k)
            self.assertEqual(modes[k:], [1] * (len(modes) - k))
            # A sample sits exactly on the event time; the pre-jump state is its left limit.
            t = line["times"]
            self.assertAlmostEqual(t[k], t[k - 1], places=12)
            self.assertAlmostEqual(line["states"][k][0], 0.5 * line["states"][k - 1][0], places=9)
        run("--output-dir", "o", "segment", "--dataset", "o/dataset.jsonl", cwd=self.dir)
        for line in validate_jsonl(self.dir / "o" / "dataset.segments.jsonl", "segments_line"):
            self.assertEqual(len(line["segments"]), 2)

    def test_hal_seed_overrides_the_flag(self):
        run("--output-dir", "a", "simulate", "--system", "sls", "--n-traj", "2", "--horizon", "2", "--seed", "1",
            cwd=self.dir, env={"HAL_SEED": "9"})
        run("--output-dir", "b", "simulate", "--system", "sls", "--n-traj", "2", "--horizon", "2", "--seed", "9",
            cwd=self.dir)
        run("--output-dir", "c", "simulate", "--system", "sls", "--n-traj", "2", "--horizon", "2", "--seed", "1",
            cwd=self.dir)
        a = (self.dir / "a" / "dataset.jsonl").read_bytes()
        self.assertEqual(a, (self.dir / "b" / "dataset.jsonl").read_bytes())
        self.assertNotEqual(a, (self.dir / "c" / "dataset.jsonl").read_bytes())
        dumped = first_json(run("--dump-config", "pathology", "--n-tau", "1", cwd=self.dir, env={"HAL_SEED": "9"}).stdout)
        self.assertEqual(dumped["seed"], 9)

    def test_dumped_config_validates_and_round_trips(self):
        dumped = first_json(run("--preset", "tcp-paper", "--dump-config", "--output-dir", "o", "pathology", "--n-tau", "1",
                                cwd=self.dir).stdout)
        jsonschema.validate(dumped, schema("config"))
        (self.dir / "cfg.json").write_text(json.dumps(dumped))
        again = first_json(run("--config", "cfg.json", "--dump-config", "pathology", "--n-tau", "1", cwd=self.dir).stdout)
        self.assertEqual(dumped, again)


class Errors(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = pathlib.Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_unknown_system_exits_2(self):
        self.assertEqual(run("simulate", "--system", "nope", cwd=self.dir, check=False).returncode, 2)

    def test_unknown_flag_exits_2(self):
        self.assertEqual(run("simulate", "--bogus", cwd=self.dir, check=False).returncode, 2)

    def test_missing_dataset_exits_2(self):
        self.assertEqual(run("segment", "--dataset", "absent.jsonl", cwd=self.dir, check=False).returncode, 2)

    def test_malformed_config_exits_2(self):
        (self.dir / "bad.json").write_text('{"n_traj": "many"}')
        self.assertEqual(run("--config", "bad.json", "simulate", cwd=self.dir, check=False).returncode, 2)
        (self.dir / "broken.json").write_text("{")
        self.assertEqual(run("--config", "broken.json", "simulate", cwd=self.dir, check=False).returncode, 2)

    def test_schema_error_names_the_line(self):
        run("--output-dir", "o", "simulate", "--system", "sls", "--n-traj", "3", "--horizon", "1", cwd=self.dir)
        lines = (self.dir / "o" / "dataset.jsonl").read_text().splitlines()
        broken = json.loads(lines[1])
        del broken["states"]
        lines[1] = json.dumps(broken)
        (self.dir / "bad.jsonl").write_text("\n".join(lines) + "\n")
        proc = run("segment", "--dataset", "bad.jsonl", cwd=self.dir, check=False)
        self.assertEqual(proc.returncode, 2)
        self.assertIn("line 2", proc.stderr)
        (self.dir / "garbage.jsonl").write_text(lines[0] + "\nnot json\n")
        proc = run("segment", "--dataset", "garbage.jsonl", cwd=self.dir, check=False)
        self.assertEqual(proc.returncode, 2)
        self.assertIn("line 2", proc.stderr)

    def test_divergence_exits_4(self):
        run("--output-dir", "o", "simulate", "--system", "tcp-reno", "--n-traj", "4", "--horizon", "20", cwd=self.dir)
        run("--output-dir", "o", "segment", "--dataset", "o/dataset.jsonl", cwd=self.dir)
        proc = run("--output-dir", "o", "recover", "--dataset", "o/dataset.jsonl", "-m", "2", "--iterations", "20",
                   "--folds", "2", "--n-test", "0", "--encoder-lr", "1e9", "--decoder-lr", "1e9", cwd=self.dir, check=False)
        self.assertEqual(proc.returncode, 4)

    def test_empty_supervision_exits_4(self):
        run("--output-dir", "o", "simulate", "--system", "toy", "--n-traj", "3", "--horizon", "0.3", cwd=self.dir)
        run("--output-dir", "o", "segment", "--dataset", "o/dataset.jsonl", cwd=self.dir)
        proc = run("--output-dir", "o", "train-events", "--dataset", "o/dataset.jsonl", "-m", "2", "--n-test", "0",
                   cwd=self.dir, check=False)
        self.assertEqual(proc.returncode, 4)

    def test_single_mode_dataset_is_degenerate_not_an_error(self):
        run("--output-dir", "o", "simulate", "--system", "toy", "--n-traj", "6", "--horizon", "0.3", cwd=self.dir)
        run("--output-dir", "o", "segment", "--dataset", "o/dataset.jsonl", cwd=self.dir)
        run("--output-dir", "o", "recover", "--dataset", "o/dataset.jsonl", "-m", "2", "--iterations", "20", "--folds",
            "2", "--n-test", "1", cwd=self.dir)
        report = validate_json(self.dir / "o" / "recovery_report.json", "recovery_report")
        self.assertTrue(report["degenerate"])


if __name__ == "__main__":
    HAL = os.path.abspath(sys.argv[1])
    SCHEMAS = pathlib.Path(sys.argv[2])
    unittest.main(argv=[sys.argv[0], "-v"])
