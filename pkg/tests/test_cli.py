import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barycenter import ConfigError, shift_box
from barycenter.cli import main
from barycenter.experiment import parse_config, run_experiment
from barycenter.validation import load_registry, run_checks, suites

SPHERE = {
    "oracle": {"name": "sphere", "params": {"center": [1, 1]}},
    "nu": 2.0,
    "curiosity": {"variance": 0.25},
    "budget": 400,
    "initial_point": [0, 0],
    "seed": 0,
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestShiftBox:
    def test_unit_box(self):
        s = shift_box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(s.offset, 0.0)
        assert s.is_identity

    def test_example(self):
        s = shift_box([-2.0], [1.0])
        np.testing.assert_array_equal(s.offset, [2.0])
        np.testing.assert_array_equal(s.shifted_min, [0.0])
        np.testing.assert_array_equal(s.shifted_max, [3.0])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(-2**20, 0), st.integers(1, 2**20), st.integers(-2**20, 2**20))
    def test_round_trip_on_grid(self, lo, width, k):
        # points on the 2**-20 grid survive the translation exactly
        s = shift_box([lo / 1024.0], [(lo + width) / 1024.0])
        x = np.array([k / 2**20])
        np.testing.assert_array_equal(s.unshift(s.shift(x)), x)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1e3, -1e-3), st.floats(-1e3, 1e3))
    def test_round_trip_general(self, lo, x):
        s = shift_box([lo], [lo + 1.0])
        back = s.unshift(s.shift(np.array([x])))[0]
        assert abs(back - x) <= np.spacing(abs(x) + s.offset[0])

    def test_invalid(self):
        assert main(["shift-box", "--min", "1", "--max", "0"]) == 1

    def test_cli_output(self, capsys):
        assert main(["shift-box", "--min", "-2", "--max", "1"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out == {"offset": [2.0], "shifted_min": [0.0], "shifted_max": [3.0]}


class TestConfig:
    def test_minimal(self):
        cfg = parse_config(SPHERE)
        assert cfg.repetitions == 1 and cfg.format == "csv"
        assert cfg.search.budget == 400

    @pytest.mark.parametrize(
        "patch",
        [
            {"bogus": 1},
            {"oracle": {"name": "sphere", "extra": 1}},
            {"curiosity": {"variance": 0.1, "scale": 2}},
            {"nu": {"re": 1, "imag": 2}},
            {"format": "xml"},
            {"nu": "two"},
            {"budget": 0},
            {"repetitions": 0},
        ],
    )
    def test_rejects(self, patch):
        with pytest.raises(ConfigError):
            parse_config({**SPHERE, **patch})

    def test_missing(self):
        cfg = dict(SPHERE)
        del cfg["budget"]
        with pytest.raises(ConfigError):
            parse_config(cfg)

    def test_complex_box_is_shifted(self):
        cfg = parse_config({**SPHERE, "nu": {"re": 2, "im": 0.5}, "box": {"min": [-2, -2], "max": [2, 2]}})
        np.testing.assert_array_equal(cfg.shift.offset, [2.0, 2.0])
        np.testing.assert_array_equal(cfg.search.initial_point, [2.0, 2.0])
        assert cfg.to_dict()["initial_point"] == [0.0, 0.0]

    def test_complex_results_in_user_coordinates(self):
        cfg = parse_config(
            {
                **SPHERE,
                "oracle": {"name": "sphere", "params": {"center": [-1, 0.5]}},
                "nu": {"re": 2, "im": 0.2},
                "curiosity": {"variance": 0.05},
                "budget": 50,
                "box": {"min": [-2, -2], "max": [2, 2]},
            }
        )
        result = run_experiment(cfg)
        final = result.readouts()[0]
        assert np.all(final >= -2) and np.all(final <= 2)
        # every recorded query, mapped back, lies in the user box
        queries = np.array([cfg.shift.unshift(r.query) for r in result.records[0].rows])
        assert queries.min() >= -2 and queries.max() <= 2


class TestRun:
    def test_budget_one(self, tmp_path):
        path = write(tmp_path, {**SPHERE, "budget": 1})
        out = tmp_path / "run.csv"
        assert main(["run", path, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "n,x[0],x[1],f,mass_magnitude,xhat[0],xhat[1],step_norm"
        assert len(lines) == 2
        summary = json.loads((tmp_path / "run.summary.json").read_text())
        assert summary["queries"] == 1
        assert summary["config"]["budget"] == 1

    def test_deterministic(self, tmp_path):
        path = write(tmp_path, {**SPHERE, "budget": 100})
        main(["run", path, "--out", str(tmp_path / "a.csv")])
        main(["run", path, "--out", str(tmp_path / "b.csv")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_seed_override(self, tmp_path):
        path = write(tmp_path, {**SPHERE, "budget": 20})
        main(["run", path, "--out", str(tmp_path / "a.csv"), "--seed", "1"])
        main(["run", path, "--out", str(tmp_path / "b.csv"), "--seed", "2"])
        assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()

    def test_success_rate(self, tmp_path):
        cfg = {**SPHERE, "repetitions": 50, "success": {"target": [1, 1], "radius": 0.15}}
        path = write(tmp_path, cfg)
        assert main(["run", path, "--out", str(tmp_path / "s.csv")]) == 0
        summary = json.loads((tmp_path / "s.summary.json").read_text())
        assert summary["success_rate"] >= 0.9
        assert len(list(tmp_path.glob("s-rep*.csv"))) == 50
        assert [r["seed"] for r in summary["runs"]] == list(range(50))

    def test_json_format(self, tmp_path):
        path = write(tmp_path, {**SPHERE, "budget": 3})
        assert main(["run", path, "--out", str(tmp_path / "r.json"), "--format", "json"]) == 0
        rows = json.loads((tmp_path / "r.json").read_text())["rows"]
        assert [r["n"] for r in rows] == [1, 2, 3]

    def test_workers(self, tmp_path):
        path = write(tmp_path, {**SPHERE, "budget": 30, "workers": 3})
        assert main(["run", path, "--out", str(tmp_path / "w.csv")]) == 0
        assert len((tmp_path / "w.csv").read_text().splitlines()) == 91

    def test_stdout(self, tmp_path, capsys):
        path = write(tmp_path, {**SPHERE, "budget": 2})
        assert main(["run", path]) == 0
        assert capsys.readouterr().out.startswith("n,x[0]")

    def test_parse_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", str(bad)]) == 1
        assert main(["run", str(tmp_path / "missing.json")]) == 1
        assert main(["run", write(tmp_path, {**SPHERE, "bogus": 1})]) == 1

    def test_oracle_error(self, tmp_path):
        assert main(["run", write(tmp_path, {**SPHERE, "oracle": {"name": "nope"}})]) == 2
        cfg = {**SPHERE, "oracle": {"name": "sphere", "params": {"radius": 1}}}
        assert main(["run", write(tmp_path, cfg)]) == 2

    def test_degenerate(self, tmp_path):
        cfg = {
            "oracle": {"name": "linear", "params": {"gradient": [1.0]}},
            "nu": {"re": 0, "im": np.pi},
            "curiosity": {"variance": 0.1},
            "budget": 2,
            "initial_point": [0],
            "script": [[0], [1]],
        }
        assert main(["run", write(tmp_path, cfg), "--out", str(tmp_path / "d.csv")]) == 3

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1


class TestValidate:
    def test_registry_complete(self):
        registry = load_registry()
        assert registry["version"] >= 1
        assert set(suites(registry)) == {
            "expected-step",
            "step-variance",
            "interference",
            "noise",
            "quotient-lemma",
            "end-to-end",
            "asymmetry",
        }

    def test_interference_suite(self, capsys, tmp_path):
        report = tmp_path / "report.json"
        assert main(["validate", "interference", "--out", str(report)]) == 0
        table = capsys.readouterr().out
        assert "interference.closed-form" in table and "interference.discount" in table
        rows = json.loads(report.read_text())
        assert all(r["passed"] for r in rows)

    def test_zero_variance_exact(self):
        (res,) = run_checks("quotient-lemma.zero-variance")
        assert res.passed and res.predicted == res.empirical

    def test_csv_report(self, tmp_path):
        report = tmp_path / "r.csv"
        assert main(["validate", "asymmetry", "--out", str(report), "--format", "csv"]) == 0
        assert report.read_text().splitlines()[0] == "check,suite,predicted,empirical,se,tolerance,verdict"

    def test_unknown_suite(self):
        assert main(["validate", "nosuch"]) == 1

    def test_failed_check_exit_code(self, monkeypatch):
        from barycenter import validation

        registry = load_registry()
        registry["checks"]["interference.discount"]["rel_tol"] = 1e-6
        monkeypatch.setattr(validation, "load_registry", lambda path=None: registry)
        assert main(["validate", "interference"]) == 4
