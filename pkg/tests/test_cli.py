import csv
import json

import numpy as np
import pytest

from uavplan import cli

CHEAP = ["--scenario", "empty", "--iterations", "1", "--psm-degree", "6", "--solver-iterations", "30"]


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def without_timestamp(path):
    doc = json.loads(path.read_text())
    doc.pop("timestamp")
    doc["config"].pop("output")
    return doc


class TestScenario:
    def test_two_obstacles(self, tmp_path):
        out = tmp_path / "s.json"
        assert cli.main(["scenario", "two_obstacles", "--out", str(out)]) == 0
        assert len(json.loads(out.read_text())["columns"]) == 2

    def test_random_reproducible(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for p in (a, b):
            assert cli.main(["scenario", "random_columns", "--count", "30", "--seed", "7", "--out", str(p)]) == 0
        assert len(json.loads(a.read_text())["columns"]) == 30
        assert a.read_bytes() == b.read_bytes()

    def test_zero_count(self, tmp_path):
        out = tmp_path / "s.json"
        assert cli.main(["scenario", "random_columns", "--count", "0", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["columns"] == []

    def test_negative_count(self, tmp_path):
        assert cli.main(["scenario", "random_columns", "--count", "-1", "--out", str(tmp_path / "s")]) == 64


class TestInvalid:
    def test_zero_iterations(self, tmp_path):
        assert cli.main(["plan", "--scenario", "empty", "--iterations", "0", "--out", str(tmp_path)]) == 64

    def test_unknown_method(self, tmp_path):
        assert cli.main(["plan", "--method", "hp", "--out", str(tmp_path)]) == 64

    def test_unknown_scenario(self, tmp_path):
        assert cli.main(["plan", "--scenario", "nowhere.json", "--out", str(tmp_path)]) == 64

    def test_bad_flag(self):
        assert cli.main(["plan", "--constrained", "maybe"]) == 64

    def test_unknown_config_field(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"schema": cli.CONFIG_SCHEMA, "colour": "red"}))
        assert cli.main(["plan", "--config", str(cfg)]) == 64

    def test_config_round_trip(self):
        cfg = cli.RunConfig(method="psem", guess_level="angular_rate").validate()
        assert cfg.method == "PSEM" and cfg.guess_level == "AngularRate"
        assert cli.RunConfig.from_dict(cfg.to_dict()) == cfg


class TestPlanOutputs:
    @pytest.fixture(scope="class")
    @classmethod
    def run_dir(cls, tmp_path_factory):
        out = tmp_path_factory.mktemp("plan")
        code = cli.main(["plan", *CHEAP, "--out", str(out)])
        return code, out

    def test_exit_code(self, run_dir):
        assert run_dir[0] == 2

    def test_files(self, run_dir):
        _, out = run_dir
        for name in ("result.json", "row.csv", "path.csv", "trajectory.csv", "collocation.csv"):
            assert (out / name).is_file()

    def test_result_document(self, run_dir):
        doc = json.loads((run_dir[1] / "result.json").read_text())
        assert doc["schema"] == cli.RESULT_SCHEMA
        assert doc["result"]["status"] == "IterationLimit"
        assert "total_time" not in doc["row"] and "wall_time" not in doc["result"]
        assert set(doc["timestamp"]) >= {"plan_wall_time", "total_time", "created"}

    def test_trajectory_samples(self, run_dir):
        rows = read_csv(run_dir[1] / "trajectory.csv")
        assert rows[0][0] == "t" and len(rows[0]) == 18
        t = np.array([float(r[0]) for r in rows[1:]])
        assert t.size == cli.TRAJECTORY_SAMPLES and np.all(np.diff(t) > 0)

    def test_report(self, run_dir, capsys):
        assert cli.main(["report", str(run_dir[1])]) == 0
        assert "Position" in capsys.readouterr().out

    def test_reproducible(self, run_dir, tmp_path):
        assert cli.main(["plan", *CHEAP, "--out", str(tmp_path)]) == 2
        assert without_timestamp(tmp_path / "result.json") == without_timestamp(run_dir[1] / "result.json")
        for name in ("row.csv", "path.csv", "trajectory.csv", "collocation.csv"):
            assert (tmp_path / name).read_bytes() == (run_dir[1] / name).read_bytes()

    def test_single_cell_batch_matches_plan(self, run_dir, tmp_path):
        assert cli.main(["batch", *CHEAP, "--levels", "Position", "--methods", "PSM", "--jobs", "1",
                         "--out", str(tmp_path)]) == 0
        cell = tmp_path / "Position_PSM_constrained"
        assert (cell / "row.csv").read_bytes() == (run_dir[1] / "row.csv").read_bytes()
        assert len(read_csv(tmp_path / "table.csv")) == 2


def test_report_empty_dir(tmp_path):
    assert cli.main(["report", str(tmp_path)]) == 64


def test_full_matrix_has_twelve_rows(tmp_path):
    args = ["--scenario", "empty", "--iterations", "1", "--psm-degree", "4", "--psem-degree", "3",
            "--psem-segments", "2", "--solver-iterations", "5"]
    assert cli.main(["batch", *args, "--jobs", "1", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "table.csv")
    assert len(rows) == 13
    assert [r[0] for r in rows[1::2]] == ["Simple", "Position", "Velocity", "Orientation", "AngularRate",
                                         "AngularRateControl"]


@pytest.mark.slow
def test_zero_obstacle_plan_converges(tmp_path):
    """Default settings on the zero-column scenario: exit 0 within the iteration budget."""
    code = cli.main(["plan", "--scenario", "empty", "--method", "PSM", "--guess", "Position",
                     "--out", str(tmp_path)])
    doc = json.loads((tmp_path / "result.json").read_text())
    assert doc["result"]["status"] == "Converged", doc["result"]["message"]
    assert doc["row"]["absolute_error"] <= 1e-2 and doc["result"]["iterations"] <= 10
    assert code == 0
