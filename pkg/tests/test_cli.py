import csv
import json
from pathlib import Path

import numpy as np
import pytest

from smcmix import fixtures
from smcmix.cli import main
from smcmix.dataio import read_model, write_model, write_scenario
from smcmix.sim import Scenario

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture()
def small_scenario_file(tmp_path):
    scenario = Scenario(
        model=fixtures.well_separated_model(),
        n_subjects=40,
        n_replications=3,
        stop_rule=6,
        seed=314,
        replicate_count=2,
        name="small",
    )
    path = tmp_path / "scenario.json"
    write_scenario(path, scenario)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestPipeline:
    def test_simulate_fit_classify_graph(self, tmp_path, capsys, small_scenario_file):
        panel = tmp_path / "panel.csv"
        truth = tmp_path / "truth.csv"
        code, out, _ = run(
            capsys, "simulate", "--scenario", small_scenario_file, "--out", panel,
            "--labels", truth,
        )
        assert code == 0 and panel.exists() and truth.exists()

        model = tmp_path / "model.json"
        post = tmp_path / "post.csv"
        code, out, _ = run(
            capsys, "fit", "--data", panel, "--components", 2, "--seed", 3,
            "--out", model, "--posteriors", post,
        )
        assert code == 0
        assert "converged:" in out
        fitted = read_model(model)
        assert fitted.n_components == 2
        with open(post) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 40
        for row in rows:
            total = float(row["comp_1"]) + float(row["comp_2"])
            assert total == pytest.approx(1.0, abs=1e-9)

        labels = tmp_path / "labels.csv"
        code, out, _ = run(
            capsys, "classify", "--data", panel, "--model", model, "--out", labels
        )
        assert code == 0
        with open(labels) as fh:
            assignment = list(csv.DictReader(fh))
        assert len(assignment) == 40
        assert set(r["component"] for r in assignment) <= {"1", "2"}
        # classify must agree with the argmax of the posterior file
        for lab, row in zip(assignment, rows):
            expected = "1" if float(row["comp_1"]) >= float(row["comp_2"]) else "2"
            assert lab["component"] == expected

        dot = tmp_path / "g.dot"
        code, _, _ = run(
            capsys, "graph", "--data", panel, "--labels", labels, "--cluster", 1,
            "--out", dot,
        )
        assert code == 0
        text = dot.read_text()
        assert text.startswith("digraph tds {")
        assert text.rstrip().endswith("}")

    def test_bench_runs_on_scenario(self, tmp_path, capsys, small_scenario_file):
        table = tmp_path / "table.csv"
        code, out, _ = run(
            capsys, "bench", "--scenario", small_scenario_file, "--replicates", 2,
            "--out", table,
        )
        assert code == 0
        assert "class_rate" in out
        with open(table) as fh:
            rows = list(csv.DictReader(fh))
        assert {"metric", "mean", "sd"} <= set(rows[0].keys())

    def test_bench_sweep_histogram(self, tmp_path, capsys, small_scenario_file):
        code, out, _ = run(
            capsys, "bench", "--scenario", small_scenario_file, "--replicates", 2,
            "--g-min", 1, "--g-max", 2,
        )
        assert code == 0
        assert "bic_picks:" in out

    def test_select_one_row(self, tmp_path, capsys, small_scenario_file):
        panel = tmp_path / "panel.csv"
        run(capsys, "simulate", "--scenario", small_scenario_file, "--out", panel)
        code, out, _ = run(
            capsys, "select", "--data", panel, "--g-min", 1, "--g-max", 1, "--seed", 1
        )
        assert code == 0
        lines = [l for l in out.splitlines() if l.strip()]
        assert lines[0].lstrip().startswith("G")
        data_lines = [l for l in lines if l.lstrip().startswith("1 ")]
        assert len(data_lines) == 1
        assert "chosen_bic: 1" in out


class TestGoldenSummary:
    def test_fit_on_shipped_fixture(self, tmp_path, capsys):
        panel = tmp_path / "panel.csv"
        code, _, _ = run(
            capsys, "simulate", "--scenario", "well_separated", "--out", panel
        )
        assert code == 0
        model = tmp_path / "model.json"
        code, out, _ = run(
            capsys, "fit", "--data", panel, "--components", 2, "--seed", 7,
            "--out", model,
        )
        assert code == 0
        assert out == (GOLDEN / "fit_summary.txt").read_text()


class TestClassifyLabelOrder:
    def test_model_label_order_wins(self, tmp_path, capsys):
        """The data file's alphabetical label order differs from the
        model's; classify must follow the model."""
        from conftest import make_component
        from smcmix import MixtureModel, StateSpace

        # "Zip" sorts after "Alp", but the model puts Zip first
        space = StateSpace(labels=("Zip", "Alp"))
        comp_a = make_component([0.999, 0.001], [[0, 1], [1, 0]], [(2, 1), (2, 1)])
        comp_b = make_component([0.001, 0.999], [[0, 1], [1, 0]], [(2, 1), (2, 1)])
        model = MixtureModel(
            space=space, weights=np.array([0.5, 0.5]), components=(comp_a, comp_b)
        )
        model_path = tmp_path / "model.json"
        write_model(model_path, model)

        data = tmp_path / "panel.csv"
        data.write_text(
            "subject,replication,attribute,onset,end\n"
            "s1,1,Zip,0,4\n"
            "s1,1,Alp,2,4\n"
            "s2,1,Alp,0,4\n"
            "s2,1,Zip,2,4\n"
        )
        labels = tmp_path / "labels.csv"
        code, _, _ = run(
            capsys, "classify", "--data", data, "--model", model_path, "--out", labels
        )
        assert code == 0
        with open(labels) as fh:
            rows = {r["subject"]: r["component"] for r in csv.DictReader(fh)}
        # s1 starts in Zip -> component 1 dominates; s2 starts in Alp -> 2
        assert rows == {"s1": "1", "s2": "2"}


class TestErrorPaths:
    def test_missing_file_exit_2(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "fit", "--data", tmp_path / "nope.csv", "--components", 2,
            "--out", tmp_path / "m.json",
        )
        assert code == 2
        doc = json.loads(err)
        assert doc["error"] == "FileNotFoundError"
        assert not (tmp_path / "m.json").exists()

    def test_numerical_failure_exit_3(self, tmp_path, capsys):
        # model that forbids the panel's only starting state
        from conftest import make_component
        from smcmix import MixtureModel, StateSpace

        space = StateSpace(labels=("A", "B"))
        comp = make_component([1.0, 0.0], [[0, 1], [1, 0]], [(1, 1), (1, 1)])
        model_path = tmp_path / "model.json"
        write_model(model_path, MixtureModel(space=space, weights=np.array([1.0]),
                                             components=(comp,)))
        data = tmp_path / "panel.csv"
        data.write_text(
            "subject,replication,attribute,onset,end\n"
            "s1,1,B,0,5\n"
            "s1,1,A,2,5\n"
        )
        code, _, err = run(
            capsys, "classify", "--data", data, "--model", model_path,
            "--out", tmp_path / "labels.csv",
        )
        assert code == 3
        assert json.loads(err)["error"] == "AllComponentsImpossible"
        assert not (tmp_path / "labels.csv").exists()

    def test_bad_scenario_name_exit_2(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "simulate", "--scenario", "no_such_thing", "--out", tmp_path / "p.csv"
        )
        assert code == 2
        assert json.loads(err)["error"] == "DataError"

    def test_graph_labels_without_cluster(self, tmp_path, capsys, small_scenario_file):
        panel = tmp_path / "panel.csv"
        run(capsys, "simulate", "--scenario", small_scenario_file, "--out", panel)
        labels = tmp_path / "labels.csv"
        labels.write_text("subject,component\n1,1\n")
        code, _, err = run(capsys, "graph", "--data", panel, "--labels", labels)
        assert code == 2

    def test_classify_rejects_attribute_override(self, tmp_path, capsys, small_scenario_file):
        panel = tmp_path / "panel.csv"
        run(capsys, "simulate", "--scenario", small_scenario_file, "--out", panel)
        model = tmp_path / "model.json"
        run(capsys, "fit", "--data", panel, "--components", 2, "--seed", 3, "--out", model)
        code, _, err = run(
            capsys, "classify", "--data", panel, "--model", model,
            "--attributes", "A,B", "--out", tmp_path / "l.csv",
        )
        assert code == 2
        assert "conflicts" in json.loads(err)["message"]
