import json

import numpy as np
import pytest

from smcmix import (
    DataError,
    InvalidModelError,
    MalformedRow,
    NonMonotoneOnset,
    Panel,
    StateSpace,
    UnknownAttribute,
    fixtures,
)
from smcmix.dataio import (
    export_tds_graph,
    model_from_dict,
    model_to_dict,
    read_model,
    read_panel,
    read_scenario,
    write_model,
    write_panel,
    write_scenario,
)
from smcmix.sim import Scenario

from conftest import traj


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestReadPanel:
    def test_duration_differencing(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,1,A,0,10\n"
            "s1,1,B,3,10\n",
        )
        panel, report = read_panel(f)
        t = panel.subjects[0][0]
        np.testing.assert_array_equal(t.sojourns, [3.0, 7.0])
        assert report.subject_ids == ("s1",)
        assert report.merge_count == 0

    def test_merges_repeated_attribute(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,1,A,0,10\n"
            "s1,1,A,2,10\n"
            "s1,1,B,5,10\n",
        )
        panel, report = read_panel(f)
        t = panel.subjects[0][0]
        np.testing.assert_array_equal(t.states, [0, 1])
        np.testing.assert_array_equal(t.sojourns, [5.0, 5.0])
        assert report.merge_count == 1

    def test_non_monotone_onset(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,1,A,3,10\n"
            "s1,1,B,1,10\n",
        )
        with pytest.raises(NonMonotoneOnset):
            read_panel(f)

    def test_unknown_attribute_with_fixed_labels(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,1,A,0,10\n"
            "s1,1,Z,3,10\n",
        )
        with pytest.raises(UnknownAttribute):
            read_panel(f, labels=["A", "B"])

    def test_malformed_rows(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,one,A,0,10\n",
        )
        with pytest.raises(MalformedRow):
            read_panel(f)
        f2 = write_csv(tmp_path / "q.csv", "subject,attribute\n" "s1,A\n")
        with pytest.raises(MalformedRow):
            read_panel(f2)

    def test_too_short_dropped_with_warning(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,1,A,0,10\n"
            "s1,1,B,4,10\n"
            "s2,1,A,0,10\n",
        )
        panel, report = read_panel(f)
        assert panel.n_subjects == 1
        assert ("s2", 1) in report.dropped_sequences
        assert any("fewer than two states" in w for w in report.warnings)

    def test_subject_with_missing_replication_dropped(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,1,A,0,10\n"
            "s1,1,B,4,10\n"
            "s1,2,B,0,10\n"
            "s1,2,A,4,10\n"
            "s2,1,A,0,10\n"
            "s2,1,B,4,10\n",
        )
        panel, report = read_panel(f)
        assert report.subject_ids == ("s1",)
        assert "s2" in report.dropped_subjects

    def test_missing_end(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset\n"
            "s1,1,A,0\n"
            "s1,1,B,4\n",
        )
        with pytest.raises(DataError, match="record end"):
            read_panel(f)

    def test_end_sidecar(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset\n"
            "s1,1,A,0\n"
            "s1,1,B,4\n",
        )
        sidecar = write_csv(
            tmp_path / "ends.csv", "subject,replication,end\ns1,1,9\n"
        )
        panel, _ = read_panel(f, ends_path=sidecar)
        np.testing.assert_array_equal(panel.subjects[0][0].sojourns, [4.0, 5.0])

    def test_end_before_last_onset(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,1,A,0,3\n"
            "s1,1,B,4,3\n",
        )
        with pytest.raises(DataError):
            read_panel(f)

    def test_absorbing_label_sorted_last(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,1,Zesty,0,10\n"
            "s1,1,Acid,3,10\n"
            "s1,1,STOP,6,10\n",
        )
        panel, _ = read_panel(f)
        assert panel.space.labels == ("Acid", "Zesty", "STOP")
        assert panel.space.absorbing == 2

    def test_custom_delimiter(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject;replication;attribute;onset;end\n"
            "s1;1;A;0;10\n"
            "s1;1;B;3;10\n",
        )
        panel, _ = read_panel(f, delimiter=";")
        np.testing.assert_array_equal(panel.subjects[0][0].sojourns, [3.0, 7.0])

    def test_absorbing_mid_sequence_rejected(self, tmp_path):
        f = write_csv(
            tmp_path / "p.csv",
            "subject,replication,attribute,onset,end\n"
            "s1,1,A,0,10\n"
            "s1,1,STOP,3,10\n"
            "s1,1,B,6,10\n",
        )
        with pytest.raises(DataError, match="absorbing"):
            read_panel(f)


class TestPanelRoundTrip:
    def test_identity_on_dyadic_fixture(self, tiny_panel, tmp_path):
        path = tmp_path / "panel.csv"
        write_panel(path, tiny_panel, subject_ids=["a", "b", "c"])
        back, report = read_panel(path)
        assert back == tiny_panel
        assert report.subject_ids == ("a", "b", "c")

    def test_absorbing_round_trip(self, absorbing_space, tmp_path):
        panel = Panel(
            space=absorbing_space,
            subjects=((traj([0, 1, 2], [1.5, 2.5, 1.0]),),),
        )
        path = tmp_path / "panel.csv"
        write_panel(path, panel)
        back, _ = read_panel(path)
        assert back == panel

    def test_writer_deterministic(self, tiny_panel, tmp_path):
        write_panel(tmp_path / "a.csv", tiny_panel)
        write_panel(tmp_path / "b.csv", tiny_panel)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_subject_id_count_must_match(self, tiny_panel, tmp_path):
        with pytest.raises(ValueError):
            write_panel(tmp_path / "a.csv", tiny_panel, subject_ids=["only-one"])


class TestModelJson:
    def test_round_trip_reference_model(self, tmp_path):
        model = fixtures.well_separated_model()
        path = tmp_path / "model.json"
        write_model(path, model)
        back = read_model(path)
        assert back == model
        # canonical bytes: rewriting the parsed model reproduces the file
        write_model(tmp_path / "again.json", back)
        assert (tmp_path / "again.json").read_bytes() == path.read_bytes()

    def test_rejects_bad_row_sum(self, tmp_path):
        doc = model_to_dict(fixtures.one_component_model())
        doc["components"][0]["trans"][0] = [0.0, 0.1, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05]
        with pytest.raises(InvalidModelError):
            model_from_dict(doc)

    def test_rejects_negative_shape(self):
        doc = model_to_dict(fixtures.one_component_model())
        doc["components"][0]["sojourn"][0]["shape"] = -1.0
        with pytest.raises(InvalidModelError):
            model_from_dict(doc)

    def test_rejects_unknown_version(self, tmp_path):
        doc = model_to_dict(fixtures.one_component_model())
        doc["meta"]["format_version"] = 99
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError):
            read_model(path)

    def test_absorbing_model_round_trip(self, tmp_path):
        from test_sim import absorbing_model

        model = absorbing_model()
        write_model(tmp_path / "m.json", model)
        assert read_model(tmp_path / "m.json") == model


class TestScenarioJson:
    def test_round_trip(self, tmp_path):
        scenario = fixtures.benchmark_scenario("well_separated", seed=5)
        write_scenario(tmp_path / "s.json", scenario)
        back = read_scenario(tmp_path / "s.json")
        assert back.model == scenario.model
        assert back.stop_rule == 10 and back.seed == 5
        assert back.name == "well_separated"

    def test_absorbing_stop_rule(self, tmp_path):
        from test_sim import absorbing_model

        scenario = Scenario(
            model=absorbing_model(), n_subjects=5, n_replications=2,
            stop_rule="absorbing", seed=1, replicate_count=2,
        )
        write_scenario(tmp_path / "s.json", scenario)
        assert read_scenario(tmp_path / "s.json").stop_rule == "absorbing"

    def test_bundled_scenarios_parse(self):
        for name in fixtures.BUNDLED_SCENARIOS:
            scenario = read_scenario(fixtures.scenario_path(name))
            assert scenario.replicate_count == 50
            assert scenario.model.space.labels == fixtures.CHOCOLATE_LABELS

    def test_bundled_match_builders(self):
        assert read_scenario(fixtures.scenario_path("well_separated")).model == (
            fixtures.well_separated_model()
        )
        assert read_scenario(fixtures.scenario_path("chocolate70")).model == (
            fixtures.one_component_model()
        )


class TestTdsGraph:
    def make_panel(self):
        # 100 subjects; A elicited by all, B by 86, C by 14.  Exits from A:
        # 86 toward B, 14 toward C, so P(A->B)=.86 and P(A->C)=.14.
        space = StateSpace(labels=("A", "B", "C"))
        subjects = []
        for i in range(100):
            if i < 16:
                subjects.append((traj([0, 1, 0], [1, 1, 1]),))
            elif i < 30:
                subjects.append((traj([0, 2, 0], [1, 1, 1]),))
            else:
                subjects.append((traj([1, 0, 1], [1, 1, 1]),))
        return Panel(space=space, subjects=tuple(subjects))

    def test_threshold_above_one_gives_no_edges(self, tiny_panel):
        dot = export_tds_graph(tiny_panel, prob_threshold=1.01)
        assert "->" not in dot
        assert '"A";' in dot and '"B";' in dot

    def test_deterministic_two_state_panel(self, two_state_space):
        panel = Panel(space=two_state_space, subjects=((traj([0, 1], [1.0, 1.0]),),))
        dot = export_tds_graph(panel)
        assert '"A" -> "B" [label="1.00"];' in dot
        assert dot.count("->") == 1

    def test_probability_threshold_boundary(self):
        panel = self.make_panel()
        dot = export_tds_graph(panel, prob_threshold=0.15, elicit_frac=0.5)
        assert '"A" -> "C"' not in dot  # 0.14 is below the cut
        assert '"A" -> "B"' in dot  # 0.86 clears it
        assert '"C"' not in dot  # elicited by only 14% of subjects

    def test_cluster_subset(self):
        panel = self.make_panel()
        dot = export_tds_graph(panel, subjects=range(16, 30), prob_threshold=0.15)
        assert '"A" -> "C"' in dot  # within the subset every A exit goes to C
        assert '"B"' not in dot


class TestAtomicWrites:
    def test_no_partial_output_on_failure(self, tmp_path):
        target = tmp_path / "out"
        target.mkdir()  # writing over a directory must fail
        with pytest.raises(OSError):
            write_model(target, fixtures.one_component_model())
        assert list(tmp_path.iterdir()) == [target]
        assert list(target.iterdir()) == []
