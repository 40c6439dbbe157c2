import csv
import io as stringio
import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from crpstail import (
    DataFormatError,
    RecordBatch,
    read_records,
    simulate,
    score_series,
    write_records,
)
from crpstail.cli import main
from crpstail.io import format_float, table_to_string, write_table


class TestRecordRoundTrip:
    def test_exact_roundtrip_via_buffer(self):
        batch = simulate("ge", "ideal", 50, seed=7)
        buf = stringio.StringIO()
        write_records(batch, buf)
        buf.seek(0)
        back = read_records(buf)
        assert_array_equal(back.t, batch.t)
        assert_array_equal(back.y, batch.y)
        assert_array_equal(back.params, batch.params)
        assert_array_equal(back.hidden, batch.hidden)
        assert back.family == batch.family

    def test_roundtrip_via_path(self, tmp_path):
        batch = simulate("nn", "unfocused", 20, seed=1)
        path = tmp_path / "records.jsonl"
        write_records(batch, str(path))
        back = read_records(str(path))
        assert_array_equal(back.y, batch.y)
        assert_array_equal(back.params, batch.params)
        assert back.family == "normal_mixture2"

    def test_ensemble_roundtrip(self):
        rng = np.random.default_rng(2)
        batch = RecordBatch(
            t=np.arange(6),
            y=rng.normal(size=6),
            family="ensemble",
            params=rng.normal(size=(6, 11)),
        )
        buf = stringio.StringIO()
        write_records(batch, buf)
        buf.seek(0)
        back = read_records(buf)
        assert back.family == "ensemble"
        assert_array_equal(back.params, batch.params)
        assert back.hidden is None

    def test_hidden_absent_reads_none(self):
        lines = stringio.StringIO(
            '{"t": 0, "y": 1.0, "forecast": {"family": "exponential", "params": [2.0]}}\n'
        )
        batch = read_records(lines)
        assert batch.hidden is None
        assert len(batch) == 1

    def test_blank_lines_skipped(self):
        lines = stringio.StringIO(
            '\n{"t": 0, "y": 1.0, "forecast": {"family": "exponential", "params": [2.0]}}\n\n'
        )
        assert len(read_records(lines)) == 1


def _line(t, fam="exponential", params="[1.0]", extra=""):
    return f'{{"t": {t}, "y": 1.5{extra}, "forecast": {{"family": "{fam}", "params": {params}}}}}'


class TestRecordValidation:
    def test_bad_json_reports_line(self):
        lines = stringio.StringIO(_line(0) + "\n{not json\n")
        with pytest.raises(DataFormatError) as exc:
            read_records(lines)
        assert exc.value.line == 2

    def test_non_object_line(self):
        lines = stringio.StringIO("[1, 2]\n")
        with pytest.raises(DataFormatError) as exc:
            read_records(lines)
        assert exc.value.line == 1

    def test_missing_fields(self):
        lines = stringio.StringIO('{"t": 0, "forecast": {"family": "exponential", "params": [1.0]}}\n')
        with pytest.raises(DataFormatError):
            read_records(lines)
        lines = stringio.StringIO('{"t": 0, "y": 1.0}\n')
        with pytest.raises(DataFormatError):
            read_records(lines)

    def test_mixed_families(self):
        lines = stringio.StringIO(
            _line(0) + "\n" + _line(1, fam="normal", params="[0.0, 1.0]") + "\n"
        )
        with pytest.raises(DataFormatError) as exc:
            read_records(lines)
        assert exc.value.line == 2

    def test_param_length_mismatch(self):
        lines = stringio.StringIO(
            _line(0) + "\n" + _line(1, params="[1.0, 2.0]") + "\n"
        )
        with pytest.raises(DataFormatError) as exc:
            read_records(lines)
        assert exc.value.line == 2

    def test_unknown_family(self):
        lines = stringio.StringIO(_line(0, fam="cauchy") + "\n")
        with pytest.raises(DataFormatError):
            read_records(lines)

    def test_hidden_all_or_none(self):
        lines = stringio.StringIO(
            _line(0, extra=', "hidden": 0.5') + "\n" + _line(1) + "\n"
        )
        with pytest.raises(DataFormatError) as exc:
            read_records(lines)
        assert exc.value.line == 2

    def test_empty_input(self):
        with pytest.raises(DataFormatError):
            read_records(stringio.StringIO(""))


class TestWriteTable:
    def test_csv_golden(self):
        out = table_to_string(
            ["name", "x", "n"],
            [["a", 0.5, 3], ["b", float("nan"), 4]],
            fmt="csv",
        )
        assert out == "name,x,n\na,0.5,3\nb,nan,4\n"

    def test_csv_floats_roundtrip(self):
        vals = [0.1, 1.0 / 3.0, 2.777182946544537e-12]
        out = table_to_string(["x"], [[v] for v in vals], fmt="csv")
        got = [float(r[0]) for r in list(csv.reader(stringio.StringIO(out)))[1:]]
        assert got == vals

    def test_json_payload(self):
        out = table_to_string(
            ["a", "b"],
            [[np.int64(3), np.float64(0.5)]],
            fmt="json",
            meta={"k": 1},
        )
        payload = json.loads(out)
        assert payload["columns"] == ["a", "b"]
        assert payload["meta"] == {"k": 1}
        assert payload["rows"] == [[3, 0.5]]
        # numpy integers must not arrive as 3.0
        assert isinstance(payload["rows"][0][0], int)

    def test_write_to_path(self, tmp_path):
        path = tmp_path / "table.csv"
        write_table(["x"], [[1.5]], str(path), fmt="csv")
        assert path.read_text() == "x\n1.5\n"

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            table_to_string(["x"], [[1.0]], fmt="tsv")

    def test_format_float(self):
        assert format_float(float("nan")) == "nan"
        assert format_float(0.1) == "0.1"
        assert float(format_float(1.0 / 3.0)) == 1.0 / 3.0


def _run(argv):
    return main(argv)


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestCliSimulate:
    def test_writes_parseable_records(self, tmp_path):
        out = tmp_path / "ge.jsonl"
        code = _run(
            ["simulate", "--model", "ge", "--forecaster", "ideal",
             "--t", "100", "--seed", "4", "--out", str(out)]
        )
        assert code == 0
        batch = read_records(str(out))
        assert len(batch) == 100
        assert batch.family == "exponential"
        direct = simulate("ge", "ideal", 100, seed=4)
        assert_array_equal(batch.y, direct.y)

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        argv = ["simulate", "--model", "nn", "--forecaster", "extremist",
                "--t", "50", "--seed", "9"]
        assert _run(argv + ["--out", str(a)]) == 0
        assert _run(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_stdout_default(self, capsys):
        assert _run(["simulate", "--model", "ge", "--forecaster", "ideal",
                     "--t", "5", "--seed", "0"]) == 0
        captured = capsys.readouterr()
        assert len(captured.out.strip().splitlines()) == 5
        assert "simulate: 5 records" in captured.err

    def test_seed_is_mandatory(self):
        with pytest.raises(SystemExit) as exc:
            _run(["simulate", "--model", "ge", "--forecaster", "ideal", "--t", "5"])
        assert exc.value.code == 1

    def test_nonpositive_t_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            _run(["simulate", "--model", "ge", "--forecaster", "ideal",
                  "--t", "0", "--seed", "1"])
        assert exc.value.code == 1


class TestCliScore:
    @pytest.fixture()
    def record_file(self, tmp_path):
        path = tmp_path / "records.jsonl"
        write_records(simulate("ge", "climatological", 200, seed=3), str(path))
        return str(path)

    def test_basic_columns(self, record_file, tmp_path):
        out = tmp_path / "scores.csv"
        assert _run(["score", "--records", record_file, "--out", str(out)]) == 0
        header, rows = _read_csv(out)
        assert header == ["t", "y", "crps"]
        assert len(rows) == 200
        batch = read_records(record_file)
        want = score_series(batch).values
        got = np.array([float(r[2]) for r in rows])
        assert_allclose(got, want, rtol=0.0)  # exact: repr round-trips

    def test_weight_and_shuffle_columns(self, record_file, tmp_path):
        out = tmp_path / "scores.json"
        code = _run(
            ["score", "--records", record_file, "--weight-quantile", "0.9",
             "--shuffle-seed", "11", "--format", "json", "--out", str(out)]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["columns"] == ["t", "y", "crps", "wcrps", "crps_shuffled"]
        batch = read_records(record_file)
        threshold = float(np.quantile(batch.y, 0.9))
        assert payload["meta"]["weight_threshold"] == pytest.approx(threshold)
        wcrps = np.array([r[3] for r in payload["rows"]])
        want = score_series(batch, weight_threshold=threshold).values
        assert_allclose(wcrps, want, rtol=1e-15)

    def test_missing_file_is_data_error(self, tmp_path):
        assert _run(["score", "--records", str(tmp_path / "nope.jsonl")]) == 2

    def test_malformed_file_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{broken\n")
        assert _run(["score", "--records", str(bad)]) == 2


class TestCliVerifyIndexCurve:
    def test_sim_mode(self, tmp_path):
        out = tmp_path / "curve.csv"
        code = _run(
            ["verify", "index-curve", "--model", "ge", "--forecaster", "ideal",
             "--t", "4000", "--seed", "3", "--quantiles", "0.875,0.9",
             "--out", str(out)]
        )
        assert code == 0
        header, rows = _read_csv(out)
        assert header == [
            "order", "threshold", "n_tail", "t_forecast", "t_clim",
            "log_p_forecast", "log_p_clim", "index", "pathological",
            "auto_calibrated", "pit_max_dev", "note",
        ]
        assert len(rows) == 2
        assert [float(r[0]) for r in rows] == [0.875, 0.9]
        for r in rows:
            assert float(r[7]) > 0.9  # index
            assert r[8] == "0"  # pathological
            assert r[11] == ""  # note

    def test_file_mode(self, tmp_path):
        f, c = tmp_path / "f.jsonl", tmp_path / "c.jsonl"
        write_records(simulate("ge", "ideal", 4000, seed=3), str(f))
        write_records(simulate("ge", "climatological", 4000, seed=3), str(c))
        out = tmp_path / "curve.json"
        code = _run(
            ["verify", "index-curve", "--records", str(f), "--records-clim",
             str(c), "--quantiles", "0.9", "--format", "json", "--out", str(out)]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["meta"]["fit_method"] == "pwm"
        assert payload["meta"]["fit_gamma"] == pytest.approx(0.25, abs=0.15)
        assert payload["rows"][0][7] > 0.9

    def test_file_mode_needs_clim(self, tmp_path):
        f = tmp_path / "f.jsonl"
        write_records(simulate("ge", "ideal", 100, seed=3), str(f))
        assert _run(["verify", "index-curve", "--records", str(f)]) == 1

    def test_sim_mode_needs_all_flags(self):
        assert _run(["verify", "index-curve", "--model", "ge"]) == 1

    def test_decreasing_quantiles_numeric_error(self, tmp_path):
        code = _run(
            ["verify", "index-curve", "--model", "ge", "--forecaster", "ideal",
             "--t", "2000", "--seed", "3", "--quantiles", "0.9,0.8"]
        )
        assert code == 3


class TestCliVerifyDm:
    def test_long_format(self, tmp_path):
        out = tmp_path / "dm.csv"
        code = _run(
            ["verify", "dm", "--model", "ge", "--t", "2000", "--seed", "3",
             "--quantiles", "0.5,0.875", "--out", str(out)]
        )
        assert code == 0
        header, rows = _read_csv(out)
        assert header == ["quantile", "row", "col", "statistic", "p_value"]
        assert len(rows) == 2 * 4 * 3  # orders x forecasters x rivals
        stats = {
            (r[0], r[1], r[2]): float(r[3]) for r in rows
        }
        # antisymmetry holds in the emitted table
        for (q, a, b), v in stats.items():
            assert stats[(q, b, a)] == pytest.approx(-v, rel=1e-12)

    def test_ideal_dominates_at_bulk_threshold(self, tmp_path):
        out = tmp_path / "dm.csv"
        _run(["verify", "dm", "--model", "ge", "--t", "20000", "--seed", "0",
              "--quantiles", "0.5", "--out", str(out)])
        _, rows = _read_csv(out)
        ideal_rows = [r for r in rows if r[1] == "ideal"]
        assert len(ideal_rows) == 3
        assert all(float(r[3]) > 1.96 for r in ideal_rows)

    def test_needs_sim_flags(self):
        assert _run(["verify", "dm", "--model", "ge"]) == 1


class TestCliVerifyQqpp:
    def test_clim_scores_survive_shuffling(self, tmp_path):
        # a constant forecast scores a permutation identically, so the
        # paired and shuffled score distributions coincide exactly
        out = tmp_path / "qq.json"
        code = _run(
            ["verify", "qqpp", "--model", "ge", "--forecaster",
             "climatological", "--t", "500", "--seed", "3",
             "--shuffle-seed", "1", "--format", "json", "--out", str(out)]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["meta"]["ks_distance"] == 0.0
        kinds = {r[0] for r in payload["rows"]}
        assert kinds == {"qq", "pp"}

    def test_ideal_scores_differ_from_shuffled(self, tmp_path):
        out = tmp_path / "qq.json"
        _run(["verify", "qqpp", "--model", "ge", "--forecaster", "ideal",
              "--t", "2000", "--seed", "3", "--shuffle-seed", "1",
              "--format", "json", "--out", str(out)])
        payload = json.loads(out.read_text())
        assert payload["meta"]["ks_distance"] > payload["meta"]["ks_critical_1pct"]

    def test_shuffle_seed_required(self):
        assert _run(["verify", "qqpp", "--model", "ge", "--forecaster",
                     "ideal", "--t", "100", "--seed", "3"]) == 1


class TestCliVerifyCup:
    def test_grid_includes_flat_edge(self, tmp_path):
        out = tmp_path / "cup.csv"
        code = _run(["verify", "cup", "--gamma", "0.1", "--grid", "5",
                     "--out", str(out)])
        assert code == 0
        header, rows = _read_csv(out)
        assert header == ["gamma", "a", "phi"]
        assert len(rows) == 5
        assert float(rows[0][1]) == 0.0
        assert float(rows[-1][1]) == pytest.approx(3.0 / 1.1, rel=1e-12)
        # the two edges of the ambiguity region score identically
        assert float(rows[-1][2]) == pytest.approx(float(rows[0][2]), rel=1e-9)

    def test_multiple_gammas_json(self, tmp_path):
        out = tmp_path / "cup.json"
        code = _run(["verify", "cup", "--gamma", "0,0.25", "--grid", "3",
                     "--format", "json", "--out", str(out)])
        assert code == 0
        payload = json.loads(out.read_text())
        assert len(payload["rows"]) == 6
        assert payload["meta"]["gamma=0.25"]["area"] == pytest.approx(
            0.9255327550942222, rel=1e-9
        )

    def test_shape_out_of_range_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            _run(["verify", "cup", "--gamma", "1.0"])
        assert exc.value.code == 1


class TestCliFitGp:
    def test_single_row_report(self, tmp_path):
        rec = tmp_path / "r.jsonl"
        write_records(simulate("ge", "ideal", 4000, seed=0), str(rec))
        out = tmp_path / "fit.json"
        code = _run(["fit-gp", "--records", str(rec), "--threshold-order",
                     "0.9", "--format", "json", "--out", str(out)])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["columns"] == [
            "sigma", "gamma", "threshold", "threshold_order", "n_excesses",
            "method",
        ]
        row = payload["rows"][0]
        assert row[4] == 400 and isinstance(row[4], int)
        assert row[5] == "pwm"
        assert "b0" in payload["meta"]["diagnostics"]

    def test_too_few_excesses_is_data_error(self, tmp_path):
        rec = tmp_path / "r.jsonl"
        write_records(simulate("ge", "ideal", 20, seed=0), str(rec))
        assert _run(["fit-gp", "--records", str(rec), "--threshold-order",
                     "0.9"]) == 2


class TestInstalledEntryPoint:
    def test_console_script_roundtrip(self, tmp_path):
        out = tmp_path / "cup.csv"
        cmd = [sys.executable, "-m", "crpstail", "verify", "cup", "--gamma",
               "0.25", "--grid", "3", "--out", str(out)]
        r1 = subprocess.run(cmd, capture_output=True, text=True)
        assert r1.returncode == 0
        assert "area=0.925533" in r1.stderr
        first = out.read_bytes()
        r2 = subprocess.run(cmd, capture_output=True, text=True)
        assert r2.returncode == 0
        assert out.read_bytes() == first
