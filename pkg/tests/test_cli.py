import json
import subprocess
import sys

import numpy as np
import pytest

from tailbound.cli import main, read_table, write_table


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def rademacher12(tmp_path):
    path = tmp_path / "rad12.json"
    path.write_text(json.dumps({"type": "rademacher", "weights": [1.0] * 12}))
    return path


@pytest.fixture
def martingale_file(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "mart.json"
    path.write_text(json.dumps({
        "type": "martingale",
        "weights": rng.standard_normal(5).tolist(),
        "rule": {"kind": "window", "u": rng.uniform(0.1, 1, (5, 2)).tolist(),
                 "v": rng.uniform(0.1, 1, (5, 2)).tolist()},
    }))
    return path


class TestEval:
    def test_w_at_one(self, capsys):
        code, out, _ = run(capsys, "eval", "--x", "1.0", "--bounds", "w")
        assert code == 0
        assert out == "x,w\n1.0,0.6065306597126334\n"

    def test_wtilde(self, capsys):
        _, out, _ = run(capsys, "eval", "--x", "1.5,0.5", "--bounds", "wtilde")
        assert out.splitlines()[1:] == ["1.5,0.4444444444444444", "0.5,1.0"]

    def test_column_order_fixed(self, capsys):
        _, out, _ = run(capsys, "eval", "--x", "2", "--bounds", "markov2,w,hoeffding")
        assert out.splitlines()[0] == "x,hoeffding,w,markov2"

    def test_default_grid(self, capsys):
        _, out, _ = run(capsys, "eval")
        lines = out.splitlines()
        assert lines[0] == "x,hoeffding,v,w,wtilde,edelman15,markov2"
        assert len(lines) == 65
        assert float(lines[1].split(",")[0]) == pytest.approx(0.1)
        assert float(lines[-1].split(",")[0]) == pytest.approx(6.4)

    def test_json_mirrors_keys(self, capsys):
        _, out, _ = run(capsys, "eval", "--x", "1.0", "--bounds", "w,v", "--format", "json")
        assert json.loads(out) == [{"x": 1.0, "v": 0.6065306597126334, "w": 0.6065306597126334}]

    @pytest.mark.parametrize(
        "argv",
        [
            ["eval", "--grid", "0:1:10:log"],
            ["eval", "--grid", "1:2:0:lin"],
            ["eval", "--grid", "1:2:3"],
            ["eval", "--grid", "1:2:3:cubic"],
            ["eval", "--x", "abc"],
            ["eval", "--x", "1", "--grid", "1:2:3:lin"],
            ["eval", "--bounds", "nope"],
            ["eval", "--x", "0", "--strict"],
        ],
    )
    def test_usage_errors(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 2 and "error" in err

    def test_argparse_errors_exit_2(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["eval", "--format", "xml"])
        assert info.value.code == 2

    def test_non_strict_zero(self, capsys):
        _, out, _ = run(capsys, "eval", "--x", "0", "--bounds", "w")
        assert out.splitlines()[1] == "0.0,1.0"


class TestTableAndCrossings:
    def test_crossings(self, capsys):
        code, out, _ = run(capsys, "crossings")
        assert code == 0
        _, rows = read_table(out)
        values = {r[0]: r[1] for r in rows}
        assert str(values["z_v"]).startswith("1.312")
        assert str(values["z_w"]).startswith("1.365")
        assert str(values["z_wtilde"]).startswith("1.865")
        assert all(r[2] <= 1e-12 for r in rows)

    def test_table(self, capsys):
        code, out, _ = run(capsys, "table", "--grid", "1:10:4:lin")
        assert code == 0
        columns, rows = read_table(out)
        assert columns[-1] == "w_over_v" and len(rows) == 4
        assert abs(rows[-1][-1] - 1) <= 0.01


class TestRoundTrip:
    def test_csv_byte_identical(self, capsys, tmp_path):
        out = tmp_path / "t.csv"
        run(capsys, "table", "--out", str(out))
        text = out.read_text()
        assert write_table(*read_table(text)) == text

    def test_json_round_trip(self, capsys, tmp_path):
        out = tmp_path / "t.json"
        run(capsys, "eval", "--format", "json", "--out", str(out))
        text = out.read_text()
        assert write_table(*read_table(text, "json"), "json") == text

    def test_mixed_cells(self):
        text = write_table(["status", "x", "flag"], [["PASS", 0.1, True], ["FAIL", float("nan"), False]])
        assert write_table(*read_table(text)) == text


class TestVerifyExact:
    def test_rademacher_default_grid(self, capsys, rademacher12, tmp_path):
        out = tmp_path / "report.csv"
        code, _, err = run(capsys, "verify-exact", "--instance", str(rademacher12),
                           "--bounds", "w", "--out", str(out))
        assert code == 0 and "0 violation" in err
        columns, rows = read_table(out.read_text())
        assert columns == ["x", "tail", "margin", "w", "violation"]
        assert len(rows) == 64

    def test_all_one_sided_default(self, capsys, rademacher12):
        _, out, _ = run(capsys, "verify-exact", "--instance", str(rademacher12))
        assert out.splitlines()[0] == "x,tail,margin,hoeffding,v,w,edelman15,violation"

    def test_two_sided_bounded(self, capsys, tmp_path):
        path = tmp_path / "b.json"
        path.write_text(json.dumps({
            "type": "bounded", "two_sided": True, "weights": [1, 2, 3],
            "dists": [{"support": [-1, 1], "probs": [0.5, 0.5]},
                      {"support": [-1, 0.5], "probs": [1 / 3, 2 / 3]},
                      {"support": [-0.5, 0, 0.5], "probs": [0.25, 0.5, 0.25]}],
        }))
        code, out, _ = run(capsys, "verify-exact", "--instance", str(path))
        assert code == 0
        assert out.splitlines()[0] == "x,tail,margin,wtilde,markov2,violation"

    def test_fabricated_violation(self, capsys, rademacher12, tmp_path):
        out = tmp_path / "report.csv"
        run(capsys, "verify-exact", "--instance", str(rademacher12), "--bounds", "w", "--out", str(out))
        columns, rows = read_table(out.read_text())
        assert run(capsys, "verify-exact", "--recheck", str(out))[0] == 0
        rows[10][columns.index("tail")] = rows[10][columns.index("w")] + 0.01
        out.write_text(write_table(columns, rows))
        code, _, err = run(capsys, "verify-exact", "--recheck", str(out))
        assert code == 1 and "1 violation" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "verify-exact", "--instance", str(tmp_path / "nope.json"))
        assert code == 2 and "cannot read" in err

    def test_malformed_json(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"type": "rademacher",\n "weights": [1, 2,]}')
        code, _, err = run(capsys, "verify-exact", "--instance", str(path))
        assert code == 2 and "bad.json:2:" in err

    @pytest.mark.parametrize(
        "payload, fragment",
        [
            ({"weights": [1]}, "missing field 'type'"),
            ({"type": "rademacher"}, "missing field 'weights'"),
            ({"type": "rademacher", "weights": ["a"]}, "field 'weights'"),
            ({"type": "bounded", "weights": [1],
              "dists": [{"support": [-1, 1], "probs": [0.2, 0.8]}]}, "field 'dists[0]'"),
            ({"type": "gaussian", "weights": [1]}, "field 'type'"),
            ({"type": "martingale", "weights": [1], "rule": {"u": [[0.5]], "v": [[0.5]]}}, "verify-mc"),
        ],
    )
    def test_field_diagnostics(self, capsys, tmp_path, payload, fragment):
        path = tmp_path / "i.json"
        path.write_text(json.dumps(payload))
        code, _, err = run(capsys, "verify-exact", "--instance", str(path))
        assert code == 2 and fragment in err

    def test_mismatched_bounds(self, capsys, rademacher12):
        code, _, err = run(capsys, "verify-exact", "--instance", str(rademacher12), "--bounds", "wtilde")
        assert code == 2 and "one-sided" in err


class TestVerifyMc:
    def test_martingale(self, capsys, martingale_file, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            code, _, _ = run(capsys, "verify-mc", "--instance", str(martingale_file),
                             "--samples", "20000", "--seed", "3", "--out", str(out))
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_thread_count_does_not_change_output(self, capsys, martingale_file, tmp_path, monkeypatch):
        outputs = []
        for threads in ("1", "3"):
            monkeypatch.setenv("TAILBOUND_THREADS", threads)
            out = tmp_path / f"t{threads}.csv"
            run(capsys, "verify-mc", "--instance", str(martingale_file), "--samples", "150000",
                "--out", str(out))
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_bad_thread_env(self, capsys, martingale_file, monkeypatch):
        monkeypatch.setenv("TAILBOUND_THREADS", "many")
        code, _, err = run(capsys, "verify-mc", "--instance", str(martingale_file), "--samples", "20000")
        assert code == 2 and "TAILBOUND_THREADS" in err

    def test_hilbert(self, capsys, tmp_path):
        path = tmp_path / "h.json"
        path.write_text(json.dumps({
            "type": "hilbert", "normalize": True,
            "vectors": [[1, 0], [0, 2], [1, 1]],
            "dists": [{"support": [-1, 1], "probs": [0.5, 0.5]}] * 3,
        }))
        code, out, _ = run(capsys, "verify-mc", "--instance", str(path), "--samples", "20000")
        assert code == 0
        assert out.splitlines()[0] == "x,tail,margin,wtilde,markov2,violation"

    def test_too_few_samples(self, capsys, martingale_file):
        code, _, _ = run(capsys, "verify-mc", "--instance", str(martingale_file), "--samples", "100")
        assert code == 2

    def test_exact_type_rejected(self, capsys, rademacher12):
        code, _, err = run(capsys, "verify-mc", "--instance", str(rademacher12), "--samples", "20000")
        assert code == 2 and "verify-exact" in err


class TestSelfcheck:
    def test_healthy(self, capsys):
        code, out, _ = run(capsys, "selfcheck")
        assert code == 0
        columns, rows = read_table(out)
        assert columns == ["status", "check", "value", "detail"]
        assert all(r[0] == "PASS" for r in rows)
        values = {r[1]: r[2] for r in rows}
        assert str(values["ratio.v_below_w.r(z_V)"]).startswith("1.020")

    def test_lambda_hook_fails_crossings(self, capsys):
        code, out, _ = run(capsys, "selfcheck", "--lambda-shift", "1e-3")
        assert code == 1
        failed = {r[1] for r in read_table(out)[1] if r[0] == "FAIL"}
        assert "crossing.z_w.residual" in failed


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "tailbound", "eval", "--x", "1", "--bounds", "w"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[1] == "1.0,0.6065306597126334"
