import json

import numpy as np
import pytest

from lrmar import ModelSpec, ValidationError, fit, transform
from lrmar import io
from lrmar.cli import parse_range, run


@pytest.fixture
def data_csv(tmp_path):
    path = tmp_path / "data.csv"
    assert run(["simulate", "--T", "600", "--N", "4", "--seed", "7", "--out", str(path)]) == 0
    return path


class TestCsv:
    def test_header_optional(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("x,y\n1,2\n3,4\n5,6\n")
        ts = io.read_csv(p)
        assert ts.channel_names == ("x", "y")
        np.testing.assert_array_equal(ts.data, [[1, 2], [3, 4], [5, 6]])
        p.write_text("1,2\n3,4\n")
        assert io.read_csv(p).data.shape == (2, 2)

    def test_missing_value(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3,\n5,6\n")
        with pytest.raises(ValidationError, match="row 2"):
            io.read_csv(p)

    def test_ragged(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3,4,5\n")
        with pytest.raises(ValidationError, match="3 fields"):
            io.read_csv(p)

    def test_non_finite(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3,nan\n5,6\n")
        with pytest.raises(ValidationError, match="non-finite"):
            io.read_csv(p)

    def test_seventeen_digits_round_trip(self, tmp_path):
        x = np.random.default_rng(0).standard_normal((5, 3)) * 1e-7
        io.write_matrix_csv(tmp_path / "m.csv", x)
        np.testing.assert_array_equal(io.read_csv(tmp_path / "m.csv").data, x)


class TestModelJson:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        Y = rng.standard_normal((300, 3)).cumsum(axis=0) * 0.1 + rng.standard_normal((300, 3))
        m = fit(Y, ModelSpec(P=2, Q=2, a=np.array([1e-3, 2e-3, 3e-3])))
        io.save_model(m, tmp_path / "m.json")
        back = io.load_model(tmp_path / "m.json")
        np.testing.assert_array_equal(transform(back, Y), transform(m, Y))
        np.testing.assert_array_equal(back.spec.a, m.spec.a)
        assert back.free_energy == m.free_energy

    def test_newer_major_version_rejected(self, tmp_path):
        m = fit(np.random.default_rng(2).standard_normal((100, 2)), ModelSpec(P=1, Q=1))
        doc = io.model_to_dict(m)
        doc["format"] = "lrmar-model-v2"
        with pytest.raises(ValidationError, match="unsupported"):
            io.model_from_dict(doc)
        doc["format"] = "lrmar-wcca-v1"
        with pytest.raises(ValidationError, match="expected"):
            io.model_from_dict(doc)


class TestCli:
    def test_simulate_shape(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run(["simulate", "--T", "4000", "--N", "12", "--seed", "7", "--out", str(out)]) == 0
        assert io.read_csv(out).data.shape == (4000, 12)

    def test_fit_then_transform(self, tmp_path, data_csv):
        model, z = tmp_path / "m.json", tmp_path / "z.csv"
        assert run(["fit", "--in", str(data_csv), "--P", "6", "--Q", "3", "--out", str(model)]) == 0
        assert run(["transform", "--model", str(model), "--in", str(data_csv), "--out", str(z)]) == 0
        assert io.read_csv(z).data.shape == (600 - 6, 3)

    def test_round_trip_matches_in_memory(self, tmp_path, data_csv):
        model, z = tmp_path / "m.json", tmp_path / "z.csv"
        run(["fit", "--in", str(data_csv), "--P", "2", "--Q", "2", "--out", str(model)])
        run(["transform", "--model", str(model), "--in", str(data_csv), "--out", str(z)])
        series = io.read_csv(data_csv)
        in_memory = transform(fit(series, ModelSpec(P=2, Q=2)), series)
        np.testing.assert_array_equal(io.read_csv(z).data, in_memory)

    def test_byte_identical_outputs(self, tmp_path, data_csv):
        outs = []
        for k in range(2):
            m, z = tmp_path / f"m{k}.json", tmp_path / f"z{k}.csv"
            run(["fit", "--in", str(data_csv), "--P", "2", "--Q", "2", "--out", str(m)])
            run(["transform", "--model", str(m), "--in", str(data_csv), "--out", str(z)])
            outs.append((m.read_bytes(), z.read_bytes()))
        assert outs[0] == outs[1]

    def test_select_rows(self, tmp_path, data_csv):
        grid = tmp_path / "grid.csv"
        code = run(["select", "--in", str(data_csv), "--P", "1..2", "--Q", "1..3", "--repeats", "2",
                    "--workers", "1", "--out", str(grid)])
        assert code == 0
        lines = grid.read_text().strip().split("\n")
        assert len(lines) == 1 + 2 * 3 * 2 + 1
        assert lines[-1].startswith("# best P=")

    def test_reconstruct_and_predict(self, tmp_path, data_csv):
        m, z, y, p = (tmp_path / n for n in ("m.json", "z.csv", "y.csv", "p.csv"))
        run(["fit", "--in", str(data_csv), "--P", "2", "--Q", "2", "--out", str(m)])
        run(["transform", "--model", str(m), "--in", str(data_csv), "--out", str(z)])
        assert run(["reconstruct", "--model", str(m), "--z", str(z), "--out", str(y), "--original-units"]) == 0
        assert io.read_csv(y).data.shape == (598, 4)
        assert run(["predict", "--model", str(m), "--in", str(data_csv), "--out", str(p)]) == 0
        pred = io.read_csv(p)
        assert pred.channel_names[0] == "mean" and pred.data.shape == (4, 5)

    def test_wcca_and_bench(self, tmp_path, data_csv):
        w, wz, b = tmp_path / "w.json", tmp_path / "wz.csv", tmp_path / "b.csv"
        assert run(["wcca", "--in", str(data_csv), "--P", "2", "--Q", "2", "--out", str(w),
                    "--z-out", str(wz)]) == 0
        assert json.loads(w.read_text())["format"] == "lrmar-wcca-v1"
        assert io.read_csv(wz).data.shape == (600 - 2 - 2 + 1, 2)
        assert run(["bench", "--T", "300", "--N", "4", "--Q", "1..2", "--P", "2", "--out", str(b)]) == 0
        assert len(b.read_text().strip().split("\n")) == 1 + 2 * 2 * 2

    def test_exit_codes(self, tmp_path, data_csv, capsys):
        out = str(tmp_path / "m.json")
        assert run(["fit", "--bogus"]) == 1
        assert run(["fit", "--in", str(tmp_path / "none.csv"), "--P", "1", "--Q", "1", "--out", out]) == 1
        assert "input file not found" in capsys.readouterr().err
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3,x\n")
        assert run(["fit", "--in", str(bad), "--P", "1", "--Q", "1", "--out", out]) == 1
        assert "reading input" in capsys.readouterr().err
        assert run(["fit", "--in", str(data_csv), "--P", "1", "--Q", "9", "--out", out]) == 1
        assert run(["fit", "--in", str(data_csv), "--P", "1", "--Q", "1", "--out",
                    str(tmp_path / "missing" / "m.json")]) == 1
        assert not (tmp_path / "m.json").exists()

    def test_numerical_failure_exit_code(self, tmp_path, data_csv, monkeypatch, capsys):
        import lrmar.cli as cli
        from lrmar import NumericalError

        def boom(*args, **kwargs):
            raise NumericalError("iteration 3: W precision is not positive definite")

        monkeypatch.setattr(cli, "fit", boom)
        code = run(["fit", "--in", str(data_csv), "--P", "1", "--Q", "1", "--out", str(tmp_path / "m.json")])
        assert code == 2
        assert "fitting: numerical error" in capsys.readouterr().err


def test_parse_range():
    assert parse_range("2..5") == [2, 3, 4, 5]
    assert parse_range("1,3") == [1, 3]
    assert parse_range("4") == [4]
