import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tomonet import experiments as ex
from tomonet.exceptions import ValidationError


def rows():
    return [
        ex.ResultRow(20.0, 0.99, 0.004, 0.87, 0.0, 12.5),
        ex.ResultRow(40.0, 0.995, 0.002, 0.88, 0.0, 20.0),
    ]


class TestSpecs:
    def test_desk_defaults(self):
        s = ex.desk_spec("fig2a")
        assert (s.n_states, s.repetitions, s.train_per_state, s.noisy_per_state) == (20, 3, 195, 200)
        assert s.sigma == pytest.approx(math.pi / 6)
        assert ex.desk_spec("fig3b").n_states == 30

    def test_paper_profile(self):
        assert ex.paper_spec("fig2a").epochs == 800
        assert ex.paper_spec("fig3a").epochs == 500
        assert ex.paper_spec("fig2b").repetitions == 10
        assert ex.paper_spec("noiseless").values == (60000,)

    def test_state_kind_defaults(self):
        assert ex.desk_spec("fig2a").state_kind == "mixed"
        for kind in ("fig3b", "noiseless"):
            assert ex.desk_spec(kind).state_kind == "pure"
            assert ex.paper_spec(kind).state_kind == "pure"

    def test_overrides(self):
        assert ex.desk_spec("fig3a", epochs=7).epochs == 7

    @pytest.mark.parametrize("kw", [dict(kind="fig9", values=(1,)), dict(kind="fig2a", values=()),
                                    dict(kind="fig2a", values=(1,), repetitions=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            ex.ExperimentSpec(**kw)

    def test_wrong_runner(self):
        with pytest.raises(ValidationError):
            ex.run_fig2b(ex.smoke_spec("fig2a"))


class TestCompact:
    @pytest.mark.parametrize("k,shape", [(1, (1, 1)), (4, (2, 2)), (6, (2, 3)), (16, (4, 4)), (28, (4, 7)), (36, (6, 6)), (7, (1, 7))])
    def test_shape(self, k, shape):
        assert ex.compact_shape(k) == shape

    def test_area_is_minimal(self):
        for k in range(1, 37):
            r, c = ex.compact_shape(k)
            assert r * c >= k
            assert all(rr * (-(-k // rr)) >= r * c for rr in range(1, k + 1))

    def test_inputs(self):
        mask = np.zeros((6, 6), bool)
        mask.reshape(-1)[:6] = True
        grids = np.arange(72, dtype=float).reshape(2, 6, 6)
        out = ex.compact_inputs(grids, mask)
        np.testing.assert_array_equal(out, [[[0, 1, 2], [3, 4, 5]], [[36, 37, 38], [39, 40, 41]]])


class TestOutputs:
    def test_csv_header_and_values(self):
        text = ex.csv_text(rows())
        lines = text.splitlines()
        assert lines[0] == "swept,cnn_mean,cnn_std,stokes_mean,stokes_std,seconds"
        assert lines[1] == "20.0,0.99,0.004,0.87,0.0,12.5"

    def test_seconds_suppressed(self):
        assert ex.csv_text(rows(), record_time=False).splitlines()[1].endswith(",0.0")

    def test_csv_roundtrip(self, tmp_path):
        path = ex.write_csv(rows(), tmp_path / "r.csv")
        assert ex.read_csv(path) == rows()

    def test_svg_is_xml(self, tmp_path):
        path = ex.emit_plot(rows(), tmp_path / "p.svg", title="a <b> & c")
        root = ET.parse(path).getroot()
        assert root.tag.endswith("svg")
        assert len([e for e in root.iter() if e.tag.endswith("polyline")]) == 2
        assert (tmp_path / "p.csv").exists()

    def test_single_point_plot(self, tmp_path):
        ex.emit_plot(rows()[:1], tmp_path / "one.svg", write_csv_too=False)
        ET.parse(tmp_path / "one.svg")
        assert not (tmp_path / "one.csv").exists()

    def test_empty_rows(self, tmp_path):
        with pytest.raises(ValidationError):
            ex.emit_plot([], tmp_path / "x.svg")


class TestRun:
    def test_smoke_sweep(self, tmp_path):
        spec = ex.smoke_spec("fig2a", out=str(tmp_path), dump_samples=True)
        result = ex.run_fig2a(spec)
        assert len(result) == 1
        r = result[0]
        assert 0 <= r.cnn_mean <= 1 and 0 <= r.stokes_mean <= 1 and r.stokes_std == 0.0
        name = spec.name
        for suffix in (".csv", ".svg", ".manifest.json", "_samples.csv", "_history.csv"):
            assert (tmp_path / f"{name}{suffix}").exists()
        manifest = json.loads((tmp_path / f"{name}.manifest.json").read_text())
        assert manifest["input_shapes"] == {"3": [6, 6]}
        samples = (tmp_path / f"{name}_samples.csv").read_text().splitlines()
        assert len(samples) == 1 + 3 * 2  # 3 states x 2 test grids

    def test_resume_uses_cache(self, tmp_path):
        spec = ex.smoke_spec("fig3b", out=str(tmp_path), values=(4,))
        first = ex.run(spec)
        cache = list((tmp_path / "points").glob("*.json"))
        assert len(cache) == 1
        point = json.loads(cache[0].read_text())
        point["row"]["cnn_mean"] = 0.123
        cache[0].write_text(json.dumps(point))
        again = ex.run(spec)
        assert again[0].cnn_mean == 0.123
        assert again[0].stokes_mean == first[0].stokes_mean

    def test_compact_fig3b(self, tmp_path):
        spec = ex.smoke_spec("fig3b", out=str(tmp_path), values=(4,), compact=True)
        ex.run(spec)
        manifest = json.loads((tmp_path / f"{spec.name}.manifest.json").read_text())
        assert manifest["input_shapes"] == {"4": [2, 2]}

    def test_noiseless_smoke(self, tmp_path):
        result = ex.run_noiseless(ex.smoke_spec("noiseless", out=str(tmp_path)))
        assert result[0].stokes_mean > 1 - 1e-9

    def test_workers_env(self, monkeypatch):
        monkeypatch.setenv(ex.WORKERS_ENV, "3")
        assert ex._workers() == 3
        monkeypatch.setenv(ex.WORKERS_ENV, "junk")
        assert ex._workers() == 1

    def test_parallel_matches_serial(self, tmp_path, monkeypatch):
        spec = ex.smoke_spec("fig2a", repetitions=2)
        serial = ex.run(ex.smoke_spec("fig2a", repetitions=2, out=str(tmp_path / "s")))
        monkeypatch.setenv(ex.WORKERS_ENV, "2")
        parallel = ex.run(ex.smoke_spec("fig2a", repetitions=2, out=str(tmp_path / "p")))
        assert serial[0].cnn_mean == parallel[0].cnn_mean
        assert spec.repetitions == 2
