import numpy as np
import pytest
from hypothesis import given, strategies as st

from bfclab import io
from bfclab.config import (apply_overrides, build_scenario, defaults, dump_config, load_config,
                           parse_config)
from bfclab.core_model import CombParams, CorrelationTrace, DetectorParams, FilterMode, TraceKind
from bfclab.errors import ConfigError
from bfclab.eventsim import SourceParams, generate_pairs, hbt_split
from bfclab.franson import recurrence_table, synthesize_fringe
from bfclab.schmidt import ideal_jsi, schmidt_from_jsi


class TestConfig:
    def test_empty_document_is_nominal(self):
        cfg = parse_config("")
        assert cfg == defaults()
        sc = build_scenario(cfg)
        assert sc.comb == CombParams.nominal()
        assert sc.det_signal.jitter_rms_s == pytest.approx(6.49e-12)

    def test_unknown_key_names_line(self):
        text = "version: 1\ncomb:\n  fsr_ghz: 14.97\n  fsr_hz: 1.0\n"
        with pytest.raises(ConfigError, match=r"line 4: unknown key 'comb.fsr_hz'"):
            parse_config(text)

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="line 1: unknown key 'pump'"):
            parse_config("pump:\n  power_mw: 1.3\n")

    def test_type_errors(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config("comb:\n  n_lines: five\n")
        with pytest.raises(ConfigError):
            parse_config("comb:\n  n_lines: 2.5\n")
        with pytest.raises(ConfigError):
            parse_config("comb:\n  fsr_ghz: true\n")

    def test_malformed_yaml(self):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config("comb: [1, 2\n")

    def test_version_checked(self):
        with pytest.raises(ConfigError):
            parse_config("version: 2\n")

    def test_invalid_values_surface_as_config_errors(self):
        cfg = apply_overrides(defaults(), ["comb.filter_mode=triply"])
        with pytest.raises(ConfigError):
            build_scenario(cfg)
        cfg = apply_overrides(defaults(), ["detectors.idler.efficiency=1.5"])
        with pytest.raises(ConfigError):
            build_scenario(cfg)

    def test_overrides(self):
        cfg = apply_overrides(defaults(), ["comb.fsr_ghz=14.97", "source.seed=9",
                                           "schmidt.weights=[1, 2, 3]"])
        assert cfg["comb"]["fsr_ghz"] == 14.97
        assert cfg["source"]["seed"] == 9
        assert cfg["schmidt"]["weights"] == [1.0, 2.0, 3.0]
        assert defaults()["comb"]["fsr_ghz"] == 45.32

    @pytest.mark.parametrize("item", ["comb.fsr", "comb=1", "nope.x=1", "comb.fsr_hz=1"])
    def test_bad_overrides(self, item):
        with pytest.raises(ConfigError):
            apply_overrides(defaults(), [item])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.yaml")

    def test_load_prefixes_path(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("link:\n  km: 10\n")
        with pytest.raises(ConfigError, match=r"bad.yaml: line 2: unknown key 'link.km'"):
            load_config(p)

    @given(st.floats(10, 80), st.integers(0, 2 ** 31), st.sampled_from(["singly", "doubly"]))
    def test_dump_round_trip(self, fsr, seed, mode):
        cfg = apply_overrides(defaults(), [f"comb.fsr_ghz={fsr!r}", f"source.seed={seed}",
                                           f"comb.filter_mode={mode}"])
        assert parse_config(dump_config(cfg)) == cfg


class TestArtifacts:
    CFG = apply_overrides(defaults(), ["comb.fsr_ghz=14.97", "qkd.holevo_table={visibility: "
                                       "[0.0, 1.0], bits: [1.0, 0.0]}"])

    def test_header_echo_round_trip(self, tmp_path):
        tr = CorrelationTrace(0.0, 1e-12, np.arange(5.0), TraceKind.INTENSITY)
        p = io.write_trace(tmp_path / "t.csv", tr, self.CFG, {"note": "x"})
        comments, cols, _ = io.read_csv(p)
        assert comments[0].startswith("# bfclab ")
        assert io.header_config(comments) == self.CFG
        assert io.header_meta(comments)["note"] == "x"

    def test_trace_round_trip(self, tmp_path):
        tr = CorrelationTrace(-2e-12, 0.5e-12, np.linspace(0, 1, 9), TraceKind.HISTOGRAM)
        back = io.read_trace(io.write_trace(tmp_path / "t.csv", tr))
        assert back.kind is TraceKind.HISTOGRAM
        np.testing.assert_allclose(back.tau, tr.tau, rtol=1e-11)
        np.testing.assert_allclose(back.values, tr.values, rtol=1e-11)

    def test_visibility_table_round_trip(self, tmp_path):
        t = recurrence_table(CombParams.nominal(), 4)
        back = io.read_visibility_table(io.write_visibility_table(tmp_path / "v.csv", t))
        assert back.bins == t.bins
        np.testing.assert_allclose(back.v_subtracted, t.v_subtracted, rtol=1e-11)

    def test_fringe_round_trip(self, tmp_path):
        f = synthesize_fringe(0.8, 0.375, np.linspace(0, 6, 20), 100.0)
        back = io.read_fringe(io.write_fringe(tmp_path / "f.csv", f))
        assert back.background == 0.375
        np.testing.assert_allclose(back.counts, f.counts, rtol=1e-11)

    def test_jsi_and_schmidt_round_trip(self, tmp_path):
        jsi = ideal_jsi(CombParams.nominal(), 0.01)
        back = io.read_jsi(io.write_jsi(tmp_path / "j.csv", jsi))
        np.testing.assert_allclose(back.weights, jsi.weights, rtol=1e-11)
        r = schmidt_from_jsi(jsi)
        rb = io.read_schmidt(io.write_schmidt(tmp_path / "s.csv", r))
        assert rb.schmidt_number == pytest.approx(r.schmidt_number, rel=1e-11)
        np.testing.assert_allclose(rb.eigenvalues, r.eigenvalues, rtol=1e-11)

    @pytest.mark.parametrize("truth", [True, False])
    def test_events_round_trip_exact(self, tmp_path, truth):
        det = DetectorParams(6.5e-12, 0.9, 1e3)
        s = generate_pairs(CombParams.nominal(), SourceParams(2e4, 0.5, seed=3), det, det)
        s = hbt_split(s, 0.5, 1)
        p = io.write_events(tmp_path / "e.csv", s, self.CFG, include_truth=truth)
        back = io.read_events(p)
        assert back.times.tobytes() == s.times.tobytes()
        assert np.array_equal(back.channels, s.channels)
        if truth:
            assert np.array_equal(back.truth, s.truth)
        assert back.seed == 3
        assert back.duration_s == self.CFG["source"]["duration_s"]

    def test_wrong_columns(self, tmp_path):
        p = io.write_table(tmp_path / "x.csv", "x", "a,b", [(1, 2)])
        with pytest.raises(ValueError):
            io.read_trace(p)
        with pytest.raises(ValueError):
            io.read_events(p)

    def test_filter_mode_survives_header(self, tmp_path):
        cfg = apply_overrides(defaults(), ["comb.filter_mode=doubly"])
        p = io.write_table(tmp_path / "x.csv", "x", "a", [(1,)], cfg)
        back = io.header_config(io.read_csv(p)[0])
        assert build_scenario(back).comb.filter_mode is FilterMode.DOUBLY
