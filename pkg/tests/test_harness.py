import json

import numpy as np
import pytest
import yaml

from afdm.channel import save_profile
from afdm.core import DdProfile
from afdm.harness import (CSV_HEADER, ConfigError, SnrGrid, check_config, config_from_dict,
                          dump_config, emit_csv, emit_plot, format_csv, load_config, parse_csv,
                          read_csv, run_ber_sweep, run_nmse_sweep)
from afdm.harness.cli import main

IDENTITY = dict(source="explicit", paths=[dict(delay=0, doppler=0.0)])


class TestSnrGrid:
    def test_inclusive(self):
        assert SnrGrid.parse("0:30:10").points() == [0.0, 10.0, 20.0, 30.0]
        assert SnrGrid.parse("0:5:2").points() == [0.0, 2.0, 4.0]
        assert SnrGrid.parse("7").points() == [7.0]

    def test_fractional_step(self):
        assert SnrGrid(0, 1, 0.1).points()[-1] == 1.0

    @pytest.mark.parametrize("text", ["5:0:1", "0:10:0", "0:10:-1", "0:10", "a:b:c"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            SnrGrid.parse(text)


class TestConfig:
    def test_presets(self):
        n = 64
        ofdm = config_from_dict(dict(waveform="ofdm", n_sub=n)).params()
        ocdm = config_from_dict(dict(waveform="ocdm", n_sub=n)).params()
        afdm = config_from_dict(dict(waveform="afdm", n_sub=n, profile=dict(k_max=2))).params()
        assert (ofdm.c1, ofdm.c2) == (0, 0)
        assert ocdm.c1 == ocdm.c2 == 1 / (2 * n)
        assert afdm.c1 == pytest.approx(5 / (2 * n)) and afdm.c2 == 0
        guarded = config_from_dict(dict(n_sub=n, doppler_guard=3, profile=dict(k_max=2))).params()
        assert guarded.c1 == pytest.approx(11 / (2 * n))

    def test_custom(self):
        p = config_from_dict(dict(waveform="custom", c1=0.01, c2=0.2, n_sub=16)).params()
        assert (p.c1, p.c2) == (0.01, 0.2)
        with pytest.raises(ConfigError):
            config_from_dict(dict(waveform="custom"))

    @pytest.mark.parametrize("doc", [
        dict(bogus=1), dict(detector=dict(kind="mp", dampin=0.5)), dict(window="kaiser"),
        dict(profile=dict(source="random", npaths=3)), dict(schema_version=2),
        dict(frames=0), dict(seed=-1), dict(snr=dict(start=5, stop=0, step=1)),
        dict(profile=dict(source="file")), dict(multiaccess=dict(direction="sideways"))])
    def test_rejects(self, doc):
        with pytest.raises(ValueError):
            config_from_dict(doc)

    def test_digest_ignores_workers(self):
        a = config_from_dict(dict(seed=3, workers=1))
        b = config_from_dict(dict(seed=3, workers=4))
        c = config_from_dict(dict(seed=4, workers=1))
        assert a.digest() == b.digest() != c.digest()

    def test_yaml_round_trip(self, tmp_path):
        cfg = config_from_dict(dict(waveform="ocdm", detector="lmmse", window="hamming",
                                    snr="0:10:5", profile=IDENTITY))
        path = tmp_path / "c.yaml"
        path.write_text(dump_config(cfg))
        assert load_config(path) == cfg

    def test_bad_yaml(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("snr: [unclosed")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_file_profile(self, tmp_path):
        path = tmp_path / "p.json"
        save_profile(DdProfile.from_tuples([(1, 0, 0), (0.5j, 2, 1.0)]), path)
        cfg = config_from_dict(dict(profile=dict(source="file", path=str(path))))
        assert cfg.profile.bounds() == (2, 1)
        assert cfg.params().l_cpp == 2

    def test_rayleigh_fading_scales_gains(self):
        cfg = config_from_dict(dict(profile=dict(IDENTITY, fading="rayleigh")))
        a = cfg.profile.draw(np.random.default_rng(0))
        b = cfg.profile.draw(np.random.default_rng(1))
        assert a.gains[0] != b.gains[0]
        assert [p.delay for p in a.paths] == [0]

    def test_ml_infeasible(self):
        cfg = config_from_dict(dict(n_sub=64, detector="ml"))
        with pytest.raises(ConfigError, match="candidates"):
            check_config(cfg)

    def test_short_cpp(self):
        cfg = config_from_dict(dict(n_sub=64, l_cpp=1, profile=dict(l_max=3)))
        with pytest.raises(ConfigError):
            check_config(cfg)


def _small(**kw):
    doc = dict(n_sub=16, frames=10, block=4, snr="0:10:10", seed=5,
               profile=dict(source="random", n_paths=3, l_max=2, k_max=1))
    doc.update(kw)
    return config_from_dict(doc)


class TestSweeps:
    @pytest.mark.parametrize("detector", ["zf", "lmmse", "mp"])
    def test_clean_identity_channel(self, detector):
        cfg = _small(detector=detector, snr="60", profile=IDENTITY)
        res = run_ber_sweep(cfg)
        assert res.rows[0].value == 0 and res.rows[0].trials == 10

    def test_noise_free_nmse(self):
        cfg = _small(n_sub=64, snr="200", pilot=dict(amplitude=10.0),
                     profile=dict(source="random", n_paths=3, l_max=2, k_max=1))
        res = run_nmse_sweep(cfg)
        assert res.rows[0].value < 1e-12 and res.rows[0].errors == 0

    def test_estimated_csi(self):
        cfg = _small(n_sub=64, csi="estimated", snr="30", pilot=dict(amplitude=3.0))
        res = run_ber_sweep(cfg)
        assert res.rows[0].value < 0.05

    def test_single_tap_ofdm(self):
        res = run_ber_sweep(_small(waveform="ofdm", detector="single_tap", snr="40",
                                   profile=IDENTITY))
        assert res.rows[0].value == 0

    def test_early_stop(self):
        cfg = _small(snr="-10", frames=400, block=5, early_stop_errors=20)
        row = run_ber_sweep(cfg).rows[0]
        assert row.errors >= 20 and row.trials < 400 and row.trials % 5 == 0

    def test_ml_tiny(self):
        cfg = _small(n_sub=4, detector="ml", constellation="bpsk", snr="40",
                     profile=dict(source="random", n_paths=1, l_max=0, k_max=0))
        assert run_ber_sweep(cfg).rows[0].value == 0

    def test_deterministic(self):
        a = format_csv(run_ber_sweep(_small()))
        b = format_csv(run_ber_sweep(_small()))
        c = format_csv(run_ber_sweep(_small(seed=6)))
        assert a == b != c

    def test_workers_byte_identical(self):
        a = format_csv(run_ber_sweep(_small(frames=24, workers=1)))
        b = format_csv(run_ber_sweep(_small(frames=24, workers=2)))
        assert a == b


class TestOutput:
    def test_csv_round_trip(self, tmp_path):
        res = run_ber_sweep(_small())
        path = emit_csv(res, tmp_path / "r.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == f"# seed=5 config_digest={res.config_digest}"
        assert lines[1] == ",".join(CSV_HEADER)
        meta, rows = read_csv(path)
        assert meta == {"seed": "5", "config_digest": res.config_digest}
        assert rows == res.rows

    def test_bad_header(self):
        with pytest.raises(ValueError):
            parse_csv("a,b\n1,2\n")

    def test_plot(self, tmp_path):
        res = run_ber_sweep(_small())
        path = emit_plot(res, tmp_path / "p.svg")
        text = path.read_text()
        assert text.lstrip().startswith("<?xml") and res.config_digest in text
        emit_plot(res, tmp_path / "q.svg")
        assert (tmp_path / "q.svg").read_text() == text


class TestCli:
    def _cfg(self, tmp_path, **kw):
        doc = dict(n_sub=16, frames=4, block=2, profile=IDENTITY)
        doc.update(kw)
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump(doc))
        return str(path)

    def test_ber(self, tmp_path, capsys):
        out = tmp_path / "b.csv"
        rc = main(["ber", "--config", self._cfg(tmp_path), "--snr", "50:60:10", "--seed", "9",
                   "--detector", "zf", "--out", str(out), "--plot", str(tmp_path / "b.svg")])
        assert rc == 0
        meta, rows = read_csv(out)
        assert meta["seed"] == "9" and [r.snr_db for r in rows] == [50.0, 60.0]
        assert (tmp_path / "b.svg").exists()

    def test_nmse_stdout(self, tmp_path, capsys):
        rc = main(["nmse", "--config", self._cfg(tmp_path, n_sub=32), "--snr", "20"])
        assert rc == 0
        assert capsys.readouterr().out.splitlines()[1] == ",".join(CSV_HEADER)

    def test_ecm(self, tmp_path, capsys):
        assert main(["ecm", "--config", self._cfg(tmp_path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        h = np.array(doc["matrix_re"]) + 1j * np.array(doc["matrix_im"])
        np.testing.assert_allclose(h, np.eye(16), atol=1e-12)

    def test_allocate(self, tmp_path, capsys):
        users = [dict(id="a", demand=4, profile=dict(source="explicit",
                                                     paths=[dict(delay=1, doppler=1.0)])),
                 dict(id="b", demand=3, profile=IDENTITY)]
        cfg = self._cfg(tmp_path, n_sub=64, profile=dict(l_max=1, k_max=1),
                        multiaccess=dict(direction="uplink", users=users))
        assert main(["allocate", "--config", cfg]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc["users"]) == {"a", "b"} and "config_digest" in doc

    def test_validate(self, tmp_path, capsys):
        assert main(["validate", "--config", self._cfg(tmp_path)]) == 0
        assert json.loads(capsys.readouterr().out)["ok"] is True
        bad = self._cfg(tmp_path, waveform="custom", c1=0.0123)
        assert main(["validate", "--config", bad]) == 1

    def test_errors(self, tmp_path, capsys):
        assert main(["ber", "--config", str(tmp_path / "missing.yaml")]) == 2
        assert main(["ber", "--config", self._cfg(tmp_path, bogus=1)]) == 2
        assert main(["ber", "--config", self._cfg(tmp_path), "--snr", "9:0:1"]) == 2
        assert "error:" in capsys.readouterr().err
