import json
import math

import pytest

from rydoa import config as C
from rydoa.constants import BOHR_RADIUS, E_CHARGE
from rydoa.errors import ConfigError

TWO_PI_MHZ = 2 * math.pi * 1e6


def test_fig3_preset_values():
    cfg = C.load_preset("fig3")
    e1 = cfg.ladder_e1
    assert e1.omega_p == pytest.approx(6 * TWO_PI_MHZ)
    assert e1.omega_c == pytest.approx(0.67 * TWO_PI_MHZ)
    assert (e1.gamma2, e1.gamma3, e1.gamma4) == pytest.approx(
        (5.2 * TWO_PI_MHZ, 3.9 * TWO_PI_MHZ, 0.17 * TWO_PI_MHZ))
    assert e1.gamma_rf == pytest.approx(2 * math.pi * 1e4)
    assert e1.omega0 == pytest.approx(2 * math.pi * 6.9e9)
    assert e1.reduced_dipole == pytest.approx(1443.46 * E_CHARGE * BOHR_RADIUS)
    assert (e1.g_lower, e1.g_upper) == (2.0, 0.67)
    assert cfg.bias.magnitude == pytest.approx(2e-3)
    assert cfg.scene.e_amplitude == 1.0
    assert math.degrees(cfg.scene.theta_rf) == pytest.approx(30.0)


def test_fig5_preset_values():
    cfg = C.load_preset("fig5")
    assert cfg.ladder_e1.omega_p == pytest.approx(0.04 * TWO_PI_MHZ)
    assert cfg.ladder_m1.omega_c == pytest.approx(0.8 * TWO_PI_MHZ)
    assert (cfg.ladder_m1.g_lower, cfg.ladder_m1.g_upper) == (0.67, 1.33)
    r = cfg.receiver
    assert r.n_atoms == pytest.approx(4.89e16 * 1e-6)  # density times a 1 cm^3 cell
    assert (r.t2, r.temperature, r.cell_length) == pytest.approx((100e-9, 290.0, 0.01))
    assert cfg.link.tx_power == pytest.approx(1e-3)
    assert cfg.link.distance == 100.0 and cfg.link.impedance == 377.0
    assert cfg.link.tx_gain == pytest.approx(10 ** 0.215)
    assert cfg.ladder_e1.delta_tilde == 0.0


def test_round_trip():
    for name in C.BUILTIN_PRESETS:
        cfg = C.load_preset(name)
        again = C.from_dict(json.loads(C.serialize(cfg)))
        assert again == cfg
        assert again.ladder_e1 == cfg.ladder_e1


def test_empty_file_lists_missing(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    with pytest.raises(ConfigError) as ei:
        C.load_scenario(p)
    msg = str(ei.value)
    for key in ("ladder_e1", "ladder_m1", "scene", "bias", "plan", "receiver", "link", "nu"):
        assert key in msg


def test_unknown_key_named(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps({"preset": "fig3", "scene": {"e0_v_per_meter": 1.0}}))
    with pytest.raises(ConfigError, match="e0_v_per_meter"):
        C.load_scenario(p)


def test_bad_value_named(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps({"preset": "fig3", "ladder_e1": {"gamma2_mhz": -1}}))
    with pytest.raises(ConfigError, match="gamma2_mhz"):
        C.load_scenario(p)


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError):
        C.load_scenario(p)


def test_preset_inheritance_and_env(tmp_path, monkeypatch):
    (tmp_path / "mine.json").write_text(json.dumps({"preset": "fig5", "bias": {"b_mt": 0.3}}))
    monkeypatch.setenv(C.PRESET_ENV, str(tmp_path))
    cfg = C.load_preset("mine")
    assert cfg.bias.magnitude == pytest.approx(3e-4)
    assert cfg.ladder_e1 == C.load_preset("fig5").ladder_e1


def test_preset_cycle(tmp_path, monkeypatch):
    (tmp_path / "a.json").write_text(json.dumps({"preset": "b"}))
    (tmp_path / "b.json").write_text(json.dumps({"preset": "a"}))
    monkeypatch.setenv(C.PRESET_ENV, str(tmp_path))
    with pytest.raises(ConfigError, match="cycle"):
        C.load_preset("a")


def test_unknown_preset():
    with pytest.raises(ConfigError, match="fig3"):
        C.load_preset("fig99")


def test_overrides_are_new_values():
    base = C.load_preset("fig3")
    new = base.with_overrides({"scene.theta_rf_deg": 60, "bias.b_mt": 0.5})
    assert math.degrees(new.scene.theta_rf) == pytest.approx(60)
    assert math.degrees(base.scene.theta_rf) == pytest.approx(30)
    assert C.load_preset("fig3") == base
    with pytest.raises(ConfigError):
        base.with_overrides({"scene.nope": 1})
    with pytest.raises(ConfigError):
        base.with_overrides({"nosection.x": 1})


def test_parse_override():
    assert C.parse_override("scene.theta_rf_deg=45") == ("scene.theta_rf_deg", 45)
    assert C.parse_override("scene.theta_b_deg=null") == ("scene.theta_b_deg", None)
    with pytest.raises(ConfigError):
        C.parse_override("novalue")


def test_default_theta_b_gives_forward_wave():
    cfg = C.load_preset("fig3")
    assert math.degrees(cfg.scene.theta_b) == pytest.approx(-60)
