import json

import pytest

from multirate.cli import main
from multirate.config import StudyConfig, parse_config
from multirate.errors import ConfigError
from multirate.timegrid import MultirateMesh


def test_defaults_for_stokes():
    cfg = parse_config('{"kind":"stokes","schedule":"uniform","levels":5}')
    assert (cfg.nu1, cfg.nu2, cfg.order_r, cfg.horizon) == (1.0, 56.0, 2, 1.0)


@pytest.mark.parametrize("text, needle", [
    ('{"kind":"bogus"}', "kind"),
    ('{"kind":"heat","levels":2}', "schedule"),
    ('{"kind":"heat","schedule":"uniform","levels":2,"nu3":1}', "nu3"),
    ('{"kind":"heat","schedule":"uniform","levels":0}', "levels"),
    ('{"kind":"stokes","schedule":"uniform","levels":2,"order_r":1}', "order_r"),
    ('[1, 2]', "object"),
    ('{"kind":', "JSON"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_config_round_trip():
    cfg = parse_config({"kind": "heat", "schedule": "refine_sub1_only", "levels": 3,
                        "gamma": 4, "time_mesh": {"macro_nodes": [0, 1],
                                                  "micro_counts": [[1, 1]]}})
    assert parse_config(cfg.to_json()) == cfg
    assert isinstance(cfg.gamma, float)


def test_stokes_smoke(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "stokes", "schedule": "uniform", "levels": 3,
                               "space_m": 4, "n_ref": 64}))
    assert main(["stokes-study", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "study.csv").read_text().splitlines()
    assert len(lines) == 4
    assert capsys.readouterr().out.splitlines() == lines


def test_missing_config_exit_code(tmp_path):
    assert main(["ode-study", "--config", str(tmp_path / "nope.json")]) == 2


def test_kind_mismatch(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"kind":"ode","schedule":"uniform","levels":2}')
    assert main(["heat-study", "--config", str(cfg)]) == 1
    assert "does not match" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"kind":"ode","schedule":"uniform","levels":2,"typo":1}')
    assert main(["ode-study", "--config", str(cfg)]) == 1


def test_mesh_info(tmp_path, capsys):
    mesh = MultirateMesh([0.0, 1.0, 2.0], [(4, 1), (1, 2)])
    path = tmp_path / "m.json"
    path.write_text(mesh.to_json())
    assert main(["mesh-info", "--mesh", str(path)]) == 0
    out = capsys.readouterr().out
    assert json.loads(out) == json.loads(mesh.to_json())
    assert main(["mesh-info", "--uniform", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["micro_counts"] == [[1, 1]] * 3


def test_thread_cap(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"kind":"ode","schedule":"uniform","levels":2,"output":"%s"}' % tmp_path)
    monkeypatch.setenv("MULTIRATE_THREADS", "1")
    assert main(["ode-study", "--config", str(cfg)]) == 0
    monkeypatch.setenv("MULTIRATE_THREADS", "zero")
    assert main(["ode-study", "--config", str(cfg)]) == 1


def test_reexport():
    import multirate.cli as cli
    assert cli.StudyConfig is StudyConfig and cli.parse_config is parse_config
