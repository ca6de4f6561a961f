import json
import socket

import pytest

from wetrace.backend import BackendStore
from wetrace.backend.service import RelayServer
from wetrace.cli import main
from wetrace.simnet import demo_document
from wetrace.simnet.scenario import DEFAULT_EPOCH


@pytest.fixture
def demo_file(tmp_path):
    p = tmp_path / "demo.json"
    p.write_text(json.dumps(demo_document()))
    return p


def test_missing_scenario_exits_1(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1
    assert "scenario not found" in capsys.readouterr().err


def test_invalid_scenario_exits_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({**demo_document(), "duration": "long"}))
    assert main(["scenario-validate", str(p)]) == 1
    assert "duration" in capsys.readouterr().err


def test_unknown_flag_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--frobnicate"])
    assert exc.value.code == 1


def test_simulate_writes_identical_outputs(demo_file, tmp_path, capsys):
    outs = []
    for name in ("o1", "o2"):
        assert main(["simulate", str(demo_file), "--out", str(tmp_path / name)]) == 0
        outs.append({f: (tmp_path / name / f).read_bytes() for f in ("metrics.json", "events.jsonl")})
    assert outs[0] == outs[1]
    metrics = json.loads(outs[0]["metrics.json"])
    assert metrics["devices"]["B"]["notifications_decoded"] == 1
    assert "B" in capsys.readouterr().out


def test_validate_json(demo_file, capsys):
    assert main(["scenario-validate", str(demo_file), "--json"]) == 0
    assert json.loads(capsys.readouterr().out) == {"attackers": 1, "devices": 3, "duration": 1800.0,
                                                   "events": 3, "valid": True}


def test_bench_decrypt_json(capsys):
    assert main(["bench-decrypt", "--messages", "200", "--keys", "64", "--prefix-bits", "1",
                 "--cipher", "stub", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["baseline_attempts"] == 200 * 64 and doc["decoded"] == 1
    assert 0.4 < doc["reduction"] < 0.6


def test_backend_serve_bind_failure_exits_2(capsys):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        port = s.getsockname()[1]
        assert main(["backend-serve", "--listen", f"127.0.0.1:{port}"]) == 2
    assert "cannot bind" in capsys.readouterr().err


def test_agent_without_relay_exits_2(tmp_path, capsys):
    state = str(tmp_path / "s.json")
    assert main(["device-agent", "--state", state, "init"]) == 0
    assert main(["device-agent", "--state", state, "--backend", "http://127.0.0.1:9", "poll"]) == 2


def test_agents_end_to_end_over_the_wire(tmp_path, capsys):
    # the scenario without scripted events leaves every device unreported
    sc = {**demo_document(), "events": []}
    scenario = tmp_path / "s.json"
    scenario.write_text(json.dumps(sc))
    states = tmp_path / "states"
    assert main(["simulate", str(scenario), "--out", str(tmp_path / "o"), "--export-states", str(states)]) == 0
    capsys.readouterr()
    now = str(DEFAULT_EPOCH + 1300)
    with RelayServer(BackendStore(difficulty=6), port=0) as server:
        common = ["--backend", server.url, "--difficulty", "6", "--now", now]

        def agent(dev, *argv):
            return main(["device-agent", "--state", str(states / f"{dev}.state.json"), *common, *argv])

        assert agent("A", "report", "--level", "1") == 0
        assert "published 1 messages" in capsys.readouterr().out
        assert agent("B", "poll", "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["notifications"] == [{"status": "infected"}]
        assert agent("C", "poll", "--json") == 0
        assert json.loads(capsys.readouterr().out)["notifications"] == []
        assert agent("A", "report", "--level", "1") == 1
        assert "already reported" in capsys.readouterr().err
        assert agent("B", "show", "--json") == 0
        assert json.loads(capsys.readouterr().out)["status"] == "close_contact"
        # the cursor persisted, so a second poll sees nothing new
        assert agent("B", "poll", "--json") == 0
        assert json.loads(capsys.readouterr().out)["notifications"] == []
        # a device without contacts publishes nothing and warns
        assert agent("C", "report", "--level", "2") == 0
        assert "no contacts to notify" in capsys.readouterr().err
