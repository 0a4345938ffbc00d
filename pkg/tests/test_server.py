import json
import time

import numpy as np
import pytest
from starlette.testclient import TestClient

from emgforce import server
from emgforce.config import RuntimeConfig


@pytest.fixture()
def service(ln_ckpt_file):
    svc = server.DecodeService(ln_ckpt_file, RuntimeConfig(), seed=7, realtime=False)
    yield svc
    svc.stop()


def drain(q):
    out = []
    while not q.empty():
        out.append(q.get_nowait())
    return out


def ticks_of(msgs):
    return [m for m in msgs if m["type"] == "tick"]


def test_warmup_then_steady_ticking(service):
    q = service.attach_client()
    service.run_ticks(10)
    msgs = ticks_of(drain(q))
    # 200-sample window fills after 4 hops; ticks follow every hop
    assert len(msgs) == 7
    assert [m["seq"] for m in msgs] == list(range(7))
    assert msgs[0]["t"] == pytest.approx(0.2)


def test_control_ack_and_application(service):
    q = service.attach_client()
    reply = service.submit_control({"type": "set_activation", "values": [0, 0, 0, 1, 0]})
    assert reply == {"type": "ack", "of": "set_activation"}
    service.run_ticks(30)
    msgs = ticks_of(drain(q))
    assert abs(msgs[-1]["labels"][3]) > 0.25


def test_activation_reflected_within_six_ticks(service):
    q = service.attach_client()
    service.run_ticks(30)  # settle at rest
    drain(q)
    service.submit_control({"type": "set_activation", "values": [0, 0, 0, 1, 0]})
    service.run_ticks(12)
    msgs = ticks_of(drain(q))
    first_seen = next(i for i, m in enumerate(msgs) if m["labels"][3] > 0.3)
    assert first_seen < 6


def test_control_validation_errors(service):
    bad = [
        ({"type": "set_activation", "values": [1, 2, 3]}, "schema"),
        ({"type": "set_activation", "values": [0, 0, 0, 0, 3]}, "range"),
        ({"type": "set_gains", "k_F": -1}, "range"),
        ({"type": "session", "action": "begin"}, "schema"),
        ({"type": "session", "action": "start", "finger": "palm"}, "schema"),
        ({"type": "load_model", "path": "/does/not/exist"}, "io"),
        ({"no_type": 1}, "schema"),
        ({"type": "warp"}, "schema"),
    ]
    for msg, category in bad:
        reply = service.submit_control(msg)
        assert reply["type"] == "error"
        assert reply["category"] == category


def test_session_lifecycle(service):
    q = service.attach_client()
    service.submit_control({"type": "set_activation", "values": [0, 0, 0, 0.5, 0]})
    service.submit_control(
        {"type": "session", "action": "start", "mode": "sine", "freq": 0.5,
         "finger": "index"})
    service.run_ticks(40)
    msgs = drain(q)
    in_session = [m for m in ticks_of(msgs) if "target" in m]
    assert in_session, "telemetry should gain a target field during a session"
    service.submit_control({"type": "session", "action": "stop"})
    service.run_ticks(2)
    results = [m for m in drain(q) if m["type"] == "session_result"]
    assert len(results) == 1
    metrics = results[0]["metrics"]
    assert set(metrics) == {"rmse", "mape", "r2"}
    assert results[0]["n_ticks"] == len(in_session)


def test_zero_k_alpha_freezes_angles(service):
    q = service.attach_client()
    reply = service.submit_control({"type": "set_gains", "k_alpha": 0.0})
    assert reply["type"] == "ack"
    service.submit_control({"type": "set_activation", "values": [0, 0, 0, 1, 0]})
    service.run_ticks(40)
    msgs = ticks_of(drain(q))
    angles = np.array([m["angles"] for m in msgs])
    assert np.abs(angles).max() == 0.0
    # k_F stays strictly positive
    reply = service.submit_control({"type": "set_gains", "k_F": 0.0})
    assert reply["type"] == "error" and reply["category"] == "range"


def test_gains_affect_forces(service):
    q = service.attach_client()
    service.submit_control({"type": "set_gains", "k_F": 20.0})
    service.submit_control({"type": "set_activation", "values": [0, 0, 0, 1, 0]})
    service.run_ticks(30)
    msgs = ticks_of(drain(q))
    last = msgs[-1]
    assert last["forces"][3] == pytest.approx(20.0 * last["labels"][3])


def test_sequence_numbers_gapless(service):
    q = service.attach_client()
    service.run_ticks(25)
    seqs = [m["seq"] for m in ticks_of(drain(q))]
    assert seqs == list(range(len(seqs)))


def test_websocket_roundtrip(ln_ckpt_file):
    svc = server.DecodeService(ln_ckpt_file, RuntimeConfig(), seed=7, realtime=False)
    app = server.create_app(svc)
    client = TestClient(app)
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "set_activation", "values": [0, 0, 0, 1, 0]}))
        svc.run_ticks(30)
        got_ack = False
        got_tick = None
        for _ in range(40):
            msg = json.loads(ws.receive_text())
            if msg["type"] == "ack":
                got_ack = True
            if msg["type"] == "tick":
                got_tick = msg
                if got_tick["labels"][3] > 0.25:
                    break
        assert got_ack
        assert got_tick is not None
        assert set(got_tick) >= {"type", "seq", "t", "labels", "forces", "angles"}
        ws.send_text("this is not json")
        for _ in range(40):
            msg = json.loads(ws.receive_text())
            if msg["type"] == "error":
                assert msg["category"] == "schema"
                break
        else:
            pytest.fail("malformed message produced no error reply")


def test_second_client_rejected(ln_ckpt_file):
    svc = server.DecodeService(ln_ckpt_file, RuntimeConfig(), seed=7, realtime=False)
    app = server.create_app(svc)
    client = TestClient(app)
    with client.websocket_connect("/ws"):
        with client.websocket_connect("/ws") as ws2:
            msg = json.loads(ws2.receive_text())
            assert msg["type"] == "error"
            assert msg["category"] == "busy"


def test_reconnect_after_disconnect(ln_ckpt_file):
    svc = server.DecodeService(ln_ckpt_file, RuntimeConfig(), seed=7, realtime=False)
    app = server.create_app(svc)
    client = TestClient(app)
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "session", "action": "start",
                                 "mode": "sine", "freq": 0.5, "finger": "index"}))
        svc.run_ticks(10)
    # client gone: the pause control queues; next tick applies it
    svc.run_ticks(2)
    assert svc.session is not None and svc.session["paused"]
    with client.websocket_connect("/ws") as ws:
        ws.send_text(json.dumps({"type": "set_activation", "values": [0, 0, 0, 0, 0]}))
        svc.run_ticks(6)
        msg = json.loads(ws.receive_text())
        assert msg["type"] in ("ack", "tick")


def test_load_model_swaps_checkpoint(ln_ckpt_file, small_subject, tmp_path):
    from emgforce import training

    dd_path = tmp_path / "dd.ckpt"
    training.save_checkpoint(small_subject["ckpts"]["dd"], dd_path)
    svc = server.DecodeService(ln_ckpt_file, RuntimeConfig(), seed=7, realtime=False)
    assert svc.ckpt.kind == "ln"
    reply = svc.submit_control({"type": "load_model", "path": str(dd_path)})
    assert reply["type"] == "ack"
    svc.run_ticks(1)
    assert svc.ckpt.kind == "dd"


def test_realtime_loop_paces_ticks(ln_ckpt_file):
    svc = server.DecodeService(ln_ckpt_file, RuntimeConfig(), seed=7, realtime=True)
    q = svc.attach_client()
    svc.start()
    try:
        time.sleep(1.0)
    finally:
        svc.stop()
    msgs = ticks_of(drain(q))
    # ~20 ticks/s: allow generous scheduling slack
    assert 10 <= len(msgs) <= 22
    stats = svc.latency_stats()
    assert stats["deadline_misses"] == 0
