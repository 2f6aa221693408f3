"""One pass/fail test per acceptance criterion, at the stated tolerances."""
import json
import sys
import threading
import time

import numpy as np
import pytest
from scipy.stats import chisquare

from adsorb.agent.critic import rule_violations
from adsorb.agent.llm import BASE_URL_ENV, LlmConfig, chat
from adsorb.agent.loop import AgentConfig, Query, run_agent_loop, surface_elements
from adsorb.agent.mock import MockBackend, make_mock_chat_server
from adsorb.calculator import (TWO_SIXTH, CalcParams, LJCalculator, default_params,
                               numerical_force_check)
from adsorb.cli import main
from adsorb.errors import ChatAuthError, ChatSchemaError, ChatTimeoutError, UnsupportedInputError
from adsorb.evaluation import (check_consistency, consistency_ratio, evaluate_file, ledr_flags,
                               load_records, load_solutions, success_flags)
from adsorb.placement import place_agent
from adsorb.registry import adsorbate_from_registry
from adsorb.relax import FireParams, detect_anomalies, relax_structure
from adsorb.sites import barycentric, enumerate_heuristic_sites, sample_in_triangles
from adsorb.wire import SubprocessCalculator

from conftest import FIXTURES, TEST_MOCKS, alloy_slab, dimer, random_box


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_1_ledr_on_table1():
    rep, dt = timed(evaluate_file, FIXTURES / "table1.csv")
    assert rep.ledr == 35.0
    records, _ = load_records(FIXTURES / "table1.csv")
    hits = sorted(k[0] for k, ok in ledr_flags(records) if ok)
    assert hits == [2, 4, 8, 17, 18, 19, 20]
    assert dt < 1.0


def test_2_rsr_on_table_s1():
    rep, dt = timed(evaluate_file, FIXTURES / "tableS1.csv")
    r = rep.rsr
    assert round(r.minimum, 1) == 6.8 and r.argmin == (1, 2)
    assert r.minimum == pytest.approx(100 * 4 / 59)
    assert round(r.maximum, 1) == 63.6 and r.argmax == (15, 1)
    assert r.maximum == pytest.approx(100 * 42 / 66)
    assert dt < 1.0
    # the per-run mean of the shipped fixture is 28.10 %; the criterion asks 26.9 +/- 0.5
    assert r.mean == pytest.approx(26.9, abs=0.5)


def test_3_sr_on_table1():
    rep = evaluate_file(FIXTURES / "table1.csv")
    records, _ = load_records(FIXTURES / "table1.csv")
    fails = sorted(k[0] for k, ok in success_flags(records, mode="lenient") if not ok)
    assert rep.sr_lenient == 85.0 and fails == [1, 15, 16]
    assert abs(rep.sr_lenient - 83.7) <= 1.5
    assert rep.sr_strict == 50.0


def test_4_consistency():
    assert check_consistency([["Pt", "Pt"], ["Pt", "Pt"], ["Pt", "Pt"]]) is True
    assert check_consistency([["Cu", "Pd"], ["Cu", "Pd", "Pd"], ["Cu", "Pd"]]) is True
    assert check_consistency([["Cu"], ["Cu", "Pd", "Pd"], ["Cu"]]) is False
    assert check_consistency([["Cu", "Cu"], ["Cu", "Pd"], ["Cu", "Cu"]]) is False
    rep = consistency_ratio(load_solutions(FIXTURES / "solutions.json"))
    assert rep.ratio == 85.0


def _run_report(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "--adsorbate", "H", "--catalyst", "Pt", "--miller", "1,1,1",
                 "--lattice-constant", "4.0", "--layers", "3", "--supercell", "2,2",
                 "--fmax", "1e-4", "--max-steps", "5000", "--no-timestamps",
                 "--output", str(out), *extra])
    assert code == 0
    return json.loads((out / "report.json").read_text())


def test_5_oracle_equivalence(tmp_path):
    t0 = time.perf_counter()
    heur = _run_report(tmp_path, "heuristic", "--strategy", "heuristic")
    agent = _run_report(tmp_path, "agent", "--strategy", "agent",
                        "--llm", f"mock:{FIXTURES / 'mocks'}")
    dt = time.perf_counter() - t0
    assert agent["solution"]["site_type"] == "hollow"
    assert abs(agent["delta_e_ads"] - heur["delta_e_ads"]) <= 1e-6
    assert agent["n_init"] <= 0.4 * heur["n_init"]
    assert dt < 30.0


def test_6_optimizer():
    reduced = CalcParams({"Pt": 1.0}, {"Pt": 1.0}, 3.0, shift=False)
    r = relax_structure(dimer(1.3), LJCalculator(reduced), FireParams(fmax=1e-6, max_steps=5000))
    d = np.linalg.norm(r.final.positions[1] - r.final.positions[0])
    assert r.status == "converged"
    assert abs(d - TWO_SIXTH) <= 1e-3
    assert abs(r.energy - (-1.0)) <= 1e-4
    for seed in range(10):
        assert numerical_force_check(random_box(seed), default_params(), h=1e-5) <= 1e-5


def test_7_sampling():
    corners = np.array([[[0, 0], [1, 0], [0, 1]], [[2, 0], [5, 0], [2, 1]]], float)
    idx, pts = sample_in_triangles(corners, 10_000, np.random.default_rng(12345))
    counts = np.bincount(idx, minlength=2)
    assert chisquare(counts, [2500, 7500]).pvalue > 0.01
    assert all(np.all(barycentric(p, corners[k]) >= -1e-12) for k, p in zip(idx, pts))


def _fixture_systems():
    out = []
    for fx in MockBackend.load(FIXTURES / "mocks").fixtures:
        if "system" not in fx.path:
            continue
        doc = json.loads(open(fx.path).read())["match"]
        out.append((doc["adsorbate"], doc["catalyst"], tuple(doc["miller"])))
    return out


def test_8_agent_determinism():
    backend = MockBackend.load(FIXTURES / "mocks")
    checked = 0
    for ads_key, cat, miller in _fixture_systems():
        try:
            slab = alloy_slab(cat, miller)
        except UnsupportedInputError:
            continue  # bulk outside the builder; such systems enter as extXYZ files
        runs = []
        for _ in range(2):
            cfg = AgentConfig(backend.chat_for(ads_key, cat, miller))
            res = run_agent_loop(Query(ads_key, cat, miller), slab, cfg)
            runs.append(json.dumps({"solution": res.solution.as_dict(),
                                    "binding": list(res.binding),
                                    "transcript": res.transcript}, sort_keys=True))
            ads = adsorbate_from_registry(ads_key)
            assert rule_violations(res.solution, surface_elements(slab), ads.symbols) == []
        assert runs[0] == runs[1]
        checked += 1
    assert checked >= 13
    slab = alloy_slab("Pt")
    fixture = MockBackend.load(TEST_MOCKS / "reject_then_accept.json")
    chat_ = fixture.chat_for("OH", "Pt", (1, 1, 1))
    res = run_agent_loop(Query("OH", "Pt", (1, 1, 1)), slab, AgentConfig(chat_))
    assert res.planner_calls == 2


def test_9_wire_protocols(pt111, monkeypatch):
    ads = adsorbate_from_registry("OH")
    site = next(s for s in enumerate_heuristic_sites(pt111) if s.kind == "hollow")
    start = place_agent(pt111, ads, site, [0], "end-on").structure
    fire = FireParams(fmax=1e-3, max_steps=200)
    local = relax_structure(start, LJCalculator(default_params(), adsorbate=ads), fire,
                            trajectory=True)
    remote_calc = SubprocessCalculator(
        f"{sys.executable} -m adsorb.wire serve-stdio --adsorbate OH")
    try:
        remote = relax_structure(start, remote_calc, fire, trajectory=True)
    finally:
        remote_calc.close()
    assert len(local.trajectory) == len(remote.trajectory)
    assert max(abs(a[1] - b[1]) for a, b in zip(local.trajectory, remote.trajectory)) <= 1e-10

    monkeypatch.delenv(BASE_URL_ENV, raising=False)
    msgs = [{"role": "user", "content": "ping"}]
    servers = []

    def serve(**kw):
        s = make_mock_chat_server(**kw)
        threading.Thread(target=s.serve_forever, daemon=True).start()
        servers.append(s)
        return f"http://127.0.0.1:{s.server_address[1]}"

    try:
        assert chat(LlmConfig(base_url=serve(reply="pong")), msgs, api_key="k") == "pong"
        with pytest.raises(ChatAuthError):
            chat(LlmConfig(base_url=serve(mode="unauthorized"), backoff=0), msgs, api_key="k")
        with pytest.raises(ChatTimeoutError):
            chat(LlmConfig(base_url=serve(mode="slow", delay=2.0), timeout=0.3, max_retries=1),
                 msgs, api_key="k")
        with pytest.raises(ChatSchemaError):
            chat(LlmConfig(base_url=serve(mode="malformed"), max_retries=1), msgs, api_key="k")
    finally:
        for s in servers:
            s.shutdown()
            s.server_close()
    assert not issubclass(ChatAuthError, (ChatTimeoutError, ChatSchemaError))
    assert not issubclass(ChatTimeoutError, ChatSchemaError)


def test_10_anomaly_filters(pt111):
    ads = adsorbate_from_registry("OH")
    site = next(s for s in enumerate_heuristic_sites(pt111) if s.kind == "hollow")
    s = place_agent(pt111, ads, site, [0], "end-on").structure
    o, h = np.nonzero(s.tags == 2)[0]

    clean = detect_anomalies(s, s)
    assert not (clean.dissociated or clean.desorbed or clean.reconstructed)

    pos = np.array(s.positions)
    pos[[o, h]] += [0, 0, 10.0]
    up = detect_anomalies(s, s.replace(positions=pos))
    assert up.desorbed and not up.dissociated and not up.reconstructed

    pos = np.array(s.positions)
    assert np.linalg.norm(pos[h] - pos[o]) == pytest.approx(0.97, abs=1e-6)
    pos[h] = pos[o] + (pos[h] - pos[o]) / 0.97 * 3.0
    split = detect_anomalies(s, s.replace(positions=pos))
    assert split.dissociated and not split.desorbed and not split.reconstructed
