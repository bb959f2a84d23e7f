"""Harness: metrics arithmetic, spec plumbing, reproducibility, CLI surface."""

import json
import math

import numpy as np
import pytest

from ghzreport import cli, harness
from ghzreport.adversary import AdversaryStrategy, DishonestAgent, InterceptResend
from ghzreport.harness import (
    ExperimentSpec,
    SpecError,
    base_config,
    compute_efficiency,
    invariant_suite,
    load_spec,
    make_strategy,
    render_csv,
    render_json,
    replay_counters,
    run_experiment,
    wilson_interval,
)
from ghzreport.protocol import COMPROMISED, ProtocolConfig, ProtocolRun, RoundTranscript


def minimal_spec(**overrides):
    raw = {
        "schema_version": 1,
        "config": {"num_agents": 2, "key_len": 16},
        "trials": 2,
        "rounds": 1,
        "seed": 5,
        "adversaries": [{"kind": "none"}],
        "output": "results",
    }
    raw.update(overrides)
    return raw


# ----------------------------------------------------------------- arithmetic


def test_compute_efficiency_examples():
    t = RoundTranscript(num_agents=1, key_len=1, q_u=90, q_t=100, b_t=0)
    assert compute_efficiency(t) == (0.9, 0.9)
    t = RoundTranscript(num_agents=1, key_len=1, q_u=0, q_t=50, b_t=10)
    assert compute_efficiency(t) == (0.0, 0.0)
    t = RoundTranscript(num_agents=1, key_len=1, q_u=30, q_t=60, b_t=40)
    eta_q, eta_t = compute_efficiency(t)
    assert eta_q == 0.5 and eta_t == 0.3
    with pytest.raises(ValueError):
        compute_efficiency(RoundTranscript(num_agents=1, key_len=1))


def test_replay_counters_from_synthetic_events():
    t = RoundTranscript(num_agents=1, key_len=2)
    t.events = [
        ("ghz", 3), ("ghz", 3),
        ("send", "decoy"), ("send", "key"), ("send", "travel"),
        ("msg", "basis", 1), ("msg", "position", 6),
        ("recover", 1, 0, 1, 1), ("recover", 1, 1, 0, 0),
        ("verdict", "secure"),
    ]
    assert replay_counters(t) == (1, 8, 7)
    # a compromised final verdict withholds the payload count
    t.events.append(("verdict", COMPROMISED))
    assert replay_counters(t) == (0, 8, 7)


def test_replay_matches_live_runs_honest_and_attacked():
    for adversary in (None, InterceptResend("Z", "travelling"), DishonestAgent(1, 2)):
        config = ProtocolConfig(num_agents=2, key_len=16, rng_seed=91)
        t = ProtocolRun(config, adversary).run(rounds=2)
        assert replay_counters(t) == (t.q_u, t.q_t, t.b_t)


def test_wilson_interval_frozen_values():
    # frozen from the closed-form score interval at z = 1.96
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and abs(hi - 0.2775401687666166) < 1e-12
    lo, hi = wilson_interval(5, 10)
    assert abs(lo - 0.23658959361548731) < 1e-12
    assert abs(hi - 0.7634104063845126) < 1e-12
    lo, hi = wilson_interval(8, 10)
    assert abs(lo - 0.49015684672072335) < 1e-12
    assert abs(hi - 0.9433190520193067) < 1e-12
    lo, hi = wilson_interval(10, 10)
    assert abs(lo - 0.7224598312333834) < 1e-12 and hi == 1.0
    assert wilson_interval(0, 0) == (0.0, 1.0)
    with pytest.raises(ValueError):
        wilson_interval(5, 4)


# ----------------------------------------------------------------- spec files


def test_spec_from_dict_happy_path_and_defaults():
    spec = ExperimentSpec.from_dict(
        {"schema_version": 1, "config": {"num_agents": 1, "key_len": 8}}
    )
    assert spec.trials == 1 and spec.rounds == 1 and spec.seed == 0
    assert spec.seed_policy == "per-trial-derived"
    assert spec.output == "results"
    assert [json.loads(d) for d in spec.adversaries] == [{"kind": "none"}]


@pytest.mark.parametrize(
    "mutation",
    [
        {"schema_version": 2},
        {"config": None},
        {"config": {"num_agents": 2, "key_len": 16, "laser_power": 9}},
        {"config": {"num_agents": 2, "key_len": 0}},
        {"adversaries": []},
        {"adversaries": [{"kind": "quantum-cloner"}]},
        {"adversaries": [{"kind": "none", "basis": "Z"}]},
        {"adversaries": [{"kind": "intercept-resend", "basis": "W", "target": "travelling"}]},
        {"adversaries": [{"kind": "dishonest-agent", "cheater": 1, "victim": 1}]},
        {"adversaries": [{"basis": "Z"}]},
        {"trials": 0},
        {"trials": True},
        {"rounds": -1},
        {"seed": "seven"},
        {"seed_policy": "lucky"},
        {"output": ""},
    ],
)
def test_spec_from_dict_rejections(mutation):
    with pytest.raises(SpecError):
        ExperimentSpec.from_dict(minimal_spec(**mutation))


def test_load_spec_error_paths(tmp_path):
    with pytest.raises(SpecError):
        load_spec(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(SpecError):
        load_spec(str(bad))
    good = tmp_path / "good.json"
    good.write_text(json.dumps(minimal_spec()), encoding="utf-8")
    assert load_spec(str(good)).trials == 2


def test_make_strategy_dispatch():
    assert type(make_strategy({"kind": "none"})) is AdversaryStrategy
    eve = make_strategy({"kind": "intercept-resend", "basis": "X", "target": "key-particles"})
    assert isinstance(eve, InterceptResend) and eve.basis == "X"
    cheat = make_strategy({"kind": "dishonest-agent", "cheater": 2, "victim": 1})
    assert isinstance(cheat, DishonestAgent) and (cheat.cheater, cheat.victim) == (2, 1)
    with pytest.raises(SpecError):
        make_strategy({"kind": "intercept-resend", "laser": True})


def test_base_config_merges_seed():
    config = base_config({"num_agents": 1, "key_len": 8, "decoy_rate": 0.2}, rng_seed=42)
    assert config.rng_seed == 42 and config.decoy_rate == 0.2
    with pytest.raises(SpecError):
        base_config({"nope": 1})


def test_seed_policies():
    fixed = [harness._trial_seed("fixed", 7, 0, t) for t in range(3)]
    assert len(set(fixed)) == 1
    derived = [harness._trial_seed("per-trial-derived", 7, 0, t) for t in range(3)]
    assert len(set(derived)) == 3
    # deterministic across calls and distinct across grid cells
    assert harness._trial_seed("fixed", 7, 0, 0) == fixed[0]
    assert harness._trial_seed("fixed", 7, 1, 0) != fixed[0]


# ------------------------------------------------------------ run_experiment


def test_run_experiment_honest_grid(tmp_path):
    spec = ExperimentSpec.from_dict(
        minimal_spec(trials=4, rounds=2, output=str(tmp_path / "out"))
    )
    rows = run_experiment(spec)
    assert len(rows) == 1
    row = rows[0]
    assert row.detected == 0 and row.detection_rate == 0.0
    assert row.fidelity == 1.0
    assert row.e1_error_rate == 0.0 and row.reuse_error_rate == 0.0
    assert 0.0 <= row.eta_t <= row.eta_q <= 1.0
    assert 0.0 <= row.detection_lo <= row.detection_hi <= 1.0
    assert (tmp_path / "out.csv").exists() and (tmp_path / "out.json").exists()


def test_run_experiment_is_reproducible(tmp_path):
    raw = minimal_spec(
        trials=3,
        rounds=2,
        adversaries=[
            {"kind": "none"},
            {"kind": "intercept-resend", "basis": "Z", "target": "travelling"},
            {"kind": "dishonest-agent", "cheater": 1, "victim": 2},
        ],
        output=str(tmp_path / "rep"),
    )
    spec = ExperimentSpec.from_dict(raw)
    rows_a = run_experiment(spec, write_files=False)
    rows_b = run_experiment(spec, write_files=False)
    assert render_csv(rows_a) == render_csv(rows_b)
    assert render_json(spec, rows_a) == render_json(spec, rows_b)


def test_intercept_resend_x_is_reliably_detected(tmp_path):
    # with ~8 in-flight samples per round the miss probability is 2^-8
    raw = minimal_spec(
        config={"num_agents": 2, "key_len": 32, "sample_rate_e3": 0.3},
        trials=30,
        rounds=1,
        adversaries=[{"kind": "intercept-resend", "basis": "X", "target": "travelling"}],
        output=str(tmp_path / "ir"),
        seed=17,
    )
    rows = run_experiment(ExperimentSpec.from_dict(raw), write_files=False)
    assert rows[0].detection_rate >= 0.9
    assert rows[0].fidelity is None  # every detected run withholds the payload


def test_dishonest_agent_detection_rises_with_decoy_rate(tmp_path):
    rates = []
    for decoy_rate in (0.0, 0.125, 0.3125):
        raw = minimal_spec(
            config={
                "num_agents": 2, "key_len": 16,
                "decoy_rate": decoy_rate, "retry_limit": 0,
            },
            trials=80,
            rounds=0,
            adversaries=[{"kind": "dishonest-agent", "cheater": 1, "victim": 2}],
            seed=23,
        )
        rows = run_experiment(ExperimentSpec.from_dict(raw), write_files=False)
        d = math.ceil(decoy_rate * 16)
        closed_form = 1.0 - 0.5 ** d
        sigma = math.sqrt(closed_form * (1 - closed_form) / 80) if d else 0.0
        assert abs(rows[0].detection_rate - closed_form) <= 3 * sigma + 1e-12
        rates.append(rows[0].detection_rate)
    assert rates[0] == 0.0
    assert rates[0] < rates[1] < rates[2]


def test_csv_and_json_round_trip(tmp_path):
    spec = ExperimentSpec.from_dict(minimal_spec(output=str(tmp_path / "fmt")))
    rows = run_experiment(spec)
    header, line = render_csv(rows).splitlines()[:2]
    assert header.split(",")[:4] == ["adversary", "trials", "detected", "detection_rate"]
    # repr round trip: parsing the text reproduces the float exactly
    csv_text = (tmp_path / "fmt.csv").read_text(encoding="utf-8")
    eta_t_text = csv_text.splitlines()[1].rsplit(",", 1)[1]
    assert float(eta_t_text) == rows[0].eta_t
    doc = json.loads((tmp_path / "fmt.json").read_text(encoding="utf-8"))
    assert doc["schema_version"] == 1
    assert doc["rows"][0]["trials"] == 2
    assert doc["spec"]["config"] == {"num_agents": 2, "key_len": 16}


def test_fidelity_column_empty_when_withheld(tmp_path):
    raw = minimal_spec(
        config={"num_agents": 2, "key_len": 16, "retry_limit": 0},
        trials=2,
        rounds=1,
        adversaries=[{"kind": "intercept-resend", "basis": "Z", "target": "key-particles"}],
        output=str(tmp_path / "wh"),
    )
    rows = run_experiment(ExperimentSpec.from_dict(raw), write_files=False)
    assert rows[0].detection_rate == 1.0
    assert rows[0].fidelity is None
    line = render_csv(rows).splitlines()[1]
    assert ",,"  in line  # the withheld column renders empty


# -------------------------------------------------------------- invariants


def test_invariant_suite_passes():
    results = invariant_suite()
    names = [name for name, _, _ in results]
    assert len(names) == len(set(names))
    failed = [name for name, ok, _ in results if not ok]
    assert failed == []


def test_invariant_suite_with_other_seed():
    assert all(ok for _, ok, _ in invariant_suite(seed=3))


# --------------------------------------------------------------------- CLI


def test_cli_run_writes_files_and_prints_table(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(minimal_spec(output=str(tmp_path / "cli"))), encoding="utf-8")
    rc = cli.main(["run", str(spec_path)])
    captured = capsys.readouterr()
    assert rc == 0
    assert captured.out.startswith("adversary,")
    assert "wrote" in captured.err
    assert (tmp_path / "cli.csv").exists()
    assert (tmp_path / "cli.json").exists()


def test_cli_run_creates_missing_output_directories(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(minimal_spec()), encoding="utf-8")
    prefix = tmp_path / "deep" / "nested" / "results"
    rc = cli.main(["run", str(spec_path), "--output", str(prefix)])
    capsys.readouterr()
    assert rc == 0
    assert prefix.with_suffix(".csv").exists()
    assert prefix.with_suffix(".json").exists()


def test_cli_run_is_byte_identical_across_invocations(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(minimal_spec()), encoding="utf-8")
    blobs = []
    for name in ("a", "b"):
        rc = cli.main(["run", str(spec_path), "--output", str(tmp_path / name)])
        assert rc == 0
        capsys.readouterr()
        blobs.append(
            ((tmp_path / f"{name}.csv").read_bytes(), (tmp_path / f"{name}.json").read_bytes())
        )
    assert blobs[0][0] == blobs[1][0]
    assert blobs[0][1] == blobs[1][1]


def test_cli_seed_flag_beats_environment(tmp_path, capsys, monkeypatch):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(
        json.dumps(minimal_spec(adversaries=[{"kind": "intercept-resend",
                                              "basis": "Z", "target": "travelling"}])),
        encoding="utf-8",
    )

    def run_with(args, env_seed=None):
        if env_seed is None:
            monkeypatch.delenv(cli.SEED_ENV_VAR, raising=False)
        else:
            monkeypatch.setenv(cli.SEED_ENV_VAR, env_seed)
        rc = cli.main(args + ["--output", str(tmp_path / "s")])
        assert rc == 0
        doc = json.loads((tmp_path / "s.json").read_text(encoding="utf-8"))
        return capsys.readouterr().out, doc["spec"]["seed"]

    base = run_with(["run", str(spec_path)])
    flagged = run_with(["run", str(spec_path), "--seed", "123"])
    env_only = run_with(["run", str(spec_path)], env_seed="123")
    both = run_with(["run", str(spec_path), "--seed", "123"], env_seed="999")
    assert base[1] == 5  # the spec's own seed
    assert flagged[1] == env_only[1] == both[1] == 123
    assert flagged[0] == env_only[0] == both[0]


def test_cli_error_exit_codes(tmp_path, capsys, monkeypatch):
    assert cli.main(["run", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(minimal_spec(trials=0)), encoding="utf-8")
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    capsys.readouterr()
    ok = tmp_path / "ok.json"
    ok.write_text(json.dumps(minimal_spec()), encoding="utf-8")
    monkeypatch.setenv(cli.SEED_ENV_VAR, "not-a-number")
    assert cli.main(["run", str(ok)]) == cli.EXIT_CONFIG
    monkeypatch.delenv(cli.SEED_ENV_VAR)
    with pytest.raises(SystemExit):
        cli.main([])  # a subcommand is required


def test_cli_check_command(capsys, monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV_VAR, raising=False)
    rc = cli.main(["check"])
    out = capsys.readouterr().out
    assert rc == cli.EXIT_OK
    assert "PASS" in out and "FAIL" not in out
    assert "invariant checks passed" in out


def test_cli_demo_command(capsys, monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV_VAR, raising=False)
    rc = cli.main(["demo", "--seed", "3", "--agents", "3", "--key-len", "8"])
    first = capsys.readouterr().out
    assert rc == cli.EXIT_OK
    for marker in ("S1:", "S2:", "S3:", "efficiency:"):
        assert marker in first
    cli.main(["demo", "--seed", "3", "--agents", "3", "--key-len", "8"])
    assert capsys.readouterr().out == first
