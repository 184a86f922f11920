import json
import os

import numpy as np
import pytest

from oracles import highs
from pamdp_lab import bandit, core, planner
from pamdp_lab.errors import GenerationFailed, InvalidInputError
from pamdp_lab.harness import certify, cli, experiment, io
from pamdp_lab.harness.generate import InstanceSpec, generate_instance
from pamdp_lab.harness.rng import replication_seeds, seed_sequence, stream


# ---------------------------------------------------------------- rng

def test_streams_are_reproducible_and_distinct():
    a = stream(5, "rep", 3).random(4)
    np.testing.assert_array_equal(a, stream(5, "rep", 3).random(4))
    assert not np.array_equal(a, stream(5, "rep", 4).random(4))
    assert not np.array_equal(a, stream(6, "rep", 3).random(4))
    assert seed_sequence(1, "x").spawn_key != seed_sequence(1, "y").spawn_key


def test_replication_seeds_are_prefix_stable():
    assert replication_seeds(0, 3) == replication_seeds(0, 10)[:3]
    assert len(set(replication_seeds(0, 50))) == 50


# ---------------------------------------------------------------- generation and certificates

def test_mixing_request_bounds_every_entry():
    env, certs = generate_instance(InstanceSpec("mixing", 2, 2, 2, targets={"kappa": 0.2}, seed=1))
    assert env.P.min() >= 0.2 and certs["kappa"].ok
    assert env.certificates["kappa"] == pytest.approx(env.P.min())


def lambda_s_highs(P, a):
    A, S = P.shape
    rows = [np.concatenate([P[a] - P[b], [-1.0]]) for b in range(A) if b != a]
    obj = np.zeros(S + 1)
    obj[-1] = -1
    _, v = highs(obj, rows, [">="] * len(rows), [0.0] * len(rows),
                 np.concatenate([np.zeros(S), [-np.inf]]), np.concatenate([np.ones(S), [np.inf]]))
    return -v


@pytest.mark.parametrize("seed", range(3))
def test_lambda_s_request_is_met_per_step_state_action(seed):
    env, certs = generate_instance(InstanceSpec("mixing", 3, 2, 2, targets={"kappa": 0.1, "lambda_s": 0.3},
                                                seed=seed))
    for h in range(env.H):
        for s in range(env.S):
            for a in range(env.A):
                assert lambda_s_highs(env.P[h, s], a) >= 0.3 - 1e-9
    e = certs["lambda_s"].witness["events"]
    h, s, a = certs["lambda_s"].witness["argmin"]
    gaps = [(env.P[h, s, a] - env.P[h, s, b]) @ e[h, s, a] for b in range(env.A) if b != a]
    assert min(gaps) == pytest.approx(certs["lambda_s"].value, abs=1e-9)


@pytest.mark.parametrize("mu", [0.6, 0.9])
def test_example1_builder(mu):
    inst, certs = generate_instance(InstanceSpec("example1", params={"mu": mu}))
    ref = bandit.example1(mu)
    np.testing.assert_array_equal(inst.P, ref.P)
    np.testing.assert_array_equal(inst.c, [0.5, 0.0])
    assert certs["lambda"].value == pytest.approx(mu)


def test_uniform_transitions_have_kappa_one_over_S():
    S = 4
    P = np.full((2, S, 2, S), 1 / S)
    env = core.Pamdp(P, np.zeros((2, S, 2)), np.zeros((2, S, 2)), np.full(S, 1 / S), 1.0)
    assert certify.certify_assumption(env, "kappa").value == pytest.approx(1 / S)
    assert certify.certify_assumption(env, "kappa0").value == pytest.approx(0.5 / S)


def test_duplicate_actions_violate_strong_inducibility():
    P = np.array([[[[0.3, 0.7], [0.3, 0.7], [0.9, 0.1]]]]).repeat(2, axis=1)
    env = core.Pamdp(P, np.zeros((1, 2, 3)), np.zeros((1, 2, 3)), [1, 0], 1.0)
    cert = certify.certify_assumption(env, "lambda_s", 0.1)
    assert cert.value <= 0 and not cert.ok
    assert sorted(cert.witness["violating_pair"]) == [0, 1]


def test_lambda_w_is_at_least_lambda_s_on_horizon_one():
    # for H = 1 and a single start state the policy LP reduces to the action LP at that state
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(2), size=(1, 2, 2))
    env = core.Pamdp(P, np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), [1, 0], 1.0)
    lw = certify.certify_lambda_w(env).value
    ls = min(bandit.inducibility(P[0, 0], a)[0] for a in range(2))
    # policies differing only at the unreached state tie, so lambda_w collapses to 0
    assert lw == pytest.approx(0.0, abs=1e-9) and ls > 0


def test_theta_and_varsigma_certificates():
    assert certify.certify_theta([0.0, 0.3, 0.5]).value == pytest.approx(0.2)
    P = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]])
    cert = certify.certify_varsigma(P, [0, 0, 0], 1.0, 0.3, n=50_000)
    assert cert.ok and cert.value == pytest.approx(1 / 3, abs=0.02)


def test_generation_failure_carries_diagnostics():
    spec = InstanceSpec("random", 2, 2, 1, targets={"kappa": 0.45}, seed=0, budget=5)
    with pytest.raises(GenerationFailed) as info:
        generate_instance(spec)
    assert "kappa" in info.value.diagnostics


def test_infeasible_mixing_target_is_rejected():
    with pytest.raises(InvalidInputError):
        generate_instance(InstanceSpec("mixing", 3, 2, 1, targets={"kappa": 0.5}))
    with pytest.raises(InvalidInputError):
        generate_instance(InstanceSpec("nope"))


def test_generation_is_seeded():
    spec = InstanceSpec("mixing", 2, 2, 2, targets={"kappa": 0.2, "lambda_s": 0.3}, seed=4)
    a, _ = generate_instance(spec)
    b, _ = generate_instance(spec)
    np.testing.assert_array_equal(a.P, b.P)


# ---------------------------------------------------------------- io

def test_instance_roundtrip(tmp_path):
    env, _ = generate_instance(InstanceSpec("mixing", 2, 2, 2, targets={"kappa": 0.2}, seed=0))
    path = tmp_path / "env.json"
    io.save_instance(env, path)
    back = io.load_instance(path)
    np.testing.assert_array_equal(back.P, env.P)
    np.testing.assert_array_equal(back.c, env.c)
    assert io.instance_hash(back) == io.instance_hash(env)
    d = json.loads(path.read_text())
    d["S"] = 5
    path.write_text(json.dumps(d))
    with pytest.raises(InvalidInputError):
        io.load_instance(path)
    path.write_text("{")
    with pytest.raises(InvalidInputError):
        io.load_instance(path)


def test_bandit_instance_roundtrip_through_experiment_loader(tmp_path):
    inst = bandit.example1(0.9)
    path = tmp_path / "ex1.json"
    io.save_instance(inst, path)
    back = experiment.load_or_generate(str(path), "ucb")
    np.testing.assert_array_equal(back.P, inst.P)
    np.testing.assert_array_equal(back.r, inst.r)


# ---------------------------------------------------------------- experiments

def test_experiment_writes_traces_and_summary(tmp_path):
    cfg = experiment.ExperimentConfig({"generator": "example1", "params": {"mu": 0.9}},
                                      "ucb", [10], 1, 0, {}, str(tmp_path / "run"))
    summary = experiment.run_experiment(cfg, n_workers=1)
    rows = io.load_trace_csv(tmp_path / "run" / "T10_rep000.csv")
    assert rows["t"].size == 10
    np.testing.assert_allclose(rows["cum_regret"], np.cumsum(rows["inst_regret"]))
    assert (tmp_path / "run" / "summary.json").exists()
    side = json.loads((tmp_path / "run" / "T10_rep000.csv.json").read_text())
    assert side["instance_hash"] == summary["instance_hash"]


def test_identical_seeds_give_identical_csvs(tmp_path):
    for name in ("a", "b"):
        cfg = experiment.ExperimentConfig({"generator": "example1", "params": {"mu": 0.9}},
                                          "etc", [200], 2, 7, {}, str(tmp_path / name))
        experiment.run_experiment(cfg, n_workers=1)
    for rep in range(2):
        f = f"T200_rep{rep:03d}.csv"
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_parallel_and_sequential_runs_agree(tmp_path):
    base = dict(instance={"generator": "example1"}, algorithm="ucb", T=[100], reps=3, seed=1)
    experiment.run_experiment(experiment.ExperimentConfig(**base, out=str(tmp_path / "seq")), n_workers=1)
    experiment.run_experiment(experiment.ExperimentConfig(**base, out=str(tmp_path / "par")), n_workers=2)
    for rep in range(3):
        f = f"T100_rep{rep:03d}.csv"
        assert (tmp_path / "seq" / f).read_bytes() == (tmp_path / "par" / f).read_bytes()


def test_failed_replications_are_recorded(tmp_path):
    cfg = experiment.ExperimentConfig({"generator": "example1"}, "etc", [10], 2, 0,
                                      {"no_such_param": 1}, str(tmp_path))
    summary = experiment.run_experiment(cfg, n_workers=1)
    assert len(summary["errors"]) == 2 and "TypeError" in summary["errors"][0]["traceback"]


def test_config_validation(tmp_path):
    with pytest.raises(InvalidInputError):
        experiment.ExperimentConfig({"generator": "example1"}, "nope")
    with pytest.raises(InvalidInputError):
        experiment.ExperimentConfig(str(tmp_path / "missing.json"))
    with pytest.raises(InvalidInputError):
        experiment.ExperimentConfig({"generator": "example1"}, T=[0])


def test_exponent_fit_on_square_root_curve():
    T = np.repeat([1e2, 1e3, 1e4, 1e5], 5)
    rng = np.random.default_rng(0)
    R = 3 * T ** 0.5 * np.exp(rng.normal(scale=0.01, size=T.size))
    b, (lo, hi), a = experiment.fit_exponent(T, R)
    assert b == pytest.approx(0.5, abs=0.01)
    assert lo <= b <= hi
    assert a == pytest.approx(np.log(3), abs=0.05)
    with pytest.raises(InvalidInputError):
        experiment.fit_exponent([10, 10], [1, 2])


@pytest.mark.parametrize("algorithm", ["ucb", "etc", "doubling_ucb"])
def test_reported_bandit_regret_matches_recomputation(algorithm):
    inst = bandit.example1(0.9)
    tr = experiment.run_replication(inst, algorithm, 300, 3)
    recomputed, reported = experiment.verify_regret(inst, tr)
    assert recomputed == pytest.approx(reported, abs=1e-7)


def test_reported_rl_regret_matches_recomputation():
    env, _ = generate_instance(InstanceSpec("mixing", 2, 2, 2, targets={"kappa": 0.2, "lambda_s": 0.3,
                                                                          "varsigma": 0.2}, seed=0))
    tr = experiment.run_replication(env, "rl", 500, 0)
    recomputed, reported = experiment.verify_regret(env, tr)
    assert recomputed == pytest.approx(reported, abs=1e-7)
    assert tr.meta["v_star"] == pytest.approx(planner.brute_force_plan(env).value)


# ---------------------------------------------------------------- CLI

def run_cli(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_gen_and_plan(tmp_path, capsys):
    inst = tmp_path / "ex1.json"
    code, _, _ = run_cli(["gen", "--generator", "example1", "--mu", "0.9", "--out", str(inst)], capsys)
    assert code == 0 and inst.exists()
    plan_path = tmp_path / "plan.json"
    code, _, _ = run_cli(["plan", str(inst), "--out", str(plan_path)], capsys)
    assert code == 0
    plan = json.loads(plan_path.read_text())
    assert plan["V_star"] == pytest.approx(1 - 1 / 1.8, abs=1e-7)
    assert plan["pi_star"][0][0] == 0


def test_cli_plan_auto_picks_the_better_plan(tmp_path, capsys):
    from test_planner import COUNTEREXAMPLE
    env = core.Pamdp(**COUNTEREXAMPLE)
    path = tmp_path / "cex.json"
    io.save_instance(env, path)
    code, out, _ = run_cli(["plan", str(path), "--method", "auto"], capsys)
    assert code == 0 and json.loads(out)["V_star"] == pytest.approx(1.22644, abs=1e-9)


def test_cli_bandit_and_rl_runs(tmp_path, capsys):
    code, out, _ = run_cli(["bandit", "--algo", "ucb", "--T", "50", "100", "--reps", "2",
                            "--out", str(tmp_path / "b")], capsys)
    assert code == 0
    brief = json.loads(out)
    assert set(brief["final_regret"]) == {"50", "100"} and "exponent" in brief
    env_path = tmp_path / "mix.json"
    run_cli(["gen", "--generator", "mixing", "--kappa", "0.2", "--lambda-s", "0.3", "--varsigma", "0.2",
             "--out", str(env_path)], capsys)
    code, _, _ = run_cli(["rl", "--instance", str(env_path), "--T", "450", "--log-policies",
                          "--out", str(tmp_path / "r")], capsys)
    assert code == 0
    assert (tmp_path / "r" / "T450_rep000.csv.policies.json").exists()


def test_cli_search(capsys):
    code, out, _ = run_cli(["search", "--lines", "50", "--seed", "2"], capsys)
    res = json.loads(out)
    assert code == 0 and res["max_pair_error"] <= res["error_surrogate"]


def test_cli_verify(capsys):
    code, out, _ = run_cli(["verify", "--reps", "5"], capsys)
    assert code == 0
    assert "solver_vi_matches_dp 5/5" in out and "solver_lp_matches_brute_force 5/5" in out


def test_cli_exit_codes(tmp_path, capsys):
    # validation: kappa above 1/S
    code, _, err = run_cli(["gen", "--generator", "mixing", "--S", "3", "--kappa", "0.5"], capsys)
    assert code == 2 and "kappa" in err
    code, _, _ = run_cli(["plan", str(tmp_path / "missing.json")], capsys)
    assert code == 2
    # numerical: every replication failed
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"params": {"no_such_param": 1}}))
    code, _, _ = run_cli(["bandit", "--algo", "etc", "--T", "10", "--config", str(cfg),
                          "--out", str(tmp_path / "x")], capsys)
    assert code == 3
    # generation: unreachable target within a tiny budget
    gcfg = tmp_path / "gen.json"
    gcfg.write_text(json.dumps({"budget": 3}))
    code, _, err = run_cli(["gen", "--generator", "random", "--kappa", "0.45", "--config", str(gcfg)], capsys)
    assert code == 4 and "kappa" in err


def test_module_entry_point_runs():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "pamdp_lab.harness", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gen" in res.stdout
