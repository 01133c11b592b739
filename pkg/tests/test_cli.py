"""Command-line harness: subcommand behavior, exit codes, and round trips."""

import json

import pytest

from remsa.cli import (
    EXIT_OK,
    EXIT_PARSE,
    EXIT_PROTOCOL,
    grounding_run,
    grounding_specs,
    main,
    run_compare,
)
from remsa.estimation import FitConfig, fit_mle
from remsa.sim.episode import BASELINE, TRUST_PRESERVED, EpisodeLog
from remsa.sim.operator import OperatorParams
from remsa.sim.scenario import feasible, generate_scenario


@pytest.fixture(scope="module")
def ground_out(tmp_path_factory):
    """One grounding run shared by the fit/ground/infer tests."""
    d = tmp_path_factory.mktemp("ground")
    out = d / "ground.json"
    events = d / "events.jsonl"
    code = main(
        ["ground", "--scenario-seed", "0", "--seed", "0",
         "--out", str(out), "--events-out", str(events)]
    )
    assert code == EXIT_OK
    return {"doc": json.loads(out.read_text()), "events": events, "dir": d}


@pytest.fixture(scope="module")
def episode_log_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    path = d / "episode.jsonl"
    code = main(
        ["simulate", "--scenario-seed", "0", "--seed", "0",
         "--condition", TRUST_PRESERVED, "--out", str(path)]
    )
    assert code == EXIT_OK
    return path


class TestGround:
    def test_gate_coefficient_negative_and_converged(self, ground_out):
        doc = ground_out["doc"]
        assert doc["converged"]
        assert doc["theta"][1] < 0.0

    def test_reports_cover_both_autonomy_levels(self, ground_out):
        levels = {r["l_alpha"] for r in ground_out["doc"]["reports"]}
        assert levels == {0.9, 0.1}
        for r in ground_out["doc"]["reports"]:
            assert 0.0 <= r["reported_before"] <= 1.0
            for v in r["reported_after"].values():
                assert 0.0 <= v <= 1.0
                # reports live on the 10-point scale
                assert round(v * 10) == pytest.approx(v * 10)

    def test_negative_gate_across_seeds(self):
        for s in (1, 2, 3):
            h, a, meta = grounding_run(s * 10, s * 7 + 1, OperatorParams())
            r = fit_mle(
                h, a, grounding_specs(),
                FitConfig(mode="temporal", t_end=meta["t_end"], grad_tol=1e-5),
            )
            assert r.converged
            assert r.theta_star[1] < 0.0

    def test_deterministic(self, ground_out, tmp_path):
        out2 = tmp_path / "ground2.json"
        assert main(
            ["ground", "--scenario-seed", "0", "--seed", "0", "--out", str(out2)]
        ) == EXIT_OK
        assert json.loads(out2.read_text()) == ground_out["doc"]

    def test_requires_out(self):
        assert main(["ground"]) == EXIT_PARSE


class TestFit:
    def test_fit_grounding_events(self, ground_out, tmp_path):
        specs = tmp_path / "specs.json"
        specs.write_text(json.dumps([{"kind": "intercept"}]))
        out = tmp_path / "fit.json"
        code = main(
            ["fit", "--events", str(ground_out["events"]),
             "--specs", str(specs), "--mode", "temporal", "--out", str(out)]
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["converged"]
        assert len(doc["theta"]) == 1
        assert doc["log_lik"] < 0.0

    def test_fit_deterministic(self, ground_out, tmp_path):
        specs = tmp_path / "specs.json"
        specs.write_text(json.dumps([{"kind": "intercept"}, {"kind": "inertia"}]))
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            assert main(
                ["fit", "--events", str(ground_out["events"]),
                 "--specs", str(specs), "--out", str(out)]
            ) == EXIT_OK
            outs.append(out.read_text())
        assert outs[0] == outs[1]

    def test_missing_events_file(self, tmp_path):
        specs = tmp_path / "specs.json"
        specs.write_text(json.dumps([{"kind": "intercept"}]))
        assert main(
            ["fit", "--events", str(tmp_path / "nope.jsonl"),
             "--specs", str(specs), "--out", str(tmp_path / "o.json")]
        ) == EXIT_PARSE

    def test_bad_specs_file(self, ground_out, tmp_path):
        specs = tmp_path / "specs.json"
        specs.write_text("{not json")
        assert main(
            ["fit", "--events", str(ground_out["events"]),
             "--specs", str(specs), "--out", str(tmp_path / "o.json")]
        ) == EXIT_PARSE

    def test_insufficient_events(self, ground_out, tmp_path):
        # more parameters than events cannot be fit
        header = ground_out["events"].read_text().splitlines()[0]
        few = tmp_path / "few.jsonl"
        few.write_text(header + "\n")
        specs = tmp_path / "specs.json"
        specs.write_text(json.dumps([{"kind": "intercept"}]))
        assert main(
            ["fit", "--events", str(few), "--specs", str(specs),
             "--out", str(tmp_path / "o.json")]
        ) == EXIT_PARSE


class TestInfer:
    def test_windowed_posterior(self, ground_out, tmp_path):
        out = tmp_path / "infer.json"
        code = main(
            ["infer", "--events", str(ground_out["events"]),
             "--dyad", "H:R1", "--out", str(out)]
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["dyad"] == "H:R1"
        assert len(doc["windows"]) >= 2
        for w in doc["windows"]:
            assert 0.0 <= w["mean"] <= 1.0
            assert w["var"] >= 0.0
            assert 0.0 <= w["value_at_risk"] <= 1.0

    def test_bad_dyad_spec(self, ground_out, tmp_path):
        assert main(
            ["infer", "--events", str(ground_out["events"]), "--dyad", "HR1"]
        ) == EXIT_PARSE

    def test_bad_theta_file(self, ground_out, tmp_path):
        theta = tmp_path / "theta.json"
        theta.write_text("[]")
        assert main(
            ["infer", "--events", str(ground_out["events"]),
             "--theta", str(theta)]
        ) == EXIT_PARSE


class TestSimulate:
    def test_metrics_on_stdout(self, capsys):
        assert main(["simulate", "--scenario-seed", "0", "--seed", "0"]) == EXIT_OK
        m = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert {"success", "exploded", "ticks", "task_duration",
                "n_commands", "final_trust"} <= set(m)

    def test_global_and_subcommand_seed_agree(self, capsys):
        assert main(["--seed", "3", "simulate",
                     "--condition", BASELINE]) == EXIT_OK
        first = capsys.readouterr().out
        assert main(["simulate", "--seed", "3",
                     "--condition", BASELINE]) == EXIT_OK
        assert capsys.readouterr().out == first

    def test_unknown_condition_rejected_by_parser(self):
        with pytest.raises(SystemExit) as e:
            main(["simulate", "--condition", "adaptive"])
        assert e.value.code == EXIT_PARSE

    def test_scenario_file_roundtrip(self, tmp_path, capsys):
        sc = generate_scenario(4)
        path = tmp_path / "scenario.json"
        path.write_text(sc.to_json())
        assert main(["simulate", "--scenario", str(path)]) == EXIT_OK
        via_file = capsys.readouterr().out
        assert main(["simulate", "--scenario-seed", "4"]) == EXIT_OK
        assert capsys.readouterr().out == via_file

    def test_bad_scenario_file(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text("{}")
        assert main(["simulate", "--scenario", str(path)]) == EXIT_PARSE

    def test_bad_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{broken")
        assert main(["--config", str(cfg), "simulate"]) == EXIT_PARSE

    def test_bad_operator_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"operator": {"no_such_param": 1}}))
        assert main(["--config", str(cfg), "simulate"]) == EXIT_PARSE


class TestReplay:
    def test_roundtrip(self, episode_log_path, tmp_path, capsys):
        out = tmp_path / "telemetry.json"
        code = main(["replay", "--log", str(episode_log_path), "--out", str(out)])
        assert code == EXIT_OK
        telemetry = json.loads(out.read_text())["telemetry"]
        log = EpisodeLog.from_jsonl(episode_log_path.read_text())
        assert telemetry == log.telemetry()

    def test_truncated_log(self, episode_log_path, tmp_path):
        lines = episode_log_path.read_text().splitlines()
        bad = tmp_path / "truncated.jsonl"
        bad.write_text("\n".join(lines[:-1]))
        assert main(["replay", "--log", str(bad)]) == EXIT_PARSE

    def test_config_hash_mismatch(self, episode_log_path, tmp_path):
        records = [
            json.loads(s) for s in episode_log_path.read_text().splitlines()
        ]
        records[0]["header"]["config_hash"] = "0" * 64
        bad = tmp_path / "tampered.jsonl"
        bad.write_text(
            "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n"
        )
        assert main(["replay", "--log", str(bad)]) == EXIT_PROTOCOL

    def test_missing_log(self, tmp_path):
        assert main(["replay", "--log", str(tmp_path / "nope.jsonl")]) == EXIT_PARSE


@pytest.fixture(scope="module")
def summary(tmp_path_factory):
    out = tmp_path_factory.mktemp("cmp")
    return run_compare(4, seed_start=0, out_dir=out), out


class TestCompare:
    def test_paired_trials_feasible(self, summary):
        s, _ = summary
        seeds = {r["seed"] for r in s["rows"]}
        assert all(feasible(generate_scenario(seed)) for seed in seeds)
        for seed in seeds:
            conds = {r["condition"] for r in s["rows"] if r["seed"] == seed}
            assert conds == {BASELINE, TRUST_PRESERVED}

    def test_outputs_written(self, summary):
        s, out = summary
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + len(s["rows"])
        disk = json.loads((out / "summary.json").read_text())
        assert disk["conditions"] == json.loads(
            json.dumps(s["conditions"])
        )
        assert set(disk["p_values"]) == set(s["p_values"])
        for (cond, seed) in s["logs"]:
            assert (out / "logs" / f"{cond}_{seed}.jsonl").exists()

    def test_order_independent(self, summary):
        from remsa.sim.episode import Condition

        s, _ = summary
        flipped = run_compare(
            4, seed_start=0,
            conditions=(Condition(TRUST_PRESERVED), Condition(BASELINE)),
        )
        assert flipped["conditions"] == s["conditions"]
        assert flipped["p_values"] == s["p_values"]

    def test_duration_over_successes_only(self, summary):
        s, _ = summary
        for cond, agg in s["conditions"].items():
            succ_durs = [
                r["task_duration"] for r in s["rows"]
                if r["condition"] == cond and r["success"]
            ]
            if succ_durs:
                assert agg["mean_task_duration"] == pytest.approx(
                    sum(succ_durs) / len(succ_durs)
                )

    def test_cli_entry(self, tmp_path, capsys):
        code = main(["compare", "--trials", "2", "--out", str(tmp_path / "o")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "success_rate" in out
        assert "success_sign_test" in out
