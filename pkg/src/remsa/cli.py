"""Command-line harness: offline fitting, online inference, batch A/B
experiments, live sessions, and log replay.

Exit codes: 0 success, 2 parse error, 3 non-convergence, 4 protocol error.
Every subcommand is deterministic given its inputs and declared seeds.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
from scipy import stats

from remsa.estimation import FitConfig, fit_mle
from remsa.events import (
    AttributeSet,
    EventHistory,
    RateModel,
    StatisticSpec,
    read_attrs,
    read_event_log,
    write_event_log,
)
from remsa.sim.comms import EVENT_TYPE_NAMES
from remsa.sim.episode import (
    BASELINE,
    DEFAULT_THETA,
    ROBOTS,
    TRUST_PRESERVED,
    WINDOW_TICKS,
    Condition,
    EpisodeLog,
    inference_specs,
    replay_telemetry,
    run_episode,
)
from remsa.sim.operator import OperatorParams
from remsa.sim.scenario import ScenarioConfig, feasible, generate_scenario
from remsa.trust import (
    ObservationWindow,
    default_grid,
    init_prior,
    summarize,
    update_posterior,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_PROTOCOL = 4

# a 10-point subjective trust report maps to [0,1] by value/10
LIKERT_POINTS = 10


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_config(path: str | None) -> dict:
    """Optional config file with sections
    {model, inference, controller, scenario, operator, experiment}."""
    if path is None:
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"config file {path}: {exc}", EXIT_PARSE) from exc


def _operator_params(config: dict) -> OperatorParams:
    try:
        return OperatorParams(**config.get("operator", {}))
    except TypeError as exc:
        raise CliError(f"operator config: {exc}", EXIT_PARSE) from exc


def _theta(config: dict) -> tuple[float, ...]:
    return tuple(config.get("model", {}).get("theta", DEFAULT_THETA))


def _read_specs(path: str) -> tuple[StatisticSpec, ...]:
    try:
        with open(path) as f:
            doc = json.load(f)
        return tuple(StatisticSpec.from_dict(d) for d in doc)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError(f"specs file {path}: {exc}", EXIT_PARSE) from exc


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")


def _load_scenario(args, config: dict) -> ScenarioConfig:
    if getattr(args, "scenario", None):
        try:
            with open(args.scenario) as f:
                return ScenarioConfig.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CliError(f"scenario file {args.scenario}: {exc}", EXIT_PARSE) from exc
    overrides = config.get("scenario", {})
    sc = generate_scenario(args.scenario_seed)
    if overrides:
        from dataclasses import replace

        try:
            sc = replace(sc, **overrides)
        except (TypeError, ValueError) as exc:
            raise CliError(f"scenario config: {exc}", EXIT_PARSE) from exc
    return sc


# -- fit --------------------------------------------------------------------


def cmd_fit(args, config: dict) -> int:
    if not args.out:
        raise CliError("fit requires --out", EXIT_PARSE)
    try:
        history, _names = read_event_log(args.events)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    try:
        attrs = read_attrs(args.attrs) if args.attrs else AttributeSet()
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"attrs file {args.attrs}: {exc}", EXIT_PARSE) from exc
    specs = _read_specs(args.specs)
    try:
        result = fit_mle(history, attrs, specs, FitConfig(mode=args.mode))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    _write_json(Path(args.out), result.to_dict())
    print(f"fit: {'converged' if result.converged else 'NOT converged'} "
          f"in {result.iterations} iterations, log_lik {result.log_lik:.6f}")
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


# -- infer ------------------------------------------------------------------


def cmd_infer(args, config: dict) -> int:
    try:
        history, _names = read_event_log(args.events)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    try:
        attrs = read_attrs(args.attrs) if args.attrs else AttributeSet()
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise CliError(f"attrs file {args.attrs}: {exc}", EXIT_PARSE) from exc
    sender, _, receiver = args.dyad.partition(":")
    if not sender or not receiver:
        raise CliError(f"dyad must be 'sender:receiver', got {args.dyad!r}", EXIT_PARSE)
    dyad = (sender, receiver)
    if args.theta:
        try:
            with open(args.theta) as f:
                theta = tuple(json.load(f)["theta"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CliError(f"theta file {args.theta}: {exc}", EXIT_PARSE) from exc
    else:
        theta = _theta(config)
    specs = _read_specs(args.specs) if args.specs else inference_specs()
    model = RateModel(specs, np.asarray(theta, dtype=float))
    grid = init_prior(default_grid(), [dyad], reported_trust=args.reported_trust)
    t_max = history.events[-1].time if history.events else args.window_len
    n_windows = max(1, int(np.ceil(t_max / args.window_len)))
    out = []
    for k in range(n_windows):
        t0, t1 = k * args.window_len, (k + 1) * args.window_len
        events = tuple(e for e in history.events if t0 < e.time <= t1)
        window = ObservationWindow(k, t0, t1, events)
        grid = update_posterior(
            grid, window, model, attrs, dyad,
            EventHistory((), history.actors, history.type_count),
            mode=args.mode,
        )
        s = summarize(grid, dyad)
        out.append(
            {
                "window": k,
                "mean": s.mean,
                "var": s.var,
                "value_at_risk": s.value_at_risk,
                "cvar": s.cvar,
                "level": s.level,
            }
        )
    doc = {"dyad": args.dyad, "theta": list(theta), "windows": out}
    if args.out:
        _write_json(Path(args.out), doc)
    print(json.dumps(doc["windows"][-1], sort_keys=True))
    return EXIT_OK


# -- simulate ---------------------------------------------------------------


def _condition(name: str, l_alpha: float | None) -> Condition:
    try:
        return Condition(name, L_alpha_fixed=l_alpha)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc


def cmd_simulate(args, config: dict) -> int:
    scenario = _load_scenario(args, config)
    condition = _condition(args.condition, args.l_alpha)
    params = _operator_params(config)
    log = run_episode(
        scenario, condition, args.seed,
        theta=_theta(config), operator_params=params,
        window_ticks=config.get("inference", {}).get("window_ticks", WINDOW_TICKS),
    )
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(log.to_jsonl())
    print(json.dumps(log.metrics, sort_keys=True))
    return EXIT_OK


# -- grounding (practice phase) ---------------------------------------------


def _reported_trust(latent: float) -> float:
    """A subjective 10-point trust report, mapped back to [0,1]."""
    return round(latent * LIKERT_POINTS) / LIKERT_POINTS


def grounding_specs() -> tuple:
    """Rate model for the grounding fit: intercept plus a trust gate over
    every event type.  In practice traffic the reply channels mirror the
    command channels one for one, so all types carry the trust signal;
    gating only the command types leaves trust-dependent traffic outside
    the gate and biases the gate coefficient upward."""
    from remsa.events import StatisticSpec

    return (
        StatisticSpec.intercept(),
        StatisticSpec.trust_gate(set(range(len(EVENT_TYPE_NAMES)))),
    )


def grounding_run(
    scenario_seed: int,
    seed: int,
    params: OperatorParams,
    practice_l_alphas: tuple[float, ...] = (0.9, 0.1),
    n_reps: int = 6,
) -> tuple[EventHistory, list[AttributeSet], dict]:
    """Practice-phase episodes at fixed autonomy levels, pooled into one
    grounding history.  The operator reports subjective trust per robot on
    a 10-point scale before and after each episode (latent trust stands in
    for the report); an episode's trust attribute for a robot's dyads is
    the midpoint of its two reports, approximating the trust level in
    force while that episode's traffic accrued."""
    from remsa.sim.comms import CommandMessage
    from remsa.sim.episode import _message_event

    from dataclasses import replace

    events = []
    attrs_seq = []
    reports = []
    actors = ("H",) + ROBOTS
    offset = 0.0
    n = 0
    # the operator is one person across the practice trials: latent trust
    # carries over from one episode to the next
    carry = params.initial_trust
    for _rep in range(n_reps):
        for l_alpha in practice_l_alphas:
            scenario = generate_scenario(scenario_seed + n)
            log = run_episode(
                scenario, Condition(BASELINE, L_alpha_fixed=l_alpha),
                seed + n,
                operator_params=replace(params, initial_trust=carry),
            )
            after = log.metrics["final_trust"]
            before = _reported_trust(carry)
            rep_after = {r: _reported_trust(after[r]) for r in ROBOTS}
            mid = {r: (before + rep_after[r]) / 2.0 for r in ROBOTS}
            reports.append(
                {"l_alpha": l_alpha, "reported_before": before,
                 "reported_after": rep_after}
            )
            dyad_attrs = {}
            for r in ROBOTS:
                dyad_attrs[("H", r)] = {"trust": mid[r]}
                dyad_attrs[(r, "H")] = {"trust": mid[r]}
            pair_trust = sum(mid.values()) / len(mid)
            for r1 in ROBOTS:
                for r2 in ROBOTS:
                    if r1 != r2:
                        dyad_attrs[(r1, r2)] = {"trust": pair_trust}
            attrs = AttributeSet(dyad_attrs=dyad_attrs)
            for m in log.messages():
                ev = _message_event(CommandMessage.from_dict(m), scenario.dt)
                events.append(
                    type(ev)(ev.sender, ev.receiver, ev.event_type, ev.weight,
                             ev.time + offset)
                )
                attrs_seq.append(attrs)
            offset += (log.metrics["ticks"] + 1) * scenario.dt
            carry = sum(after.values()) / len(after)
            n += 1
    history = EventHistory(tuple(events), actors, len(EVENT_TYPE_NAMES))
    return history, attrs_seq, {"reports": reports, "t_end": offset}


def cmd_ground(args, config: dict) -> int:
    if not args.out:
        raise CliError("ground requires --out", EXIT_PARSE)
    params = _operator_params(config)
    history, attrs_seq, meta = grounding_run(args.scenario_seed, args.seed, params)
    result = fit_mle(
        history, attrs_seq, grounding_specs(),
        FitConfig(mode="temporal", t_end=meta["t_end"], grad_tol=1e-5),
    )
    doc = result.to_dict()
    doc["reports"] = meta["reports"]
    _write_json(Path(args.out), doc)
    print(f"grounding fit: theta {doc['theta']} converged={doc['converged']}")
    if args.events_out:
        write_event_log(args.events_out, history, EVENT_TYPE_NAMES)
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


# -- compare ----------------------------------------------------------------


def _sign_test(pos: int, neg: int) -> float:
    if pos + neg == 0:
        return 1.0
    return float(stats.binomtest(pos, pos + neg, 0.5, alternative="greater").pvalue)


def run_compare(
    n_trials: int,
    seed_start: int = 0,
    theta: tuple[float, ...] = DEFAULT_THETA,
    operator_params: OperatorParams | None = None,
    conditions: tuple[Condition, ...] = (
        Condition(BASELINE),
        Condition(TRUST_PRESERVED),
    ),
    out_dir: Path | None = None,
) -> dict:
    """Paired-seed A/B experiment.  The same scenario seed runs once under
    every condition; aggregates are per condition and order independent."""
    params = operator_params or OperatorParams()
    rows = []
    logs: dict[tuple[str, int], EpisodeLog] = {}
    seed = seed_start
    trial = 0
    while trial < n_trials:
        scenario = generate_scenario(seed)
        if not feasible(scenario):
            seed += 1
            continue
        for cond in conditions:
            log = run_episode(
                scenario, cond, seed, theta=theta, operator_params=params
            )
            logs[(cond.name, seed)] = log
            m = log.metrics
            rows.append(
                {
                    "trial": trial,
                    "seed": seed,
                    "condition": cond.name,
                    "success": int(m["success"]),
                    "task_duration": m["task_duration"],
                    "n_commands": m["n_commands"],
                }
            )
            if out_dir is not None:
                path = out_dir / "logs" / f"{cond.name}_{seed}.jsonl"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(log.to_jsonl())
        trial += 1
        seed += 1

    by_cond = {}
    for cond in conditions:
        cond_rows = [r for r in rows if r["condition"] == cond.name]
        succ = np.array([r["success"] for r in cond_rows])
        dur = np.array(
            [r["task_duration"] for r in cond_rows if r["success"]]
        )
        cmds = np.array([r["n_commands"] for r in cond_rows])
        by_cond[cond.name] = {
            "n_trials": len(cond_rows),
            "success_rate": float(succ.mean()),
            # duration aggregated over successful trials only
            "mean_task_duration": float(dur.mean()) if len(dur) else None,
            "std_task_duration": float(dur.std(ddof=1)) if len(dur) > 1 else None,
            "mean_n_commands": float(cmds.mean()),
            "std_n_commands": float(cmds.std(ddof=1)) if len(cmds) > 1 else None,
        }

    p_values = {}
    if {BASELINE, TRUST_PRESERVED} <= {c.name for c in conditions}:
        base = {r["seed"]: r for r in rows if r["condition"] == BASELINE}
        tp = {r["seed"]: r for r in rows if r["condition"] == TRUST_PRESERVED}
        seeds = sorted(base)
        su_pos = sum(tp[s]["success"] > base[s]["success"] for s in seeds)
        su_neg = sum(tp[s]["success"] < base[s]["success"] for s in seeds)
        cm_pos = sum(tp[s]["n_commands"] < base[s]["n_commands"] for s in seeds)
        cm_neg = sum(tp[s]["n_commands"] > base[s]["n_commands"] for s in seeds)
        p_values = {
            "success_sign_test": _sign_test(su_pos, su_neg),
            "n_commands_sign_test": _sign_test(cm_pos, cm_neg),
            "success_discordant": [su_pos, su_neg],
            "n_commands_discordant": [cm_pos, cm_neg],
        }
        diffs = [
            tp[s]["n_commands"] - base[s]["n_commands"]
            for s in seeds
            if tp[s]["n_commands"] != base[s]["n_commands"]
        ]
        if diffs:
            p_values["n_commands_wilcoxon"] = float(
                stats.wilcoxon(diffs, alternative="less").pvalue
            )

    summary = {"conditions": by_cond, "p_values": p_values, "rows": rows}
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "metrics.csv", "w", newline="") as f:
            writer = csv.DictWriter(
                f,
                fieldnames=[
                    "trial", "seed", "condition", "success",
                    "task_duration", "n_commands",
                ],
            )
            writer.writeheader()
            writer.writerows(rows)
        _write_json(
            out_dir / "summary.json",
            {"conditions": by_cond, "p_values": p_values},
        )
    summary["logs"] = logs
    return summary


def cmd_compare(args, config: dict) -> int:
    exp = config.get("experiment", {})
    n_trials = args.trials or exp.get("n_trials", 200)
    theta = _theta(config)
    if args.theta:
        try:
            with open(args.theta) as f:
                theta = tuple(json.load(f)["theta"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CliError(f"theta file {args.theta}: {exc}", EXIT_PARSE) from exc
    out_dir = Path(args.out) if args.out else None
    summary = run_compare(
        n_trials,
        seed_start=args.seed,
        theta=theta,
        operator_params=_operator_params(config),
        out_dir=out_dir,
    )
    for name, agg in summary["conditions"].items():
        print(
            f"{name}: success_rate {agg['success_rate']:.3f}, "
            f"mean n_commands {agg['mean_n_commands']:.2f}"
        )
    for key, val in summary["p_values"].items():
        print(f"{key}: {val}")
    return EXIT_OK


# -- serve ------------------------------------------------------------------


def cmd_serve(args, config: dict) -> int:
    from remsa.server import serve

    scenario = _load_scenario(args, config)
    condition = _condition(args.condition, args.l_alpha)
    try:
        serve(
            scenario, condition, seed=args.seed, port=args.port,
            theta=_theta(config), operator_params=_operator_params(config),
            log_path=args.out,
        )
    except OSError as exc:
        raise CliError(f"cannot bind port {args.port}: {exc}", EXIT_PROTOCOL) from exc
    return EXIT_OK


# -- replay -----------------------------------------------------------------


def cmd_replay(args, config: dict) -> int:
    try:
        log = EpisodeLog.from_jsonl(Path(args.log).read_text())
    except OSError as exc:
        raise CliError(str(exc), EXIT_PARSE) from exc
    except ValueError as exc:
        raise CliError(f"{args.log}: {exc}", EXIT_PARSE) from exc
    try:
        telemetry = replay_telemetry(log)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_PROTOCOL) from exc
    logged = log.telemetry()
    if telemetry != logged:
        raise CliError(
            "replayed telemetry diverges from the logged telemetry", EXIT_PROTOCOL
        )
    if args.out:
        _write_json(Path(args.out), {"telemetry": telemetry})
    print(f"replay: {len(telemetry)} telemetry records, identical to log")
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="remsa",
        description="Relational-event trust inference and trust-preserved "
        "shared autonomy harness",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None)
    sub = parser.add_subparsers(dest="command", required=True)
    # --seed/--out are also accepted after the subcommand; those placements
    # override the global value (SUPPRESS keeps the global one otherwise)
    S = argparse.SUPPRESS

    p = sub.add_parser("fit", help="offline MLE over a grounding history")
    p.add_argument("--events", required=True)
    p.add_argument("--attrs")
    p.add_argument("--specs", required=True)
    p.add_argument("--mode", choices=["ordinal", "temporal"], default="ordinal")
    p.add_argument("--out", default=S)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("infer", help="windowed trust posterior over an event log")
    p.add_argument("--events", required=True)
    p.add_argument("--attrs")
    p.add_argument("--specs")
    p.add_argument("--theta", help="theta JSON from fit")
    p.add_argument("--dyad", default="H:R1")
    p.add_argument("--window-len", type=float, default=float(WINDOW_TICKS))
    p.add_argument("--mode", choices=["ordinal", "temporal"], default="temporal")
    p.add_argument("--reported-trust", type=float, default=0.5)
    p.add_argument("--out", default=S)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="run one closed-loop episode")
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--scenario-seed", type=int, default=0)
    p.add_argument(
        "--condition", default=TRUST_PRESERVED,
        choices=[BASELINE, TRUST_PRESERVED],
    )
    p.add_argument("--l-alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S, help="episode log path (.jsonl)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "ground", help="practice-phase episodes and grounding fit"
    )
    p.add_argument("--scenario-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--events-out", help="also write the pooled event log")
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("compare", help="paired-seed A/B experiment")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--theta", help="theta JSON from fit/ground")
    p.add_argument("--out", default=S, help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="live operator session over WebSocket")
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--scenario-seed", type=int, default=0)
    p.add_argument(
        "--condition", default=TRUST_PRESERVED,
        choices=[BASELINE, TRUST_PRESERVED],
    )
    p.add_argument("--l-alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--port", type=int, default=8642)
    p.add_argument("--out", default=S, help="episode log path (.jsonl)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="re-derive telemetry from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", default=S)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
