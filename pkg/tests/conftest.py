"""Shared helpers: random history generation and a naive full-rescan oracle.

The oracle re-derives every candidate rate from scratch via past_weight for
each event, with no incremental caching, so it stays independent of the
swept implementation it checks.
"""

import math

import numpy as np
import pytest

from remsa.events import (
    AttributeSet,
    EventHistory,
    RelationalEvent,
    StatisticSpec,
    event_rate,
)


def random_history(rng, n_actors=5, K=5, m=200, t_scale=1.0):
    actors = tuple(f"a{i}" for i in range(n_actors))
    t = 0.0
    events = []
    for _ in range(m):
        t += rng.exponential(t_scale)
        i, j = rng.choice(n_actors, size=2, replace=False)
        events.append(
            RelationalEvent(
                actors[i], actors[j], int(rng.integers(K)),
                float(rng.uniform(0.5, 2.0)), t,
            )
        )
    return EventHistory(tuple(events), actors, K)


def random_attrs(rng, history):
    actor_attrs = {
        a: {"command_propensity": float(rng.uniform(0, 1))} for a in history.actors
    }
    dyad_attrs = {d: {"trust": float(rng.uniform(0, 1))} for d in history.dyads}
    return AttributeSet(actor_attrs, dyad_attrs, {})


def standard_specs(K):
    return (
        StatisticSpec.intercept(),
        StatisticSpec.inertia(),
        StatisticSpec.reciprocity(),
        StatisticSpec.trust_gate(range(K)),
    )


def oracle_temporal_loglik(model, history, attrs, t0=0.0):
    """Naive Eq.-style temporal log-likelihood: full history rescan per
    (event, candidate) with no caching."""
    ll = 0.0
    prev_t = t0
    for ev in history.events:
        sub = history.before(ev.time)
        lam_obs = event_rate(model, sub, attrs, ev.sender, ev.receiver, ev.event_type, ev.time)
        total = 0.0
        for (i, j) in history.dyads:
            for k in range(history.type_count):
                total += event_rate(model, sub, attrs, i, j, k, ev.time)
        ll += math.log(lam_obs) - (ev.time - prev_t) * total
        prev_t = ev.time
    return ll


def oracle_ordinal_loglik(model, history, attrs):
    ll = 0.0
    for ev in history.events:
        sub = history.before(ev.time)
        lam_obs = event_rate(model, sub, attrs, ev.sender, ev.receiver, ev.event_type, ev.time)
        total = 0.0
        for (i, j) in history.dyads:
            for k in range(history.type_count):
                total += event_rate(model, sub, attrs, i, j, k, ev.time)
        ll += math.log(lam_obs / total)
    return ll


def _oracle_stat_tensor(specs, history, attrs, t):
    """Candidate statistics at time t, recomputed from scratch with numpy
    masks over the raw event arrays (full rescan, no incremental state)."""
    actors = history.actors
    idx = {a: n for n, a in enumerate(actors)}
    dyads = history.dyads
    dyad_idx = {d: n for n, d in enumerate(dyads)}
    K = history.type_count
    senders = np.array([idx[e.sender] for e in history.events], dtype=int)
    receivers = np.array([idx[e.receiver] for e in history.events], dtype=int)
    types = np.array([e.event_type for e in history.events], dtype=int)
    weights = np.array([e.weight for e in history.events])
    times = np.array([e.time for e in history.events])
    past = times < t
    S = np.zeros((len(dyads), K, len(specs)))
    for p, spec in enumerate(specs):
        if spec.kind == "intercept":
            S[:, :, p] = 1.0
        elif spec.kind == "inertia":
            decay = weights * np.where(
                past, 2.0 ** (-(t - times) / spec.half_life) if spec.half_life else 1.0, 0.0
            )
            tab = np.zeros((len(dyads), K))
            for e_n in np.nonzero(past)[0]:
                d = dyad_idx.get((actors[senders[e_n]], actors[receivers[e_n]]))
                if d is not None:
                    tab[d, types[e_n]] += decay[e_n]
            S[:, :, p] = tab
        elif spec.kind == "reciprocity":
            tset = spec.types if spec.types is not None else set(range(K))
            decay = weights * np.where(
                past, 2.0 ** (-(t - times) / spec.half_life) if spec.half_life else 1.0, 0.0
            )
            vals = np.zeros(len(dyads))
            for e_n in np.nonzero(past)[0]:
                if types[e_n] not in tset:
                    continue
                d = dyad_idx.get((actors[receivers[e_n]], actors[senders[e_n]]))
                if d is not None:
                    vals[d] += decay[e_n]
            S[:, :, p] = vals[:, None]
        elif spec.kind == "sender_attr":
            vals = np.array([attrs.actor(i, spec.attr_name) for i, _ in dyads])
            S[:, :, p] = vals[:, None]
        elif spec.kind == "trust_gate":
            trust = np.array([attrs.trust(d) for d in dyads])
            gate = np.array([1.0 if k in spec.types else 0.0 for k in range(K)])
            S[:, :, p] = trust[:, None] * gate[None, :]
    return S


def oracle_logliks_fast(model, history, attrs, t0=0.0):
    """Temporal and ordinal log-likelihoods by per-event full rescans
    (numpy-masked), independent of the incremental sweep under test."""
    dyad_idx = {d: n for n, d in enumerate(history.dyads)}
    temporal = 0.0
    ordinal = 0.0
    prev_t = t0
    for ev in history.events:
        S = _oracle_stat_tensor(model.specs, history, attrs, ev.time)
        Z = np.clip(S @ model.theta, -500.0, 500.0)
        rates = model.baseline * np.exp(Z)
        total = rates.sum()
        lam_obs = rates[dyad_idx[(ev.sender, ev.receiver)], ev.event_type]
        temporal += math.log(lam_obs) - (ev.time - prev_t) * total
        ordinal += math.log(lam_obs / total)
        prev_t = ev.time
    return temporal, ordinal


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per top-level acceptance criterion."""
    rows = []
    for outcome, label in (("passed", "PASS"), ("failed", "FAIL")):
        for rep in terminalreporter.getreports(outcome):
            if rep.when != "call":
                continue
            for name, value in rep.user_properties:
                if name == "criterion":
                    rows.append((value, label))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for crit, label in sorted(rows):
            terminalreporter.write_line(f"{label}  {crit}")
