"""Relational event histories, sufficient statistics, and event rates.

An interaction trace is a time-ordered sequence of directed, typed events
between actors.  The rate at which a candidate event (sender i, receiver j,
type k) occurs is log-linear in a vector of sufficient statistics computed
from the history so far and from actor/dyad/environment attributes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

ActorId = str
Dyad = tuple[ActorId, ActorId]

# Guard applied to the linear predictor before exponentiation so extreme
# coefficient values still yield finite rates and likelihoods.
LINPRED_CLAMP = 500.0

STAT_KINDS = ("intercept", "inertia", "reciprocity", "sender_attr", "trust_gate")


def _decay(delta: float, half_life: float) -> float:
    if half_life == 0.0:
        return 1.0
    return 2.0 ** (-delta / half_life)


@dataclass(frozen=True)
class RelationalEvent:
    """One directed interaction: (sender, receiver, type, weight, time)."""

    sender: ActorId
    receiver: ActorId
    event_type: int
    weight: float = 1.0
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.sender == self.receiver:
            raise ValueError(f"self-dyad event {self.sender!r} -> {self.receiver!r}")
        if not math.isfinite(self.time) or self.time < 0.0:
            raise ValueError(f"event time must be finite and >= 0, got {self.time}")
        if not math.isfinite(self.weight) or self.weight < 0.0:
            raise ValueError(f"event weight must be finite and >= 0, got {self.weight}")
        if self.event_type < 0:
            raise ValueError(f"event_type must be >= 0, got {self.event_type}")


@dataclass(frozen=True)
class EventHistory:
    """Time-ordered event sequence over a fixed actor set and K event classes."""

    events: tuple[RelationalEvent, ...]
    actors: tuple[ActorId, ...]
    type_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "actors", tuple(self.actors))
        if len(set(self.actors)) != len(self.actors):
            raise ValueError("duplicate actor ids")
        if self.type_count < 1:
            raise ValueError("type_count must be >= 1")
        actor_set = set(self.actors)
        prev_t = -math.inf
        for ev in self.events:
            if ev.time < prev_t:
                raise ValueError("event times must be non-decreasing")
            prev_t = ev.time
            if ev.sender not in actor_set or ev.receiver not in actor_set:
                raise ValueError(f"event references unknown actor: {ev}")
            if ev.event_type >= self.type_count:
                raise ValueError(f"event_type {ev.event_type} >= K={self.type_count}")

    @property
    def dyads(self) -> tuple[Dyad, ...]:
        """All ordered actor pairs excluding the diagonal, in actor order."""
        return tuple(
            (i, j) for i in self.actors for j in self.actors if i != j
        )

    def actor_index(self) -> dict[ActorId, int]:
        return {a: idx for idx, a in enumerate(self.actors)}

    def __len__(self) -> int:
        return len(self.events)

    def before(self, t: float) -> "EventHistory":
        """Sub-history of events strictly before t."""
        return replace(self, events=tuple(e for e in self.events if e.time < t))

    def extended(self, events: Iterable[RelationalEvent]) -> "EventHistory":
        return replace(self, events=self.events + tuple(events))


@dataclass(frozen=True)
class AttributeSet:
    """Actor, dyad, and environment covariates in force over a time span.

    Missing entries evaluate to 0 so partially specified scenarios still run.
    """

    actor_attrs: Mapping[ActorId, Mapping[str, float]] = field(default_factory=dict)
    dyad_attrs: Mapping[Dyad, Mapping[str, float]] = field(default_factory=dict)
    env_attrs: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for dyad, attrs in self.dyad_attrs.items():
            beta = attrs.get("trust")
            if beta is not None and not 0.0 <= beta <= 1.0:
                raise ValueError(f"trust for dyad {dyad} outside [0,1]: {beta}")

    def actor(self, actor: ActorId, name: str) -> float:
        return float(self.actor_attrs.get(actor, {}).get(name, 0.0))

    def dyad(self, dyad: Dyad, name: str) -> float:
        return float(self.dyad_attrs.get(dyad, {}).get(name, 0.0))

    def trust(self, dyad: Dyad) -> float:
        return self.dyad(dyad, "trust")

    def with_trust(self, dyad: Dyad, value: float) -> "AttributeSet":
        """Copy with the trust entry of one dyad replaced."""
        dyads = {d: dict(v) for d, v in self.dyad_attrs.items()}
        dyads.setdefault(dyad, {})["trust"] = float(value)
        return AttributeSet(self.actor_attrs, dyads, self.env_attrs)


@dataclass(frozen=True)
class StatisticSpec:
    """One sufficient statistic entering the log-linear rate."""

    kind: str
    attr_name: str | None = None
    types: frozenset[int] | None = None
    half_life: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in STAT_KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}")
        if self.half_life < 0.0:
            raise ValueError("half_life must be >= 0")
        if self.kind == "sender_attr" and not self.attr_name:
            raise ValueError("sender_attr requires attr_name")
        if self.kind == "trust_gate" and (self.types is None or not self.types):
            raise ValueError("trust_gate requires a nonempty type subset")
        if self.types is not None:
            object.__setattr__(self, "types", frozenset(self.types))
            if not self.types:
                raise ValueError("type subset must be nonempty")

    @staticmethod
    def intercept() -> "StatisticSpec":
        return StatisticSpec("intercept")

    @staticmethod
    def inertia(half_life: float = 0.0) -> "StatisticSpec":
        return StatisticSpec("inertia", half_life=half_life)

    @staticmethod
    def reciprocity(
        types: Iterable[int] | None = None, half_life: float = 0.0
    ) -> "StatisticSpec":
        t = frozenset(types) if types is not None else None
        return StatisticSpec("reciprocity", types=t, half_life=half_life)

    @staticmethod
    def sender_attr(name: str) -> "StatisticSpec":
        return StatisticSpec("sender_attr", attr_name=name)

    @staticmethod
    def trust_gate(types: Iterable[int]) -> "StatisticSpec":
        return StatisticSpec("trust_gate", types=frozenset(types))

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.attr_name is not None:
            d["attr_name"] = self.attr_name
        if self.types is not None:
            d["types"] = sorted(self.types)
        if self.half_life:
            d["half_life"] = self.half_life
        return d

    @staticmethod
    def from_dict(d: Mapping) -> "StatisticSpec":
        types = frozenset(d["types"]) if "types" in d else None
        return StatisticSpec(
            d["kind"],
            attr_name=d.get("attr_name"),
            types=types,
            half_life=float(d.get("half_life", 0.0)),
        )


def validate_specs(specs: Sequence[StatisticSpec], type_count: int) -> None:
    n_intercepts = sum(1 for s in specs if s.kind == "intercept")
    if n_intercepts != 1:
        raise ValueError(f"model must contain exactly one intercept, found {n_intercepts}")
    for s in specs:
        if s.types is not None and any(k >= type_count or k < 0 for k in s.types):
            raise ValueError(f"type subset {sorted(s.types)} outside 0..{type_count - 1}")


@dataclass(frozen=True)
class RateModel:
    """Log-linear event rate: lambda = baseline * exp(theta . S)."""

    specs: tuple[StatisticSpec, ...]
    theta: np.ndarray
    baseline: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "specs", tuple(self.specs))
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        if theta.ndim != 1 or len(theta) != len(self.specs):
            raise ValueError("theta length must match the number of statistic specs")
        if not self.baseline > 0.0:
            raise ValueError("baseline must be positive")

    @property
    def n_params(self) -> int:
        return len(self.specs)

    def with_theta(self, theta: np.ndarray) -> "RateModel":
        return RateModel(self.specs, np.asarray(theta, dtype=float), self.baseline)


def past_weight(
    history: EventHistory,
    i: ActorId,
    j: ActorId,
    types: Iterable[int] | None,
    t: float,
    half_life: float = 0.0,
) -> float:
    """Decayed total weight of events i -> j (type in `types`) strictly before t.

    With half_life = 0 the result is the plain weight sum.  Events at exactly
    time t are excluded so an event never predicts itself.
    """
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if half_life < 0.0:
        raise ValueError("half_life must be >= 0")
    type_set = None if types is None else set(types)
    total = 0.0
    for ev in history.events:
        if ev.time >= t:
            break
        if ev.sender != i or ev.receiver != j:
            continue
        if type_set is not None and ev.event_type not in type_set:
            continue
        total += ev.weight * _decay(t - ev.time, half_life)
    return total


def _statistic_value(
    spec: StatisticSpec,
    history: EventHistory,
    attrs: AttributeSet,
    i: ActorId,
    j: ActorId,
    k: int,
    t: float,
) -> float:
    if spec.kind == "intercept":
        return 1.0
    if spec.kind == "inertia":
        return past_weight(history, i, j, {k}, t, spec.half_life)
    if spec.kind == "reciprocity":
        return past_weight(history, j, i, spec.types, t, spec.half_life)
    if spec.kind == "sender_attr":
        return attrs.actor(i, spec.attr_name)
    if spec.kind == "trust_gate":
        if k not in spec.types:
            return 0.0
        return attrs.trust((i, j))
    raise AssertionError(spec.kind)


def compute_statistics(
    model: RateModel,
    history: EventHistory,
    attrs: AttributeSet,
    i: ActorId,
    j: ActorId,
    k: int,
    t: float,
) -> np.ndarray:
    """Statistic vector S(i, j, k, t) of length P for one candidate event."""
    if i == j:
        raise ValueError("candidate must be an off-diagonal dyad")
    if not 0 <= k < history.type_count:
        raise ValueError(f"event type {k} outside 0..{history.type_count - 1}")
    return np.array(
        [_statistic_value(s, history, attrs, i, j, k, t) for s in model.specs]
    )


def event_rate(
    model: RateModel,
    history: EventHistory,
    attrs: AttributeSet,
    i: ActorId,
    j: ActorId,
    k: int,
    t: float,
) -> float:
    """Rate lambda_ijk(t); always finite and positive."""
    stats = compute_statistics(model, history, attrs, i, j, k, t)
    lin = float(np.clip(model.theta @ stats, -LINPRED_CLAMP, LINPRED_CLAMP))
    return model.baseline * math.exp(lin)


class StatisticState:
    """Incremental sufficient-statistic accumulators over all candidates.

    Holds, for every (dyad, type) candidate, the current value of each
    history-dependent statistic, advanced event by event.  Decay is applied
    multiplicatively when time moves forward, which reproduces the
    half-life kernel exactly.
    """

    def __init__(self, specs: Sequence[StatisticSpec], history: EventHistory):
        validate_specs(specs, history.type_count)
        self.specs = tuple(specs)
        self.history = history
        self.actor_idx = history.actor_index()
        self.dyads = history.dyads
        self.dyad_idx = {d: n for n, d in enumerate(self.dyads)}
        self.n_dyads = len(self.dyads)
        self.K = history.type_count
        self.t = 0.0
        # One (n_dyads, K) weight table per history-dependent spec.
        self._tables: list[np.ndarray | None] = []
        for s in self.specs:
            if s.kind in ("inertia", "reciprocity"):
                self._tables.append(np.zeros((self.n_dyads, self.K)))
            else:
                self._tables.append(None)

    def advance(self, t: float) -> None:
        if t < self.t:
            raise ValueError("time must not move backwards")
        dt = t - self.t
        if dt > 0.0:
            for s, tab in zip(self.specs, self._tables):
                if tab is not None and s.half_life > 0.0:
                    tab *= _decay(dt, s.half_life)
        self.t = t

    def add_event(self, ev: RelationalEvent) -> None:
        """Fold one event (at the current state time) into the accumulators."""
        d_fwd = self.dyad_idx.get((ev.sender, ev.receiver))
        d_rev = self.dyad_idx.get((ev.receiver, ev.sender))
        for s, tab in zip(self.specs, self._tables):
            if tab is None:
                continue
            if s.kind == "inertia" and d_fwd is not None:
                tab[d_fwd, ev.event_type] += ev.weight
            elif s.kind == "reciprocity" and d_rev is not None:
                tab[d_rev, ev.event_type] += ev.weight

    def matrix(self, attrs: AttributeSet) -> np.ndarray:
        """Statistic values for every candidate: shape (n_dyads, K, P)."""
        out = np.zeros((self.n_dyads, self.K, len(self.specs)))
        for p, (s, tab) in enumerate(zip(self.specs, self._tables)):
            if s.kind == "intercept":
                out[:, :, p] = 1.0
            elif s.kind == "inertia":
                out[:, :, p] = tab
            elif s.kind == "reciprocity":
                cols = sorted(s.types) if s.types is not None else range(self.K)
                out[:, :, p] = tab[:, list(cols)].sum(axis=1)[:, None]
            elif s.kind == "sender_attr":
                vals = np.array([attrs.actor(i, s.attr_name) for i, _ in self.dyads])
                out[:, :, p] = vals[:, None]
            elif s.kind == "trust_gate":
                trust = np.array([attrs.trust(d) for d in self.dyads])
                gate = np.array([1.0 if k in s.types else 0.0 for k in range(self.K)])
                out[:, :, p] = trust[:, None] * gate[None, :]
        return out


def _attrs_seq(
    attrs: AttributeSet | Sequence[AttributeSet], m: int
) -> list[AttributeSet]:
    if isinstance(attrs, AttributeSet):
        return [attrs] * m
    attrs = list(attrs)
    if len(attrs) != m:
        raise ValueError(f"need one attribute set per event ({m}), got {len(attrs)}")
    return attrs


def design_matrix(
    specs: Sequence[StatisticSpec],
    history: EventHistory,
    attrs: AttributeSet | Sequence[AttributeSet],
    trailing_time: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-event candidate statistics, computed with strictly-before semantics.

    Returns (S, obs_dyad, obs_type) where S has shape (m, n_dyads, K, P) and
    S[e] holds the statistics in force when event e occurred (events tied at
    the same timestamp do not see each other).  If trailing_time is given an
    extra row is appended with all events folded in and time advanced to it,
    for survival terms past the last event.
    """
    events = history.events
    m = len(events)
    attrs_list = _attrs_seq(attrs, m)
    state = StatisticState(specs, history)
    n_rows = m + (1 if trailing_time is not None else 0)
    S = np.empty((n_rows, state.n_dyads, state.K, len(state.specs)))
    obs_dyad = np.empty(m, dtype=int)
    obs_type = np.empty(m, dtype=int)
    folded = 0
    for e_idx, ev in enumerate(events):
        while folded < e_idx and events[folded].time < ev.time:
            state.advance(events[folded].time)
            state.add_event(events[folded])
            folded += 1
        state.advance(ev.time)
        S[e_idx] = state.matrix(attrs_list[e_idx])
        obs_dyad[e_idx] = state.dyad_idx[(ev.sender, ev.receiver)]
        obs_type[e_idx] = ev.event_type
    if trailing_time is not None:
        while folded < m:
            state.advance(events[folded].time)
            state.add_event(events[folded])
            folded += 1
        if m and trailing_time < events[-1].time:
            raise ValueError("trailing_time must be >= the last event time")
        state.advance(trailing_time)
        S[m] = state.matrix(attrs_list[-1] if attrs_list else _attrs_seq(attrs, 1)[0])
    return S, obs_dyad, obs_type


def _linpred(S: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.clip(S @ theta, -LINPRED_CLAMP, LINPRED_CLAMP)


def temporal_log_likelihood(
    model: RateModel,
    history: EventHistory,
    attrs: AttributeSet | Sequence[AttributeSet],
    t0: float = 0.0,
    t_end: float | None = None,
) -> float:
    """Log of the full temporal likelihood: event rates plus survival of gaps.

    Each event contributes log lambda for the realized candidate minus
    dt * (total rate over all candidates).  If t_end is given a final
    survival term over (t_last, t_end] is added, which also covers the
    empty-history case over (t0, t_end].
    """
    if len(history) == 0 and t_end is None:
        raise ValueError("history is empty; supply t_end for a pure survival term")
    if len(history) and history.events[0].time < t0:
        raise ValueError("first event precedes t0")
    S, obs_dyad, obs_type = design_matrix(
        model.specs, history, attrs, trailing_time=t_end
    )
    Z = _linpred(S, model.theta)
    m = len(history)
    rates = model.baseline * np.exp(Z)
    total = rates.reshape(Z.shape[0], -1).sum(axis=1)
    times = np.array([e.time for e in history.events])
    dts = np.diff(np.concatenate(([t0], times)))
    ll = 0.0
    if m:
        obs = Z[np.arange(m), obs_dyad, obs_type]
        ll += float(np.sum(math.log(model.baseline) + obs - dts * total[:m]))
    if t_end is not None:
        t_last = times[-1] if m else t0
        if t_end < t_last:
            raise ValueError("t_end precedes the last event")
        ll -= (t_end - t_last) * float(total[-1])
    return ll


def ordinal_log_likelihood(
    model: RateModel,
    history: EventHistory,
    attrs: AttributeSet | Sequence[AttributeSet],
) -> float:
    """Log of the ordinal likelihood: per-event multinomial over candidates.

    Invariant to baseline rescaling; timestamps are used only for ordering.
    """
    m = len(history)
    if m == 0:
        return 0.0
    S, obs_dyad, obs_type = design_matrix(model.specs, history, attrs)
    Z = _linpred(S, model.theta)
    flat = Z.reshape(m, -1)
    zmax = flat.max(axis=1)
    lse = zmax + np.log(np.exp(flat - zmax[:, None]).sum(axis=1))
    obs = Z[np.arange(m), obs_dyad, obs_type]
    return float(np.sum(obs - lse))


@dataclass(frozen=True)
class NextEventDistribution:
    probs: dict[tuple[ActorId, ActorId, int], float]
    total_rate: float


def next_event_distribution(
    model: RateModel,
    history: EventHistory,
    attrs: AttributeSet,
    t: float,
) -> NextEventDistribution:
    """Multinomial over the next candidate event, plus the total rate.

    Probabilities are proportional to the candidate rates at time t; the
    total rate pairs with an exponential waiting-time draw for sampling.
    """
    state = StatisticState(model.specs, history)
    for ev in history.events:
        if ev.time >= t:
            break
        state.advance(ev.time)
        state.add_event(ev)
    state.advance(t)
    S = state.matrix(attrs)
    Z = _linpred(S, model.theta)
    rates = model.baseline * np.exp(Z)
    total = float(rates.sum())
    probs = rates / total
    out = {}
    for d_idx, (i, j) in enumerate(state.dyads):
        for k in range(state.K):
            out[(i, j, k)] = float(probs[d_idx, k])
    return NextEventDistribution(out, total)


def simulate_history(
    model: RateModel,
    actors: Sequence[ActorId],
    type_count: int,
    attrs: AttributeSet,
    n_events: int,
    rng: np.random.Generator,
    t0: float = 0.0,
) -> EventHistory:
    """Draw an event sequence from the model (exponential gaps, rate-weighted
    candidate choice).  Rates are held at their gap-start values, which is
    exact when no decayed statistics are present and a close approximation
    when half-lives are long relative to typical gaps."""
    history = EventHistory((), tuple(actors), type_count)
    state = StatisticState(model.specs, history)
    flat_candidates = [
        (i, j, k) for (i, j) in state.dyads for k in range(type_count)
    ]
    t = t0
    events: list[RelationalEvent] = []
    for _ in range(n_events):
        Z = _linpred(state.matrix(attrs), model.theta)
        rates = model.baseline * np.exp(Z)
        flat = rates.ravel()
        total = flat.sum()
        t += rng.exponential(1.0 / total)
        choice = rng.choice(len(flat), p=flat / total)
        i, j, k = flat_candidates[choice]
        ev = RelationalEvent(i, j, k, 1.0, t)
        events.append(ev)
        state.advance(t)
        state.add_event(ev)
    return EventHistory(tuple(events), tuple(actors), type_count)


def simulate_choice_history(
    model: RateModel,
    actors: Sequence[ActorId],
    type_count: int,
    attrs: AttributeSet,
    n_events: int,
    rng: np.random.Generator,
    gap_rate: float | None = None,
    t0: float = 0.0,
) -> EventHistory:
    """Draw events at iid exponential arrival times, choosing each candidate
    from the next-event distribution evaluated at its own arrival time.

    The candidate choices follow the ordinal (multinomial) likelihood
    exactly, so ordinal fits on the output are fits of a well-specified
    model even when decayed statistics are present."""
    history = EventHistory((), tuple(actors), type_count)
    state = StatisticState(model.specs, history)
    flat_candidates = [
        (i, j, k) for (i, j) in state.dyads for k in range(type_count)
    ]
    if gap_rate is None:
        gap_rate = model.baseline * len(flat_candidates)
    t = t0
    events: list[RelationalEvent] = []
    for _ in range(n_events):
        t += rng.exponential(1.0 / gap_rate)
        state.advance(t)
        Z = _linpred(state.matrix(attrs), model.theta)
        rates = np.exp(Z).ravel()
        choice = rng.choice(len(rates), p=rates / rates.sum())
        i, j, k = flat_candidates[choice]
        ev = RelationalEvent(i, j, k, 1.0, t)
        events.append(ev)
        state.add_event(ev)
    return EventHistory(tuple(events), tuple(actors), type_count)


# ---------------------------------------------------------------------------
# Event log and attribute snapshot I/O (line-delimited JSON)
# ---------------------------------------------------------------------------


def write_event_log(path, history: EventHistory, type_names: Sequence[str]) -> None:
    if len(type_names) != history.type_count:
        raise ValueError("need one type name per event class")
    with open(path, "w") as f:
        header = {"header": {"types": list(type_names), "actors": list(history.actors)}}
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for ev in history.events:
            rec = {
                "t": ev.time,
                "i": ev.sender,
                "j": ev.receiver,
                "k": type_names[ev.event_type],
                "w": ev.weight,
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_event_log(path) -> tuple[EventHistory, list[str]]:
    with open(path) as f:
        lines = f.readlines()
    if not lines:
        raise ValueError(f"{path}: empty event log (line 1: missing header)")
    try:
        header = json.loads(lines[0])["header"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ValueError(f"{path}: line 1: bad header record ({exc})") from exc
    type_names = list(header["types"])
    type_idx = {name: n for n, name in enumerate(type_names)}
    actors = tuple(header["actors"])
    events = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            events.append(
                RelationalEvent(
                    rec["i"], rec["j"], type_idx[rec["k"]],
                    float(rec.get("w", 1.0)), float(rec["t"]),
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ValueError(f"{path}: line {lineno}: bad event record ({exc})") from exc
    return EventHistory(tuple(events), actors, len(type_names)), type_names


def write_attrs(path, attrs: AttributeSet) -> None:
    doc = {
        "actors": {a: dict(v) for a, v in attrs.actor_attrs.items()},
        "dyads": {f"{i}->{j}": dict(v) for (i, j), v in attrs.dyad_attrs.items()},
        "env": dict(attrs.env_attrs),
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)


def read_attrs(path) -> AttributeSet:
    with open(path) as f:
        doc = json.load(f)
    dyads = {}
    for key, val in doc.get("dyads", {}).items():
        i, _, j = key.partition("->")
        dyads[(i, j)] = dict(val)
    return AttributeSet(doc.get("actors", {}), dyads, doc.get("env", {}))
