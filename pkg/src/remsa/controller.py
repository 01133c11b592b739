"""Trust-aware autonomy coordination, phase detection, and repair selection.

Autonomy level maps one-to-one onto obedience: a robot at autonomy L_alpha
obeys a conflicting human instruction with probability alpha = 1 - L_alpha.
Team dynamics alternate between long evolutionary periods (stable trust,
autonomy tracks trust) and short revolutionary periods (teaming onset or a
trust violation), during which refusals carry repair messages and autonomy
is capped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

EVOLUTIONARY = "evolutionary"
REVOLUTIONARY = "revolutionary"

CAUSE_TEAMING_ONSET = "teaming_onset"
CAUSE_COUNTER_COMMAND = "counter_command"
CAUSE_PERCEIVED_UNETHICAL = "perceived_unethical"
CAUSES = (CAUSE_COUNTER_COMMAND, CAUSE_PERCEIVED_UNETHICAL, CAUSE_TEAMING_ONSET)

REPAIR_KINDS = (
    "apology",
    "denial",
    "control",
    "convey_uncertainty",
    "show_critical_states",
)

DEFAULT_TEMPLATES = {
    "apology": "I made a mistake and I am sorry. I will correct my course of action.",
    "denial": "I recognize the problem, but my decision was not at fault.",
    "control": "I am aware of the situation: estimated danger probability {danger_prob:.2f} in Building {building}.",
    "convey_uncertainty": "My confidence in this decision is {confidence:.2f}. Please confirm before I proceed.",
    "show_critical_states": "Critical state: {critical_state}. Immediate action is required.",
}


@dataclass(frozen=True)
class RepairStrategy:
    kind: str
    message_template: str

    def __post_init__(self) -> None:
        if self.kind not in REPAIR_KINDS:
            raise ValueError(f"unknown repair kind {self.kind!r}")


@dataclass(frozen=True)
class ControllerConfig:
    drop_threshold: float = 0.15
    trust_floor: float = 0.3
    revolutionary_min_windows: int = 3
    revolutionary_cap: float = 0.5
    map_gain: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.drop_threshold < 1.0:
            raise ValueError("drop_threshold must lie in (0,1)")
        if not 0.0 <= self.trust_floor < 1.0:
            raise ValueError("trust_floor must lie in [0,1)")
        if not 0.0 <= self.revolutionary_cap <= 1.0:
            raise ValueError("revolutionary_cap must lie in [0,1]")
        if self.revolutionary_min_windows < 1:
            raise ValueError("revolutionary_min_windows must be >= 1")


@dataclass
class AutonomyState:
    L_alpha: float = 0.5
    phase: str = REVOLUTIONARY
    phase_entered_at: int = 0
    last_violation_cause: str | None = CAUSE_TEAMING_ONSET

    @property
    def alpha(self) -> float:
        return 1.0 - self.L_alpha


def coordinate_autonomy(L_beta: float, phase: str, config: ControllerConfig) -> float:
    """Autonomy tracks trust (gain-scaled, clamped); revolutionary periods
    additionally cap the autonomy level."""
    if not 0.0 <= L_beta <= 1.0:
        raise ValueError(f"L_beta outside [0,1]: {L_beta}")
    L_alpha = min(1.0, max(0.0, config.map_gain * L_beta))
    if phase == REVOLUTIONARY:
        L_alpha = min(L_alpha, config.revolutionary_cap)
    return L_alpha


def detect_inflection(
    trust_series: Sequence[float],
    state: AutonomyState,
    config: ControllerConfig,
    cause_hint: str | None = None,
    window_index: int | None = None,
) -> AutonomyState:
    """Phase transition logic over the per-window trust-level series.

    Revolutionary triggers: teaming onset (first few windows), a sharp drop
    between the last two windows, or trust below the floor.  The phase
    returns to evolutionary only after trust has been non-decreasing for
    revolutionary_min_windows consecutive windows and sits at or above the
    floor.
    """
    if not trust_series:
        raise ValueError("trust series must be nonempty")
    window = len(trust_series) - 1 if window_index is None else window_index
    current = trust_series[-1]
    if window < config.revolutionary_min_windows:
        return AutonomyState(
            L_alpha=state.L_alpha,
            phase=REVOLUTIONARY,
            phase_entered_at=state.phase_entered_at if state.phase == REVOLUTIONARY else window,
            last_violation_cause=CAUSE_TEAMING_ONSET,
        )
    drop = trust_series[-2] - current if len(trust_series) >= 2 else 0.0
    violated = drop > config.drop_threshold or current < config.trust_floor
    if violated:
        cause = cause_hint or CAUSE_COUNTER_COMMAND
        return AutonomyState(
            L_alpha=state.L_alpha,
            phase=REVOLUTIONARY,
            phase_entered_at=window if state.phase == EVOLUTIONARY else state.phase_entered_at,
            last_violation_cause=cause,
        )
    if state.phase == REVOLUTIONARY:
        n = config.revolutionary_min_windows
        recovered = (
            len(trust_series) > n
            and all(
                trust_series[-i] >= trust_series[-i - 1] for i in range(1, n + 1)
            )
            and current >= config.trust_floor
        )
        if not recovered:
            return state
        return AutonomyState(
            L_alpha=state.L_alpha,
            phase=EVOLUTIONARY,
            phase_entered_at=window,
            last_violation_cause=None,
        )
    return state


def select_repair(
    cause: str,
    has_uncertainty_estimate: bool = False,
    robot_at_fault: bool = False,
    critical_state_present: bool = False,
    templates: dict[str, str] | None = None,
) -> list[RepairStrategy]:
    """Deterministic repair rule table; primary strategy first, with
    show_critical_states appended when a critical state exists."""
    if cause not in CAUSES:
        raise ValueError(f"unknown violation cause {cause!r}")
    templates = templates or DEFAULT_TEMPLATES
    out: list[RepairStrategy] = []
    if cause == CAUSE_TEAMING_ONSET:
        out.append(RepairStrategy("convey_uncertainty", templates["convey_uncertainty"]))
    elif cause == CAUSE_PERCEIVED_UNETHICAL:
        out.append(RepairStrategy("control", templates["control"]))
    elif cause == CAUSE_COUNTER_COMMAND:
        kind = "apology" if robot_at_fault else "denial"
        out.append(RepairStrategy(kind, templates[kind]))
    if critical_state_present:
        out.append(RepairStrategy("show_critical_states", templates["show_critical_states"]))
    return out


@dataclass(frozen=True)
class ComplianceDecision:
    obey: bool
    template_id: str


def decide_compliance(L_alpha: float, rng_seed: int, phase: str = EVOLUTIONARY) -> ComplianceDecision:
    """Resolve a genuine command conflict: obey with probability 1 - L_alpha.

    The draw comes from a generator seeded per decision, so identical
    (inputs, seed) pairs reproduce bitwise.  Refusals during revolutionary
    periods use the repair-augmented template.
    """
    if not 0.0 <= L_alpha <= 1.0:
        raise ValueError(f"L_alpha outside [0,1]: {L_alpha}")
    alpha = 1.0 - L_alpha
    rng = np.random.default_rng(rng_seed)
    obey = bool(rng.random() < alpha)
    if obey:
        template = "obey_reply"
    elif phase == REVOLUTIONARY:
        template = "refuse_reply_with_repair"
    else:
        template = "refuse_reply"
    return ComplianceDecision(obey=obey, template_id=template)
