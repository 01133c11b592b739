"""Receding-horizon Bayesian inference of dyadic trust on a grid.

Trust of a human toward a robot is a [0,1] covariate.  Each observation
window contributes the window's event likelihood, evaluated with the dyad's
trust pinned to each grid value in turn; the posterior after window k is the
prior for window k+1.  Only the trust coordinate is inferred online; every
other attribute is treated as observed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from remsa.events import (
    AttributeSet,
    Dyad,
    EventHistory,
    RateModel,
    RelationalEvent,
    ordinal_log_likelihood,
    temporal_log_likelihood,
)

DEFAULT_GRID_SIZE = 51
PRIOR_PSEUDO_COUNT = 5.0


def default_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    return np.linspace(0.0, 1.0, size)


def _normalize_log(log_w: np.ndarray) -> np.ndarray:
    log_w = log_w - log_w.max()
    w = np.exp(log_w)
    with np.errstate(divide="ignore"):
        # zero-mass atoms legitimately map back to -inf
        return np.log(w / w.sum())


@dataclass(frozen=True)
class TrustGrid:
    """Discretized log-posterior over trust, one vector per dyad."""

    points: np.ndarray
    log_post: dict[Dyad, np.ndarray]

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or len(pts) < 2:
            raise ValueError("grid needs at least two points")
        if np.any(np.diff(pts) <= 0.0) or pts[0] < 0.0 or pts[-1] > 1.0:
            raise ValueError("grid points must be strictly increasing within [0,1]")

    def posterior(self, dyad: Dyad) -> np.ndarray:
        return np.exp(self.log_post[dyad])

    def with_dyad(self, dyad: Dyad, log_post: np.ndarray) -> "TrustGrid":
        new = dict(self.log_post)
        new[dyad] = _normalize_log(np.asarray(log_post, dtype=float))
        return replace(self, log_post=new)


@dataclass(frozen=True)
class ObservationWindow:
    """Events observed during (t_start, t_end]."""

    index: int
    t_start: float
    t_end: float
    events: tuple[RelationalEvent, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        if not self.t_start < self.t_end:
            raise ValueError("window requires t_start < t_end")
        for ev in self.events:
            if not self.t_start < ev.time <= self.t_end:
                raise ValueError(
                    f"event at t={ev.time} outside window ({self.t_start}, {self.t_end}]"
                )


@dataclass(frozen=True)
class TrustSummary:
    mean: float
    var: float
    value_at_risk: float
    cvar: float
    level: float


def init_prior(
    grid: np.ndarray,
    dyads: Sequence[Dyad],
    reported_trust: dict[Dyad, float] | float | None = None,
    kappa: float = PRIOR_PSEUDO_COUNT,
) -> TrustGrid:
    """Prior over trust: uniform when nothing was reported, otherwise a
    Beta-shaped bump centered at the reported value (pseudo-count kappa)."""
    grid = np.asarray(grid, dtype=float)
    log_post = {}
    for dyad in dyads:
        if reported_trust is None:
            reported = None
        elif isinstance(reported_trust, dict):
            reported = reported_trust.get(dyad)
        else:
            reported = float(reported_trust)
        if reported is None:
            log_post[dyad] = _normalize_log(np.zeros(len(grid)))
            continue
        if not 0.0 <= reported <= 1.0:
            raise ValueError(f"reported trust outside [0,1]: {reported}")
        a = 1.0 + kappa * reported
        b = 1.0 + kappa * (1.0 - reported)
        log_post[dyad] = _normalize_log(beta_dist.logpdf(grid, a, b))
    return TrustGrid(grid, log_post)


def window_log_likelihood(
    window: ObservationWindow,
    model: RateModel,
    attrs: AttributeSet,
    history_before: EventHistory,
    mode: str = "temporal",
) -> float:
    """Likelihood of one window's events given fixed attributes.

    history_before feeds the history-dependent statistics; its events are
    folded into the state but contribute no likelihood terms.  In temporal
    mode the survival of the event-free remainder of the window is included,
    so an empty window still carries rate information.
    """
    n_before = len(history_before)
    combined = history_before.extended(window.events)
    if mode == "ordinal":
        if not window.events:
            return 0.0
        full = ordinal_log_likelihood(model, combined, attrs)
        prefix = ordinal_log_likelihood(model, history_before, attrs)
        return full - prefix
    if mode != "temporal":
        raise ValueError(f"unknown likelihood mode {mode!r}")
    full = temporal_log_likelihood(
        model, combined, attrs, t0=min(window.t_start, combined.events[0].time if combined.events else window.t_start),
        t_end=window.t_end,
    )
    if n_before:
        prefix = temporal_log_likelihood(
            model, history_before, attrs,
            t0=min(window.t_start, combined.events[0].time),
            t_end=window.t_start,
        )
    else:
        prefix = 0.0
    return full - prefix


def update_posterior(
    grid: TrustGrid,
    window: ObservationWindow,
    model: RateModel,
    attrs: AttributeSet,
    dyad: Dyad,
    history_before: EventHistory,
    mode: str = "temporal",
    forgetting: float = 0.0,
) -> TrustGrid:
    """One Bayes step for one dyad: prior times window likelihood at every
    grid value of that dyad's trust, then log-normalization.

    forgetting in [0,1) power-tempers the prior toward uniform before the
    update (0 disables tempering)."""
    if not 0.0 <= forgetting < 1.0:
        raise ValueError("forgetting must lie in [0,1)")
    old = np.asarray(grid.log_post[dyad], dtype=float)
    if forgetting:
        old = _normalize_log((1.0 - forgetting) * old)
    if not any(s.kind in ("inertia", "reciprocity") for s in model.specs):
        # History-independent statistics: the prior history cannot change the
        # window likelihood, so skip the (possibly long) prefix scan.
        history_before = replace(history_before, events=())
    log_lik = np.empty(len(grid.points))
    for b_idx, b in enumerate(grid.points):
        attrs_b = attrs.with_trust(dyad, float(b))
        log_lik[b_idx] = window_log_likelihood(
            window, model, attrs_b, history_before, mode=mode
        )
    if np.ptp(log_lik) == 0.0 and not forgetting:
        # Likelihood constant in trust: posterior is the prior, exactly.
        return grid
    return grid.with_dyad(dyad, old + log_lik)


def summarize(
    grid: TrustGrid,
    dyad: Dyad,
    risk_mode: str = "expectation",
    gamma: float = 0.2,
    rho: float = 1.0,
) -> TrustSummary:
    """Collapse a dyad's posterior to a scalar trust level.

    Lower-tail risk: low trust is the dangerous direction, so VaR(gamma) is
    the largest value with at most gamma probability below-or-at it, and
    CVaR(gamma) averages the worst gamma mass with partial-atom weighting.
    """
    probs = grid.posterior(dyad)
    total = probs.sum()
    if not math.isfinite(total) or total <= 0.0:
        raise ValueError("degenerate posterior: probability mass is zero")
    probs = probs / total
    pts = grid.points
    mean = float(probs @ pts)
    var = float(probs @ (pts - mean) ** 2)
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0,1]")
    cdf = np.cumsum(probs)
    # VaR: largest v with P(beta <= v) <= gamma, linearly interpolated when
    # gamma falls between grid atoms.
    idx = int(np.searchsorted(cdf, gamma + 1e-15, side="right")) - 1
    if idx < 0:
        frac = gamma / cdf[0] if cdf[0] > 0 else 0.0
        var_gamma = float(pts[0] * frac)
    elif idx >= len(pts) - 1:
        var_gamma = float(pts[-1])
    else:
        gap = cdf[idx + 1] - cdf[idx]
        frac = (gamma - cdf[idx]) / gap if gap > 0 else 0.0
        var_gamma = float(pts[idx] + frac * (pts[idx + 1] - pts[idx]))
    # CVaR: accumulate mass up to gamma, weighting the boundary atom by the
    # fraction actually inside the tail.
    remaining = gamma
    acc = 0.0
    for p, x in zip(probs, pts):
        take = min(p, remaining)
        acc += take * x
        remaining -= take
        if remaining <= 1e-15:
            break
    cvar = float(acc / gamma)
    if risk_mode == "expectation":
        level = mean
    elif risk_mode == "var":
        level = var_gamma
    elif risk_mode == "cvar":
        level = cvar
    elif risk_mode == "mean_variance":
        level = mean - rho * var
    else:
        raise ValueError(f"unknown risk_mode {risk_mode!r}")
    level = min(1.0, max(0.0, level))
    return TrustSummary(mean=mean, var=var, value_at_risk=var_gamma, cvar=cvar, level=level)
