"""Offline coefficient fitting by penalized Newton-Raphson.

The objective is the (temporal or ordinal) log-likelihood minus a ridge
penalty.  Derivatives are taken by central finite differences against the
same likelihood kernel used everywhere else, so the likelihood stays
single-sourced; P is small enough that this costs nothing at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from remsa.events import (
    LINPRED_CLAMP,
    AttributeSet,
    EventHistory,
    StatisticSpec,
    design_matrix,
    validate_specs,
)

FD_STEP = 1e-5


@dataclass(frozen=True)
class FitConfig:
    mode: str = "ordinal"
    ridge: float = 1e-3
    grad_tol: float = 1e-8
    max_iters: int = 100
    step_shrink: float = 0.5
    baseline: float = 1.0
    t0: float = 0.0
    t_end: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("ordinal", "temporal"):
            raise ValueError(f"mode must be ordinal or temporal, got {self.mode!r}")
        if self.ridge < 0.0:
            raise ValueError("ridge must be >= 0")
        if not self.grad_tol > 0.0:
            raise ValueError("grad_tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 < self.step_shrink < 1.0:
            raise ValueError("step_shrink must lie in (0,1)")


@dataclass
class FitResult:
    theta_star: np.ndarray
    converged: bool
    iterations: int
    final_grad_norm: float
    log_lik: float
    std_errors: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "theta": list(map(float, self.theta_star)),
            "std_errors": None
            if self.std_errors is None
            else list(map(float, self.std_errors)),
            "log_lik": float(self.log_lik),
            "converged": bool(self.converged),
            "iterations": self.iterations,
            "final_grad_norm": float(self.final_grad_norm),
        }


class PrecomputedLikelihood:
    """Likelihood of a fixed history as a fast function of theta.

    Sufficient statistics do not depend on theta, so the full candidate
    design tensor is computed once; each evaluation is then pure array math.
    """

    def __init__(
        self,
        specs: Sequence[StatisticSpec],
        history: EventHistory,
        attrs: AttributeSet | Sequence[AttributeSet],
        mode: str = "ordinal",
        baseline: float = 1.0,
        t0: float = 0.0,
        t_end: float | None = None,
    ):
        validate_specs(specs, history.type_count)
        self.specs = tuple(specs)
        self.mode = mode
        self.baseline = baseline
        self.m = len(history)
        trailing = t_end if mode == "temporal" else None
        S, obs_dyad, obs_type = design_matrix(specs, history, attrs, trailing)
        n_rows = S.shape[0]
        self.S_flat = S.reshape(n_rows, -1, len(self.specs))
        K = history.type_count
        self.obs_flat = obs_dyad * K + obs_type
        times = np.array([e.time for e in history.events])
        self.dts = np.diff(np.concatenate(([t0], times)))
        self.tail_dt = 0.0
        if mode == "temporal" and t_end is not None:
            t_last = times[-1] if self.m else t0
            if t_end < t_last:
                raise ValueError("t_end precedes the last event")
            self.tail_dt = t_end - t_last

    def __call__(self, theta: np.ndarray) -> float:
        Z = np.clip(self.S_flat @ theta, -LINPRED_CLAMP, LINPRED_CLAMP)
        m = self.m
        if self.mode == "ordinal":
            if m == 0:
                return 0.0
            zmax = Z.max(axis=1)
            lse = zmax + np.log(np.exp(Z - zmax[:, None]).sum(axis=1))
            return float(np.sum(Z[np.arange(m), self.obs_flat[:m]] - lse))
        total = self.baseline * np.exp(Z).sum(axis=1)
        ll = 0.0
        if m:
            obs = Z[np.arange(m), self.obs_flat[:m]]
            ll += float(np.sum(math.log(self.baseline) + obs - self.dts * total[:m]))
        ll -= self.tail_dt * float(total[-1]) if self.tail_dt else 0.0
        return ll


def _fd_gradient(f: Callable, theta: np.ndarray, step_scale: float = FD_STEP) -> np.ndarray:
    g = np.empty_like(theta)
    for p in range(len(theta)):
        h = step_scale * max(1.0, abs(theta[p]))
        e = np.zeros_like(theta)
        e[p] = h
        g[p] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return g


def _fd_hessian(f: Callable, theta: np.ndarray, step_scale: float = FD_STEP) -> np.ndarray:
    P = len(theta)
    H = np.empty((P, P))
    hs = np.array([step_scale * max(1.0, abs(theta[p])) for p in range(P)])
    f0 = f(theta)
    for p in range(P):
        ep = np.zeros(P)
        ep[p] = hs[p]
        H[p, p] = (f(theta + ep) - 2.0 * f0 + f(theta - ep)) / hs[p] ** 2
        for q in range(p + 1, P):
            eq = np.zeros(P)
            eq[q] = hs[q]
            fpq = f(theta + ep + eq)
            fp_q = f(theta + ep - eq)
            f_pq = f(theta - ep + eq)
            f_p_q = f(theta - ep - eq)
            H[p, q] = H[q, p] = (fpq - fp_q - f_pq + f_p_q) / (4.0 * hs[p] * hs[q])
    return H


def fit_mle(
    history: EventHistory,
    attrs: AttributeSet | Sequence[AttributeSet],
    specs: Sequence[StatisticSpec],
    config: FitConfig = FitConfig(),
) -> FitResult:
    """Maximize the penalized log-likelihood over theta by Newton-Raphson.

    Backtracking halves the step until the objective improves; a plain
    gradient-ascent step is used whenever the Hessian is not negative
    definite.  The baseline is held fixed (the intercept absorbs scale).
    """
    specs = tuple(specs)
    P = len(specs)
    if len(history) < P:
        raise ValueError(
            f"insufficient events: need at least {P}, got {len(history)}"
        )
    loglik = PrecomputedLikelihood(
        specs, history, attrs,
        mode=config.mode, baseline=config.baseline,
        t0=config.t0, t_end=config.t_end,
    )

    def objective(theta: np.ndarray) -> float:
        return loglik(theta) - 0.5 * config.ridge * float(theta @ theta)

    theta = np.zeros(P)
    obj = objective(theta)
    if not math.isfinite(obj):
        raise ValueError("objective not finite at theta = 0")
    converged = False
    grad = _fd_gradient(objective, theta)
    iters = 0
    for iters in range(1, config.max_iters + 1):
        if np.max(np.abs(grad)) <= config.grad_tol:
            converged = True
            iters -= 1
            break
        H = _fd_hessian(objective, theta)
        step = None
        try:
            # Negative-definite check: -H must admit a Cholesky factor.
            np.linalg.cholesky(-H)
            step = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError:
            step = grad / max(1.0, float(np.max(np.abs(grad))))
        # Backtracking line search.
        accepted = False
        for _ in range(60):
            cand = theta + step
            cand_obj = objective(cand)
            if math.isfinite(cand_obj) and cand_obj > obj:
                theta, obj = cand, cand_obj
                accepted = True
                break
            step = step * config.step_shrink
        grad = _fd_gradient(objective, theta)
        if not accepted:
            # No improving step at FD resolution: treat as a fixed point.
            converged = np.max(np.abs(grad)) <= max(config.grad_tol, 1e-6)
            break
    else:
        iters = config.max_iters
    if np.max(np.abs(grad)) <= config.grad_tol:
        converged = True
    std_errors = None
    H = _fd_hessian(objective, theta)
    try:
        cov = np.linalg.inv(-H)
        diag = np.diag(cov)
        if np.all(diag > 0.0):
            std_errors = np.sqrt(diag)
    except np.linalg.LinAlgError:
        pass
    return FitResult(
        theta_star=theta,
        converged=bool(converged),
        iterations=iters,
        final_grad_norm=float(np.max(np.abs(grad))),
        log_lik=float(loglik(theta)),
        std_errors=std_errors,
    )


@dataclass(frozen=True)
class GradientCheck:
    discrepancy: float
    trusted: bool


def check_gradient(
    history: EventHistory,
    attrs: AttributeSet | Sequence[AttributeSet],
    specs: Sequence[StatisticSpec],
    theta: np.ndarray,
    config: FitConfig = FitConfig(),
    coarse_step: float = 1e-4,
) -> GradientCheck:
    """Compare the optimizer's internal finite-difference gradient against
    an independent symmetric two-point difference at a coarser step.

    The region where the linear predictor hits the clamp is flagged as
    untrusted: the clamp breaks smoothness, so the discrepancy there is
    informational only.
    """
    theta = np.asarray(theta, dtype=float)
    loglik = PrecomputedLikelihood(
        specs, history, attrs,
        mode=config.mode, baseline=config.baseline,
        t0=config.t0, t_end=config.t_end,
    )
    g_internal = _fd_gradient(loglik, theta)
    g_coarse = _fd_gradient(loglik, theta, step_scale=coarse_step)
    Z = loglik.S_flat @ theta
    trusted = bool(np.all(np.abs(Z) < LINPRED_CLAMP))
    return GradientCheck(float(np.max(np.abs(g_internal - g_coarse))), trusted)
