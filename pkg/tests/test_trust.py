import math

import numpy as np
import pytest

from remsa.events import (
    AttributeSet,
    EventHistory,
    RateModel,
    RelationalEvent,
    StatisticSpec,
    simulate_history,
)
from remsa.trust import (
    ObservationWindow,
    TrustGrid,
    default_grid,
    init_prior,
    summarize,
    update_posterior,
    window_log_likelihood,
)

DYAD = ("h", "r1")
ACTORS = ("h", "r1", "r2")


def empty_history(K=2):
    return EventHistory((), ACTORS, K)


def trust_model(theta0=0.0, theta_tg=-1.2, types=(0,)):
    specs = (StatisticSpec.intercept(), StatisticSpec.trust_gate(set(types)))
    return RateModel(specs, np.array([theta0, theta_tg]))


def base_attrs(beta=0.5):
    return AttributeSet(dyad_attrs={
        (i, j): {"trust": beta} for i in ACTORS for j in ACTORS if i != j
    })


class TestInitPrior:
    def test_absent_gives_uniform(self):
        grid = init_prior(default_grid(), [DYAD])
        probs = grid.posterior(DYAD)
        assert np.allclose(probs, 1.0 / 51.0, atol=1e-15)

    def test_reported_one_modes_at_one(self):
        grid = init_prior(default_grid(), [DYAD], reported_trust=1.0)
        probs = grid.posterior(DYAD)
        assert np.argmax(probs) == 50

    def test_reported_mass_concentrates(self):
        # Beta(4.5, 2.5) shape: more than half the mass within +-0.2 of 0.7
        grid = init_prior(default_grid(), [DYAD], reported_trust=0.7, kappa=5.0)
        pts = grid.points
        probs = grid.posterior(DYAD)
        mass = probs[(pts >= 0.5) & (pts <= 0.9)].sum()
        assert mass > 0.5

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match=r"\[0,1\]"):
            init_prior(default_grid(), [DYAD], reported_trust=1.2)

    def test_uniform_prior_mean_half(self):
        grid = init_prior(default_grid(), [DYAD])
        s = summarize(grid, DYAD)
        assert s.mean == pytest.approx(0.5, abs=1e-12)


class TestWindows:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError, match="t_start < t_end"):
            ObservationWindow(0, 5.0, 5.0, ())
        with pytest.raises(ValueError, match="outside window"):
            ObservationWindow(0, 0.0, 10.0, (RelationalEvent("h", "r1", 0, 1.0, 12.0),))

    def test_boundary_event_belongs_to_earlier_window(self):
        # an event at exactly t_end is inside (t_start, t_end]
        ObservationWindow(0, 0.0, 10.0, (RelationalEvent("h", "r1", 0, 1.0, 10.0),))
        with pytest.raises(ValueError, match="outside window"):
            ObservationWindow(1, 10.0, 20.0, (RelationalEvent("h", "r1", 0, 1.0, 10.0),))


class TestUpdatePosterior:
    def test_no_trust_statistic_posterior_is_prior(self):
        model = RateModel((StatisticSpec.intercept(),), np.zeros(1))
        grid = init_prior(default_grid(), [DYAD], reported_trust=0.6)
        window = ObservationWindow(0, 0.0, 10.0,
                                   (RelationalEvent("h", "r1", 0, 1.0, 3.0),))
        out = update_posterior(grid, window, model, base_attrs(), DYAD,
                               empty_history(1), mode="temporal")
        assert out is grid

    def test_empty_window_ordinal_unchanged(self):
        model = trust_model()
        grid = init_prior(default_grid(), [DYAD])
        window = ObservationWindow(0, 0.0, 10.0, ())
        out = update_posterior(grid, window, model, base_attrs(), DYAD,
                               empty_history(), mode="ordinal")
        assert out is grid

    def test_empty_window_temporal_applies_survival(self):
        # no gated events observed is evidence for high trust when the gate
        # coefficient is negative (high trust -> low command rate)
        model = trust_model(theta0=1.0)
        grid = init_prior(default_grid(), [DYAD])
        window = ObservationWindow(0, 0.0, 10.0, ())
        out = update_posterior(grid, window, model, base_attrs(), DYAD,
                               empty_history(), mode="temporal")
        s = summarize(out, DYAD)
        assert s.mean > 0.5

    def test_two_point_grid_bayes_arithmetic(self):
        # one gated event on a uniform two-point prior: the posterior must
        # match the hand-computed choice probabilities exactly
        grid = TrustGrid(np.array([0.2, 0.8]),
                         {DYAD: np.log(np.array([0.5, 0.5]))})
        model = trust_model(theta0=0.0, theta_tg=1.0)
        window = ObservationWindow(0, 0.0, 10.0,
                                   (RelationalEvent("h", "r1", 0, 1.0, 5.0),))
        out = update_posterior(grid, window, model, base_attrs(0.0), DYAD,
                               empty_history(), mode="ordinal")
        probs = out.posterior(DYAD)
        # single-event choice likelihood: e^{b} / (11 + e^{b}) over the
        # 12 candidates (6 dyads x 2 types, one of them gated at trust b)
        lik = np.exp(grid.points) / (11.0 + np.exp(grid.points))
        expected = lik / lik.sum()
        assert np.allclose(probs, expected, atol=1e-12)

    def test_explicit_likelihood_ratio_posterior(self):
        # likelihood ratio 2:1 on a uniform two-point prior gives (2/3, 1/3);
        # verified against the window likelihood evaluated at each grid point
        grid = TrustGrid(np.array([0.2, 0.8]),
                         {DYAD: np.log(np.array([0.5, 0.5]))})
        model = trust_model(theta0=0.0,
                            theta_tg=math.log(2.0) / (0.2 - 0.8))
        window = ObservationWindow(0, 0.0, 10.0,
                                   (RelationalEvent("h", "r1", 0, 1.0, 5.0),))
        lls = []
        for b in grid.points:
            attrs_b = base_attrs(0.0).with_trust(DYAD, float(b))
            lls.append(window_log_likelihood(
                window, model, attrs_b, empty_history(), mode="ordinal"))
        ratio = math.exp(lls[0] - lls[1])
        lik = np.exp(np.array(lls) - max(lls))
        expected = lik / lik.sum()
        out = update_posterior(grid, window, model, base_attrs(0.0), DYAD,
                               empty_history(), mode="ordinal")
        assert np.allclose(out.posterior(DYAD), expected, atol=1e-12)
        assert ratio > 1.0

    def test_normalization_after_updates(self, rng):
        model = trust_model(theta0=0.5)
        grid = init_prior(default_grid(), [DYAD])
        attrs = base_attrs(0.7)
        t = 0.0
        hist = empty_history()
        for k in range(10):
            events = tuple(
                RelationalEvent("h", "r1", 0, 1.0, t + dt)
                for dt in sorted(rng.uniform(0.01, 9.99, size=rng.integers(0, 4)))
            )
            window = ObservationWindow(k, t, t + 10.0, events)
            grid = update_posterior(grid, window, model, attrs, DYAD, hist,
                                    mode="temporal")
            t += 10.0
            assert abs(grid.posterior(DYAD).sum() - 1.0) <= 1e-9

    def test_batch_update_deterministic(self, rng):
        model = trust_model()
        grid = init_prior(default_grid(), [DYAD])
        events = (RelationalEvent("h", "r1", 0, 1.0, 2.0),
                  RelationalEvent("h", "r2", 1, 1.0, 4.0))
        window = ObservationWindow(0, 0.0, 10.0, events)
        a = update_posterior(grid, window, model, base_attrs(), DYAD,
                             empty_history(), mode="temporal")
        b = update_posterior(grid, window, model, base_attrs(), DYAD,
                             empty_history(), mode="temporal")
        assert np.array_equal(a.log_post[DYAD], b.log_post[DYAD])

    def test_monotone_evidence_shifts_odds(self):
        # gated command events favor low trust under a negative coefficient
        # expected gated events over the window: ~13 at trust 0, ~6 at trust 1;
        # observing 20 is therefore evidence for low trust
        model = trust_model(theta0=0.25, theta_tg=-0.8)
        grid = init_prior(default_grid(), [DYAD])
        events = tuple(RelationalEvent("h", "r1", 0, 1.0, 0.25 + n * 0.48)
                       for n in range(20))
        window = ObservationWindow(0, 0.0, 10.0, events)
        out = update_posterior(grid, window, model, base_attrs(), DYAD,
                               empty_history(), mode="temporal")
        pts = list(grid.points)
        lo, hi = pts.index(0.2), pts.index(0.8)
        prior = grid.posterior(DYAD)
        post = out.posterior(DYAD)
        assert post[lo] / post[hi] > prior[lo] / prior[hi]

    def test_forgetting_tempers_toward_uniform(self):
        model = trust_model()
        grid = init_prior(default_grid(), [DYAD], reported_trust=0.9)
        window = ObservationWindow(0, 0.0, 10.0, ())
        out = update_posterior(grid, window, model, base_attrs(), DYAD,
                               empty_history(), mode="ordinal", forgetting=0.5)
        assert summarize(out, DYAD).var > summarize(grid, DYAD).var

    def test_closed_loop_recovery_smoke(self):
        # 5-seed quick version; the 50-seed variant lives in acceptance
        hits = 0
        for seed in range(5):
            hits += posterior_recovery_trial(seed, beta_true=0.8, n_windows=20)
        assert hits >= 4


def posterior_recovery_trial(seed, beta_true=0.8, n_windows=20, window_len=8.0):
    """Generate events from the model itself at a fixed trust value, run the
    windowed updates, and report whether the posterior mean lands within 0.1."""
    rng = np.random.default_rng(10_000 + seed)
    model = trust_model(theta0=1.2, theta_tg=-1.2, types=(0, 1))
    attrs = base_attrs(0.5).with_trust(DYAD, beta_true)
    total_t = n_windows * window_len
    # draw events over the full span, then cut into windows
    hist = simulate_history(model, ACTORS, 2, attrs, 10_000, rng)
    events = tuple(e for e in hist.events if e.time <= total_t)
    grid = init_prior(default_grid(), [DYAD])
    infer_attrs = base_attrs(0.5)
    for k in range(n_windows):
        t0, t1 = k * window_len, (k + 1) * window_len
        win_events = tuple(e for e in events if t0 < e.time <= t1)
        window = ObservationWindow(k, t0, t1, win_events)
        grid = update_posterior(grid, window, model, infer_attrs, DYAD,
                                EventHistory((), ACTORS, 2), mode="temporal")
    return abs(summarize(grid, DYAD).mean - beta_true) <= 0.1


class TestSummarize:
    def grid_with(self, points, probs):
        probs = np.asarray(probs, dtype=float)
        return TrustGrid(np.asarray(points, dtype=float),
                         {DYAD: np.log(probs / probs.sum())})

    def test_point_mass_expectation(self):
        g = self.grid_with([0.3, 0.7], [0.0 + 1e-300, 1.0])
        assert summarize(g, DYAD).level == pytest.approx(0.7)

    def test_uniform_three_point_mean(self):
        g = self.grid_with([0.0, 0.5, 1.0], [1, 1, 1])
        assert summarize(g, DYAD).mean == pytest.approx(0.5)

    def test_cvar_tail_mean(self):
        # worst 40% of uniform mass on {0.2,...,1.0} averages to 0.3
        g = self.grid_with([0.2, 0.4, 0.6, 0.8, 1.0], [1, 1, 1, 1, 1])
        s = summarize(g, DYAD, risk_mode="cvar", gamma=0.4)
        assert s.cvar == pytest.approx(0.3)
        assert s.value_at_risk == pytest.approx(0.4)

    def test_cvar_one_equals_mean(self):
        g = self.grid_with([0.1, 0.5, 0.9], [0.2, 0.5, 0.3])
        s = summarize(g, DYAD, risk_mode="cvar", gamma=1.0)
        assert s.cvar == pytest.approx(s.mean, abs=1e-12)

    def test_risk_ordering(self):
        g = self.grid_with(default_grid(), np.ones(51))
        s = summarize(g, DYAD, gamma=0.2)
        assert s.cvar <= s.value_at_risk <= s.mean

    def test_mean_variance_mode(self):
        g = self.grid_with([0.0, 1.0], [0.5, 0.5])
        s = summarize(g, DYAD, risk_mode="mean_variance", rho=1.0)
        assert s.level == pytest.approx(0.5 - 0.25)

    def test_degenerate_posterior_rejected(self):
        g = TrustGrid(np.array([0.0, 1.0]), {DYAD: np.array([-np.inf, -np.inf])})
        with pytest.raises(ValueError, match="degenerate"):
            summarize(g, DYAD)
