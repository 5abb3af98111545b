import math
from dataclasses import replace

import numpy as np
import pytest

from attitude_rta import barriers as bar
from attitude_rta.controllers import PdConfig
from attitude_rta.filter import FilterConfig, evaluate_safety
from attitude_rta.harness import (
    CalibrationResult,
    EpisodeConfig,
    EpisodeSummary,
    SampleRanges,
    SamplingError,
    calibrate_tuning,
    constraint_scales,
    count_violations,
    episode_seed,
    latin_hypercube,
    reference_initial_state,
    run_campaign,
    run_episode,
    sample_safe_initial,
    summarize,
)
from attitude_rta.params import Tuning


def _bins_exact(m):
    n = m.shape[0]
    for col in m.T:
        counts = np.bincount(np.floor(col * n).astype(int), minlength=n)
        if not np.all(counts == 1):
            return False
    return True


def test_lhs_small():
    m = latin_hypercube(4, 1, seed=3)
    assert sorted(np.floor(m[:, 0] * 4).astype(int)) == [0, 1, 2, 3]
    assert np.all((m >= 0) & (m < 1))


def test_lhs_large_uniform_bins():
    m = latin_hypercube(1000, 9, seed=11)
    assert m.shape == (1000, 9)
    assert _bins_exact(m)


def test_lhs_deterministic():
    np.testing.assert_array_equal(latin_hypercube(50, 9, 5), latin_hypercube(50, 9, 5))
    assert not np.array_equal(latin_hypercube(50, 9, 5), latin_hypercube(50, 9, 6))


def test_episode_seed_split():
    seeds = [episode_seed(7, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [episode_seed(7, i) for i in range(100)]
    assert all(0 <= s < 2**63 for s in seeds)
    assert episode_seed(8, 0) != seeds[0]


def test_sample_ranges_validation(p):
    with pytest.raises(ValueError, match="omega"):
        SampleRanges(omega=(1.0, -1.0), psi=(0, 1), T=(270, 280), E=(1000, 2000))
    with pytest.raises(ValueError, match="E"):
        SampleRanges(omega=(0, 1), psi=(0, 1), T=(270, 280), E=(1000, math.inf))
    lo, hi = SampleRanges.default(p).box()
    assert lo.shape == hi.shape == (9,)


def test_sampled_states_are_safe_with_buffer(p, safe_states):
    ranges = SampleRanges.default(p)
    scales = constraint_scales(p, ranges)
    assert all(v > 0 for v in scales.values())
    for x in safe_states:
        rep = evaluate_safety(x, p, slacked=())
        assert rep.safe
        assert np.linalg.norm(x[:4]) == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.abs(x[4:7]) <= 0.95 * p.omega_max + 1e-15)


def test_sampled_psi_within_buffered_bound(p):
    ranges = SampleRanges.default(p)
    for i in range(200):
        x = sample_safe_initial(ranges, p, seed=5000 + i).as_vector()
        assert np.all(np.abs(x[7:10]) <= 0.95 * p.psi_max)


def test_sampling_deterministic(p):
    ranges = SampleRanges.default(p)
    a = sample_safe_initial(ranges, p, seed=42).as_vector()
    b = sample_safe_initial(ranges, p, seed=42).as_vector()
    np.testing.assert_array_equal(a, b)


def test_collapsed_ranges_return_reference_state(p):
    x0 = reference_initial_state().as_vector()
    ranges = SampleRanges(omega=(0.0, 0.0), psi=(0.0, 0.0), T=(x0[10], x0[10]), E=(x0[11], x0[11]),
                          theta_s=(x0[12], x0[12]), quaternion=tuple(x0[:4]))
    x = sample_safe_initial(ranges, p, seed=0).as_vector()
    np.testing.assert_allclose(x, x0, rtol=0, atol=1e-12)


def test_sampling_error_names_binding_constraint(p):
    # every candidate sits at the battery floor
    ranges = SampleRanges(omega=(0.0, 0.0), psi=(0.0, 0.0), T=(275.0, 275.0), E=(p.e_min, p.e_min),
                          quaternion=(0.0, 0.0, 0.0, 1.0))
    with pytest.raises(SamplingError, match="battery"):
        sample_safe_initial(ranges, p, seed=1, max_attempts=64)


def test_episode_config_validation():
    with pytest.raises(ValueError, match="multiple"):
        EpisodeConfig(duration=10.5, dt=1.0, seed=0)
    with pytest.raises(ValueError, match="initial_state"):
        EpisodeConfig()
    with pytest.raises(ValueError, match="controller"):
        EpisodeConfig(seed=0, controller="bang")
    cfg = EpisodeConfig(seed=0, dt=0.5, duration=10)
    assert cfg.n_steps == 20 and cfg.filter_config.dt == 0.5


def test_episode_deterministic_and_shapes(p):
    cfg = EpisodeConfig(duration=50, seed=9)
    a, b = run_episode(cfg, p), run_episode(cfg, p)
    assert a.states.shape == (51, 13) and a.u_act.shape == (50, 3) and a.margins.shape == (51, 10)
    assert a.slack.shape == (50, 1) and len(a.qp_status) == 50
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.u_act, b.u_act)
    assert a.passed == (not a.violated)


def test_zero_controller_interior_low_intervention(p, safe_states):
    res = run_episode(EpisodeConfig(duration=100, initial_state=safe_states[0]), p)
    assert res.passed
    assert res.intervention_rate < 0.5


def test_rta_off_records_off_status(p):
    res = run_episode(EpisodeConfig(duration=5, seed=3, rta_enabled=False), p)
    assert res.qp_status == ["Off"] * 5
    assert res.slacked == ()
    np.testing.assert_array_equal(res.u_act, res.u_des)


def test_blowup_is_reported_not_raised(p):
    x0 = reference_initial_state().as_vector()
    x0[4:7] = 1e150
    from attitude_rta.dynamics import FullState
    res = run_episode(EpisodeConfig(duration=5, rta_enabled=False, initial_state=FullState.from_vector(x0)), p)
    assert not res.passed
    assert res.diagnostic
    assert res.qp_status[-1] == "IntegrationError"


def _summary(i, passed, violated=()):
    return EpisodeSummary(i, 100 + i, passed, tuple(violated), [0.0] * 13, 0.0)


def test_summary_percentages_over_failed_only():
    eps = [_summary(i, True) for i in range(6)]
    eps += [_summary(6, False, ["exclusion"]), _summary(7, False, ["exclusion", "battery"]),
            _summary(8, False, ["omega1", "omega2", "omega3"]),
            _summary(9, False, ["omega1", "omega2", "omega3", "psi1", "temperature"])]
    s = summarize(eps, root_seed=1)
    assert s.success_rate == 0.6
    assert s.per_constraint_pct["exclusion"] == 50.0
    assert s.per_constraint_pct["omega1"] == 50.0
    assert sum(s.per_constraint_pct.values()) > 100.0
    assert s.per_count_pct == {"1": 25.0, "2": 25.0, "3": 25.0, "4+": 25.0}
    assert sum(s.per_count_pct.values()) == pytest.approx(100.0)


def test_summary_all_pass():
    s = summarize([_summary(i, True) for i in range(3)], root_seed=0)
    assert s.success_rate == 1.0 and s.per_constraint_pct == {} and s.per_count_pct == {}


def test_campaign_worker_invariance(p):
    template = EpisodeConfig(duration=30, seed=0)
    a = run_campaign(4, None, template, seed=3, p=p, workers=1)
    b = run_campaign(4, None, template, seed=3, p=p, workers=2)
    assert a == b
    assert a.seeds == [episode_seed(3, i) for i in range(4)]


def test_campaign_without_rta_aggressive_pd_fails(p):
    template = EpisodeConfig(duration=200, seed=0, rta_enabled=False, controller=PdConfig(
        schedule=((0.0, (0.0, 1.0, 0.0, 0.0)),)))
    s = run_campaign(10, None, template, seed=17, p=p)
    assert s.success_rate <= 0.1
    for e in s.episodes:
        assert e.passed == (not e.violated)


def test_campaign_rejects_empty(p):
    with pytest.raises(ValueError):
        run_campaign(0, None, EpisodeConfig(seed=0), seed=0, p=p)


def test_calibration_baseline_violates(p):
    tiny = Tuning(gains={fam: (0.01, 0.02) for fam in p.tuning.gains}, sigma=dict(p.tuning.sigma),
                  delta0=0.0, delta1=0.0, delta2=0.0, slack_penalty=p.tuning.slack_penalty)
    seeds = [episode_seed(2024, i) for i in range(10)]
    assert count_violations(tiny, p, seeds, stop_at=1) >= 1


def test_calibration_search_mechanics(p):
    """Short episodes keep this cheap; checks the contract, not the tuning."""
    template = EpisodeConfig(duration=20, seed=0)
    res = calibrate_tuning(p, seed=5, n_episodes=2, template=template, max_sweeps=1)
    assert isinstance(res, CalibrationResult)
    assert res.evaluations == len(res.history) >= 1
    assert res.converged == (res.violations == 0)
    if res.converged:
        seeds = [episode_seed(5, i) for i in range(2)]
        assert count_violations(res.tuning, p, seeds, template) == 0


def test_reference_example_rta_safe_short(p):
    from attitude_rta.harness import reference_episode
    res = run_episode(replace(reference_episode(rta=True), duration=200), p)
    assert res.passed
    assert res.slacked == (bar.COMMUNICATION,)


def test_filter_config_passes_through_episode(p):
    cfg = EpisodeConfig(duration=5, seed=2, filter_config=FilterConfig(slacked=()))
    assert run_episode(cfg, p).slack.shape == (5, 0)


@pytest.mark.slow
def test_shipped_tuning_self_consistent(p):
    """The shipped tuning came from calibrate_tuning(seed=2024, n_episodes=50)."""
    seeds = [episode_seed(2024, i) for i in range(50)]
    assert count_violations(p.tuning, p, seeds) == 0


@pytest.mark.slow
def test_shipped_tuning_holdout(p):
    s = run_campaign(50, None, EpisodeConfig(seed=0), seed=9090, p=p)
    assert s.success_rate >= 0.90
