import math

import numpy as np
import pytest

from twopatch import (
    ConstantSetpoint,
    Control,
    ConstantZeta,
    Homogenizing,
    InfeasibleSearch,
    Monod,
    OnePump,
    OptimalTwoPump,
    ReducedParams,
    SimConfig,
    best_constant_search,
    constant_zeta_control,
    default_horizon,
    homogenizing_feedback,
    integrate,
    one_pump_feedback,
    optimal_feedback,
    parse_strategy,
    reduced_rhs,
    simulate_constant_batch,
)


class TestOptimalFeedback:
    def test_treats_dirtier_patch(self, monod, params03):
        u = optimal_feedback((3.0, 1.0), params03, monod)
        assert u.alpha == 1.0
        assert u.sr_star == pytest.approx(1.0, abs=1e-12)  # sqrt(4)-1
        u = optimal_feedback((1.0, 3.0), params03, monod)
        assert u.alpha == 0.0
        assert u.sr_star == pytest.approx(1.0, abs=1e-12)

    def test_diagonal_branch(self, monod, params03):
        u = optimal_feedback((2.0, 2.0), params03, monod)
        assert u.alpha == params03.r
        assert u.sr_star == pytest.approx(math.sqrt(3.0) - 1.0, abs=1e-12)

    def test_always_admissible(self, monod, params03):
        rng = np.random.default_rng(1)
        for _ in range(200):
            s = rng.uniform(0.0, 6.0, size=2)
            u = optimal_feedback(s, params03, monod)
            blend = u.alpha * s[0] + (1.0 - u.alpha) * s[1]
            assert 0.0 <= u.alpha <= 1.0
            assert -1e-12 <= u.sr_star <= blend + 1e-12


class TestOnePumpFeedback:
    def test_examples(self, monod):
        u = one_pump_feedback((3.0, 10.0), 1, monod)
        assert (u.alpha, u.sr_star) == (1.0, pytest.approx(1.0, abs=1e-12))
        u = one_pump_feedback((0.5, 4.0), 2, monod)
        assert u.alpha == 0.0
        assert u.sr_star == pytest.approx(math.sqrt(5.0) - 1.0, abs=1e-12)

    def test_admissible(self, monod):
        rng = np.random.default_rng(2)
        for _ in range(100):
            s = rng.uniform(0.01, 5.0, size=2)
            for active in (1, 2):
                u = one_pump_feedback(s, active, monod)
                assert u.sr_star < s[active - 1]

    def test_active_patch_validated(self, monod):
        with pytest.raises(ValueError):
            one_pump_feedback((1.0, 1.0), 3, monod)


class TestHomogenizingFeedback:
    def test_examples(self, monod):
        u = homogenizing_feedback((2.0, 2.0), ReducedParams(0.5, 0.1, 1.0))
        assert (u.alpha, u.sr_star) == (0.5, 1.0)
        u = homogenizing_feedback((4.0, 1.0), ReducedParams(0.3, 0.1, 1.0))
        assert (u.alpha, u.sr_star) == (0.3, pytest.approx(0.95))

    def test_mass_drain_identity_along_run(self, monod, params03):
        # under this feedback dm/dt = -mu(m/2) * m/2 exactly
        traj = integrate("reduced", Homogenizing(), (3.0, 1.5), params03, monod)
        for i in range(len(traj.t)):
            s = traj.states[i]
            m = params03.r * s[0] + (1.0 - params03.r) * s[1]
            f = reduced_rhs(s, Control(traj.alpha[i], traj.sr_star[i]), params03, monod)
            mdot = params03.r * f[0] + (1.0 - params03.r) * f[1]
            assert mdot + monod.mu(m / 2.0) * m / 2.0 == pytest.approx(0.0, abs=1e-12)


class TestConstantZeta:
    def test_extremes_do_nothing(self, monod, params03):
        for zeta in (0.0, 1.0):
            u = constant_zeta_control((2.0, 2.0), 0.5, zeta)
            f = reduced_rhs((2.0, 2.0), u, params03, monod)
            np.testing.assert_allclose(f, [0.0, 0.0], atol=1e-15)

    def test_midpoint_example(self):
        u = constant_zeta_control((3.0, 1.0), 0.5, 0.5)
        assert u.sr_star == pytest.approx(1.0)

    def test_range_validation(self):
        with pytest.raises(ValueError):
            constant_zeta_control((1.0, 1.0), 1.5, 0.5)
        with pytest.raises(ValueError):
            ConstantZeta(0.5, -0.1)


class TestParseStrategy:
    @pytest.mark.parametrize(
        "spec,cls",
        [
            ("optimal", OptimalTwoPump),
            ("onepump:1", OnePump),
            ("onepump:2", OnePump),
            ("homog", Homogenizing),
            ("const:0.5:0.25", ConstantZeta),
            ("constsr:0.3:0.6", ConstantSetpoint),
        ],
    )
    def test_roundtrip(self, spec, cls):
        s = parse_strategy(spec)
        assert isinstance(s, cls)
        assert s.spec() == spec or spec.startswith(s.spec().split(":")[0])

    def test_unknown_rejected(self):
        with pytest.raises(ValueError):
            parse_strategy("pump-all-the-things")


class TestBestConstantSearch:
    def test_paper_values_s_bar_one(self, monod):
        # published comparison cells: (4,4) -> 5.74 (d=0.1) / 5.71 (d=10); (1.5,0), d=10 -> 0.01
        for d, want in ((0.1, 5.74), (10.0, 5.71)):
            p = ReducedParams(0.3, d, 1.0)
            a, z, t = best_constant_search((4.0, 4.0), p, monod)
            assert t == pytest.approx(want, rel=0.05)
            assert a == pytest.approx(0.3, abs=0.02)
        p = ReducedParams(0.3, 10.0, 1.0)
        _, _, t = best_constant_search((1.5, 0.0), p, monod)
        assert abs(t - 0.01) <= 0.01

    def test_never_beats_optimal(self, monod, params03):
        _, _, t = best_constant_search((4.0, 1.5), params03, monod)
        t_opt = integrate("reduced", OptimalTwoPump(), (4.0, 1.5), params03, monod).t_f
        assert t >= t_opt - 1e-6

    def test_min_over_superset(self, monod, params03):
        # the returned minimum cannot exceed the (alpha=r, zeta_best) candidate
        a, z, t = best_constant_search((4.0, 1.5), params03, monod)
        t_max = default_horizon((4.0, 1.5), params03, monod)
        t_r = simulate_constant_batch(
            (4.0, 1.5), [params03.r], [z * params03.s_bar], params03, monod, t_max
        )[0]
        assert t <= t_r + 1e-9

    def test_reproducible_bit_for_bit(self, monod, params03):
        first = best_constant_search((4.0, 1.5), params03, monod)
        second = best_constant_search((4.0, 1.5), params03, monod)
        assert first == second

    def test_inside_target_rejected(self, monod, params03):
        with pytest.raises(ValueError):
            best_constant_search((0.5, 0.2), params03, monod)

    def test_infeasible_when_horizon_too_short(self, monod):
        p = ReducedParams(0.3, 0.1, 1.0)
        with pytest.raises(InfeasibleSearch):
            best_constant_search((4.0, 4.0), p, monod, SimConfig(t_max=1e-3))

    def test_winner_runs_admissibly_in_production(self, monod, params03):
        # the winning constant pair must replay through integrate() without
        # tripping the admissibility contract
        a, z, t = best_constant_search((4.0, 1.5), params03, monod)
        traj = integrate(
            "reduced", ConstantSetpoint(a, z * params03.s_bar), (4.0, 1.5), params03, monod
        )
        assert traj.reason == "target"
        assert traj.t_f == pytest.approx(t, rel=1e-6, abs=1e-8)


class TestOptimalityDominance:
    def test_optimal_beats_everything(self, monod, params03):
        rng = np.random.default_rng(42)
        t_horizon = None
        for _ in range(20):
            x0 = rng.uniform(1.0 + 1e-6, 4.0, size=2)
            t_opt = integrate("reduced", OptimalTwoPump(), x0, params03, monod).t_f
            for strat in (OnePump(1), OnePump(2), Homogenizing()):
                tr = integrate("reduced", strat, x0, params03, monod)
                if tr.t_f is not None:
                    assert t_opt <= tr.t_f + 1e-6
            alphas = rng.uniform(0.0, 1.0, size=50)
            zetas = rng.uniform(0.0, 1.0, size=50)
            t_horizon = default_horizon(x0, params03, monod)
            times = simulate_constant_batch(
                x0, alphas, zetas, params03, monod, t_horizon, zeta_mode=True
            )
            assert np.all(t_opt <= times + 1e-6)


class TestBatchIntegratorCrossValidation:
    def test_batch_agrees_with_production_integrator(self, monod, params03):
        # the vectorized search integrator and the production event-driven
        # integrator are independent implementations; their reach times for
        # the same constant controls must coincide
        rng = np.random.default_rng(55)
        x0 = (4.0, 1.5)
        t_max = default_horizon(x0, params03, monod)
        alphas = rng.uniform(0.05, 0.95, size=12)
        setpoints = rng.uniform(0.1, 0.9, size=12) * params03.s_bar
        batch = simulate_constant_batch(x0, alphas, setpoints, params03, monod, t_max)
        for a, sr, tb in zip(alphas, setpoints, batch):
            if not np.isfinite(tb):
                continue
            traj = integrate("reduced", ConstantSetpoint(a, sr), x0, params03, monod)
            assert traj.t_f == pytest.approx(tb, rel=1e-6, abs=1e-8)
