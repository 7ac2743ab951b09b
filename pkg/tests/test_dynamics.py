import io
import math

import numpy as np
import pytest

from twopatch import (
    ConstantZeta,
    ContractViolation,
    Control,
    FullParams,
    Homogenizing,
    Monod,
    OnePump,
    OptimalTwoPump,
    PhysicalParams,
    ReducedParams,
    SimConfig,
    best_setpoint,
    full_rhs,
    integrate,
    reduced_rhs,
    to_reduced,
)

from oracles import monod11_drain_time

GAMMA2 = (math.sqrt(3.0) - 1.0) ** 2  # frozen: best removal rate at sigma = 2, Monod(1,1)


class TestReducedRhs:
    def test_diagonal_with_volume_split(self, monod, params03):
        u = Control(0.3, best_setpoint(monod, 2.0))
        f = reduced_rhs((2.0, 2.0), u, params03, monod)
        np.testing.assert_allclose(f, [-GAMMA2, -GAMMA2], rtol=1e-12)

    def test_equilibrium_on_threshold(self, monod, params03):
        # setpoint equal to the concentration removes nothing; diffusion is zero
        for alpha in (0.0, 0.4, 1.0):
            f = reduced_rhs((1.0, 1.0), Control(alpha, 1.0), params03, monod)
            np.testing.assert_allclose(f, [0.0, 0.0], atol=1e-15)

    def test_offdiagonal_example(self, monod, params03):
        # frozen by direct arithmetic with rate(1) = (sqrt(2)-1)^2
        u = Control(0.0, best_setpoint(monod, 1.0))
        f = reduced_rhs((3.0, 1.0), u, params03, monod)
        assert f[0] == pytest.approx(-0.6666666666666667, rel=1e-12)
        assert f[1] == pytest.approx(0.04061017820884302, rel=1e-9)


class TestFullRhs:
    def test_washout_axis_invariant(self, monod):
        p = FullParams(0.3, 0.5, 1.0, 0.01)
        f = full_rhs((2.0, 0.0, 3.0, 1.0), 0.7, 0.4, p, monod)
        assert f[1] == 0.0

    def test_uniform_state_slow_rest(self, monod):
        p = FullParams(0.3, 0.0, 1.0, 0.01)
        f = full_rhs((2.0, 1.0, 2.0, 2.0), 0.3, 0.5, p, monod)
        np.testing.assert_allclose(f[2:], [0.0, 0.0], atol=1e-15)

    def test_weighted_mass_identity(self, monod):
        # r*ds1 + (1-r)*ds2 + eps*(ds_r + dx_r) = -eps * (q/v_r) * x_r
        rng = np.random.default_rng(5)
        p = FullParams(0.3, 0.7, 1.0, 0.02)
        for _ in range(100):
            y = rng.uniform(0.0, 5.0, size=4)
            alpha = rng.uniform(0.0, 1.0)
            qv = rng.uniform(0.0, 1.0)
            f = full_rhs(y, alpha, qv, p, monod)
            lhs = p.r * f[2] + (1.0 - p.r) * f[3] + p.epsilon * (f[0] + f[1])
            assert lhs == pytest.approx(-p.epsilon * qv * y[1], abs=1e-12)


class TestToReduced:
    def test_example(self):
        red, full = to_reduced(PhysicalParams(3.0, 7.0, 0.1, 1.0), s_bar=1.0)
        assert red.r == pytest.approx(0.3)
        assert red.d == pytest.approx(10.0)
        assert full.epsilon == pytest.approx(0.01)

    def test_equal_volumes(self):
        red, _ = to_reduced(PhysicalParams(5.0, 5.0, 0.2, 0.3), s_bar=0.5)
        assert red.r == 0.5

    def test_zero_diffusion(self):
        red, _ = to_reduced(PhysicalParams(1.0, 2.0, 0.1, 0.0), s_bar=0.5)
        assert red.d == 0.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            PhysicalParams(0.0, 1.0, 0.1, 0.0)
        with pytest.raises(ValueError):
            ReducedParams(r=1.0, d=0.1, s_bar=1.0)
        with pytest.raises(ValueError):
            FullParams(0.3, 0.1, 1.0, epsilon=0.0)


class TestIntegrateReduced:
    def test_diagonal_start_equals_drain_time(self, monod, params03):
        traj = integrate("reduced", OptimalTwoPump(), (4.0, 4.0), params03, monod)
        assert traj.reason == "target"
        assert traj.t_f == pytest.approx(monod11_drain_time(4.0), rel=1e-8)
        assert traj.t_delta == 0.0

    def test_inside_target_is_trivial(self, monod, params03):
        traj = integrate("reduced", OptimalTwoPump(), (0.5, 0.5), params03, monod)
        assert traj.t_f == 0.0
        assert len(traj.t) == 1
        assert traj.reason == "target"

    def test_published_comparison_cell(self, monod):
        p = ReducedParams(0.3, 10.0, 1.0)
        traj = integrate("reduced", OptimalTwoPump(), (4.0, 0.5), p, monod)
        assert traj.t_f == pytest.approx(2.17, rel=0.03)

    def test_target_event_on_boundary(self, monod, params03):
        traj = integrate("reduced", OptimalTwoPump(), (4.0, 0.5), params03, monod)
        assert max(traj.states[-1]) == pytest.approx(params03.s_bar, abs=1e-8)

    def test_one_pump_dead_patch_horizon(self, monod):
        p = ReducedParams(0.3, 0.0, 1.0)
        traj = integrate("reduced", OnePump(1), (4.0, 4.0), p, monod)
        assert traj.reason == "horizon"
        assert traj.t_f is None

    def test_diagonal_invariance(self, monod, params03):
        traj = integrate("reduced", OptimalTwoPump(), (3.0, 3.0), params03, monod)
        assert np.all(np.abs(traj.states[:, 0] - traj.states[:, 1]) <= 1e-9 * 3.0)

    def test_inadmissible_strategy_rejected(self, monod, params03):
        class Bad:
            def control(self, state, params, model):
                return Control(0.5, 10.0 * (state[0] + state[1]))

        with pytest.raises(ContractViolation):
            integrate("reduced", Bad(), (3.0, 2.0), params03, monod)

    def test_csv_schema(self, monod, params03):
        traj = integrate("reduced", OptimalTwoPump(), (2.0, 1.2), params03, monod)
        buf = io.StringIO()
        traj.to_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "t,s1,s2,alpha,sr_star,phase"
        assert len(lines) == len(traj.t) + 1
        assert set(traj.phase) <= {"offdiag", "diagonal"}

    def test_events_dict(self, monod, params03):
        traj = integrate("reduced", OptimalTwoPump(), (2.0, 1.2), params03, monod)
        ev = traj.events_dict()
        assert set(ev) == {"t_delta", "t_f", "reason"}
        assert ev["reason"] == "target"


def _sample_l_decay_violation(traj, params, model):
    worst = -np.inf
    k = 2.0 * params.d / (params.r * (1.0 - params.r))
    for i in range(len(traj.t)):
        s = traj.states[i]
        f = reduced_rhs(s, Control(traj.alpha[i], traj.sr_star[i]), params, model)
        ldot = (s[0] - s[1]) * (f[0] - f[1])
        worst = max(worst, ldot + k * 0.5 * (s[0] - s[1]) ** 2)
    return worst


class TestTrajectoryInvariants:
    STRATEGIES = [OptimalTwoPump(), OnePump(1), OnePump(2), Homogenizing(), ConstantZeta(0.5, 0.5)]

    @pytest.mark.parametrize("strategy", STRATEGIES, ids=lambda s: s.spec())
    def test_positive_invariance_and_mass(self, monod, strategy):
        rng = np.random.default_rng(17)
        cfg = SimConfig()
        for d in (0.0, 0.1, 10.0):
            p = ReducedParams(0.3, d, 1.0)
            x0 = rng.uniform(1.1, 4.0, size=2)
            traj = integrate("reduced", strategy, x0, p, monod, cfg)
            assert np.all(traj.states >= -cfg.abs_tol)
            m = p.r * traj.states[:, 0] + (1.0 - p.r) * traj.states[:, 1]
            assert np.all(np.diff(m) <= cfg.abs_tol)

    def test_l_decay_along_optimal_runs(self, monod):
        rng = np.random.default_rng(23)
        cfg = SimConfig()
        for d in (0.1, 1.0, 10.0):
            p = ReducedParams(0.3, d, 1.0)
            for _ in range(3):
                x0 = rng.uniform(1.1, 4.0, size=2)
                traj = integrate("reduced", OptimalTwoPump(), x0, p, monod, cfg)
                assert _sample_l_decay_violation(traj, p, monod) <= cfg.abs_tol


class TestIntegrateFull:
    def test_requires_biomass(self, monod):
        p = FullParams(0.3, 0.1, 1.0, 0.01)
        with pytest.raises(ValueError, match="x_r"):
            integrate("full", OptimalTwoPump(), (1.0, 0.0, 4.0, 1.5), p, monod)

    def test_reachability_and_convergence_to_reduced(self, monod, params03):
        ref = integrate("reduced", OptimalTwoPump(), (4.0, 1.5), params03, monod).t_f
        gaps = []
        for eps in (0.1, 0.01, 0.001):
            p = FullParams(0.3, 0.1, 1.0, eps)
            s_r0 = best_setpoint(monod, 4.0)
            traj = integrate("full", OptimalTwoPump(), (s_r0, 1.0, 4.0, 1.5), p, monod)
            assert traj.reason == "target"
            gaps.append(abs(traj.t_f - ref))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.05 * ref

    def test_full_csv_schema(self, monod):
        p = FullParams(0.3, 0.1, 1.0, 0.05)
        traj = integrate("full", OptimalTwoPump(), (1.0, 1.0, 2.0, 1.4), p, monod)
        buf = io.StringIO()
        traj.to_csv(buf)
        header = buf.getvalue().splitlines()[0]
        assert header == "t,s1,s2,alpha,sr_star,phase,s_r,x_r,q_over_vr"

    def test_full_inside_target_trivial(self, monod):
        p = FullParams(0.3, 0.1, 1.0, 0.05)
        traj = integrate("full", OptimalTwoPump(), (0.2, 1.0, 0.5, 0.5), p, monod)
        assert traj.t_f == 0.0


class TestSampleMonotonicity:
    @pytest.mark.parametrize("x0", [(4.0, 1.5), (3.0, 3.0), (2.0, 1.05)])
    def test_times_strictly_increasing(self, monod, params03, x0):
        traj = integrate("reduced", OptimalTwoPump(), x0, params03, monod)
        assert np.all(np.diff(traj.t) > 0.0)
