import numpy as np
import pytest

from phdae.circuits import CircuitParams, build_dc_network
from phdae.collocation import (NewtonError, NewtonOptions, consistent_init,
                               convergence_study, discrete_energy_report,
                               gauss_legendre_tableau, integrate, step)
from phdae.model import LTIModel, PHDAEModel, constant, lti_to_model

PARAMS = CircuitParams()
MODEL = build_dc_network(PARAMS)
SQRT3 = np.sqrt(3.0)


class TestTableau:
    def test_one_stage_is_midpoint(self):
        tab = gauss_legendre_tableau(1)
        assert tab.gamma == pytest.approx([0.5])
        assert tab.beta == pytest.approx([1.0])
        assert np.allclose(tab.alpha, [[0.5]], atol=1e-15)
        assert tab.p == 1

    def test_two_stage_closed_form(self):
        tab = gauss_legendre_tableau(2)
        assert tab.gamma == pytest.approx([0.5 - SQRT3 / 6, 0.5 + SQRT3 / 6])
        assert tab.beta == pytest.approx([0.5, 0.5])
        assert np.allclose(
            tab.alpha,
            [[0.25, 0.25 - SQRT3 / 6], [0.25 + SQRT3 / 6, 0.25]], atol=1e-14)
        assert tab.p == 3

    @pytest.mark.parametrize("s", [1, 2, 3, 4, 5])
    def test_identities(self, s):
        tab = gauss_legendre_tableau(s)
        assert abs(tab.beta.sum() - 1.0) <= 1e-14
        assert np.max(np.abs(tab.alpha.sum(axis=1) - tab.gamma)) <= 1e-14
        assert np.all(tab.beta > 0)
        assert np.all(np.diff(tab.gamma) > 0)
        assert np.all((tab.gamma > 0) & (tab.gamma < 1))
        assert tab.p == 2 * s - 1

    @pytest.mark.parametrize("s", [0, 6, -1])
    def test_stage_count_range(self, s):
        with pytest.raises(ValueError, match="stage count"):
            gauss_legendre_tableau(s)


class TestStep:
    def test_midpoint_decay_closed_form(self, decay_model):
        rec = step(decay_model, 0.0, np.array([1.0]), 0.1,
                   gauss_legendre_tableau(1))
        assert rec.x_end[0] == pytest.approx((1 - 0.05) / (1 + 0.05), abs=1e-12)
        assert rec.x_end[0] == pytest.approx(0.9047619048, abs=1e-9)

    def test_small_step_consistency(self, decay_model):
        h = 1e-3
        rec = step(decay_model, 0.0, np.array([1.0]), h,
                   gauss_legendre_tableau(1))
        assert np.linalg.norm(rec.x_end - rec.x0) <= \
            2 * h * np.max(np.abs(rec.stage_rates))

    def test_circuit_step_energy_balance_no_ports(self):
        x0 = consistent_init(MODEL, 0.0, np.array([1.0, 2.0, -1.0, 0, 0]),
                             np.zeros(1))
        rec = step(MODEL, 0.0, x0, 0.01, gauss_legendre_tableau(2))
        rep = discrete_energy_report(rec)
        assert rep.port_sum == 0.0
        assert abs(rec.delta_H - rec.diss_sum) <= 1e-10 * (1 + abs(rec.delta_H))

    def test_nonsquare_model_rejected(self):
        wide = lti_to_model(LTIModel(
            E=np.ones((1, 2)), J=np.zeros((1, 1)), R=np.zeros((1, 1)),
            B=np.zeros((1, 0)), P=np.zeros((1, 0)),
            S=np.zeros((0, 0)), N=np.zeros((0, 0)),
            Z=np.ones((1, 2)) * 0.5, w=np.zeros(1),
            Q=np.ones((1, 2)).T @ np.ones((1, 2)) * 0.5,
            v=np.zeros(2), c=0.0))
        with pytest.raises(ValueError, match="ell=1, n=2"):
            step(wide, 0.0, np.zeros(2), 0.1, gauss_legendre_tableau(1))

    def test_zero_step_rejected(self, decay_model):
        with pytest.raises(ValueError, match="nonzero"):
            step(decay_model, 0.0, np.array([1.0]), 0.0,
                 gauss_legendre_tableau(1))

    def test_newton_failure_reports_residual(self, quartic_model):
        with pytest.raises(NewtonError, match="no convergence"):
            step(quartic_model, 0.0, np.array([1.0]), 0.1,
                 gauss_legendre_tableau(1),
                 newton=NewtonOptions(max_iter=0))

    def test_singular_iteration_matrix_advises(self):
        # no differential part and a degenerate algebraic row
        model = PHDAEModel(
            n=1, ell=1, m=0,
            E=constant(np.zeros((1, 1))), J=constant(np.zeros((1, 1))),
            R=constant(np.zeros((1, 1))),
            B=constant(np.zeros((1, 0))), P=constant(np.zeros((1, 0))),
            S=constant(np.zeros((0, 0))), N=constant(np.zeros((0, 0))),
            z=lambda t, x: np.zeros(1), r=constant(np.ones(1)),
            H=lambda t, x: 0.0,
            gradH_x=lambda t, x: np.zeros(1), gradH_t=lambda t, x: 0.0)
        with pytest.raises(NewtonError, match="singular iteration matrix"):
            step(model, 0.0, np.zeros(1), 0.1, gauss_legendre_tableau(1))

    def test_midpoint_is_self_adjoint(self, quartic_model):
        tab = gauss_legendre_tableau(1)
        fwd = step(quartic_model, 0.0, np.array([1.0]), 0.05, tab)
        back = step(quartic_model, 0.05, fwd.x_end, -0.05, tab)
        assert np.max(np.abs(back.x_end - np.array([1.0]))) <= \
            10 * max(fwd.newton_tolerance, back.newton_tolerance)


class TestIntegrate:
    def test_uncontrolled_energy_monotone(self):
        x0 = consistent_init(MODEL, 0.0, np.array([1.0, 2.0, -1.0, 0, 0]),
                             np.zeros(1))
        traj = integrate(MODEL, (0.0, 5.0), x0, 0.01,
                         gauss_legendre_tableau(1))
        H = traj.energies
        assert np.all(np.diff(H) <= 1e-12)

    def test_zero_start_stays_zero(self):
        traj = integrate(MODEL, (0.0, 1.0), np.zeros(5), 0.05,
                         gauss_legendre_tableau(1))
        assert np.max(np.abs(traj.states)) == 0.0

    def test_endpoints_chain(self, decay_model):
        traj = integrate(decay_model, (0.0, 1.0), np.array([1.0]), 0.3,
                         gauss_legendre_tableau(2))
        for a, b in zip(traj.steps[:-1], traj.steps[1:]):
            assert np.array_equal(a.x_end, b.x0)
        assert traj.t_end == pytest.approx(1.0)
        assert len(traj.steps) == 4  # last step shortened to 0.1

    def test_dense_output_matches_stages_and_endpoint(self, decay_model):
        traj = integrate(decay_model, (0.0, 0.4), np.array([1.0]), 0.2,
                         gauss_legendre_tableau(3))
        rec = traj.steps[0]
        for i, ti in enumerate(rec.stage_times):
            assert traj.evaluate(ti) == pytest.approx(rec.stage_states[i],
                                                      abs=1e-14)
        assert traj.evaluate(0.2) == pytest.approx(rec.x_end, abs=1e-14)
        with pytest.raises(ValueError, match="outside"):
            traj.evaluate(0.5)

    def test_dense_output_accuracy(self, decay_model):
        # between grid points the polynomial is O(h^{s+1}) accurate,
        # without the endpoint superconvergence
        traj = integrate(decay_model, (0.0, 1.0), np.array([1.0]), 0.25,
                         gauss_legendre_tableau(3))
        for t in np.linspace(0.0, 1.0, 17):
            assert traj.evaluate(t)[0] == pytest.approx(np.exp(-t), abs=1e-5)

    def test_inconsistent_start_rejected(self):
        bad = np.array([1.0, 2.0, -1.0, 5.0, 5.0])
        with pytest.raises(ValueError, match="inconsistent"):
            integrate(MODEL, (0.0, 1.0), bad, 0.01,
                      gauss_legendre_tableau(1))

    def test_failure_names_step_index(self, quartic_model):
        with pytest.raises(NewtonError, match="step 1 at t=0"):
            integrate(quartic_model, (0.0, 1.0), np.array([1.0]), 0.5,
                      gauss_legendre_tableau(1),
                      newton=NewtonOptions(max_iter=0))

    def test_dissipation_sign_across_models(self, decay_model, quartic_model):
        for model, x0 in ((MODEL, consistent_init(
                MODEL, 0.0, np.array([1.0, 2.0, -1.0, 0, 0]), np.zeros(1))),
                (decay_model, np.array([1.5])),
                (quartic_model, np.array([0.8]))):
            traj = integrate(model, (0.0, 1.0), x0, 0.05,
                             gauss_legendre_tableau(2))
            for rec in traj.steps:
                assert rec.diss_sum <= 1e-12


class TestConsistentInit:
    def test_circuit_closed_form_zero_input(self):
        x = consistent_init(MODEL, 0.0, np.array([1.0, 2.0, -1.0, 0.0, 0.0]),
                            np.zeros(1))
        assert x[3] == pytest.approx(2.0 / PARAMS.R_G, abs=1e-12)
        assert x[4] == pytest.approx(-1.0 / PARAMS.R_R, abs=1e-12)
        assert np.array_equal(x[:3], [1.0, 2.0, -1.0])

    def test_circuit_with_input(self):
        u_star = 16.614250910990037
        x = consistent_init(MODEL, 0.0, np.array([1.0, 2.0, -1.0, 0.0, 0.0]),
                            np.array([u_star]))
        assert x[3] == pytest.approx((2.0 + u_star) / PARAMS.R_G, abs=1e-10)

    def test_zero_guess_zero_input(self):
        x = consistent_init(MODEL, 0.0, np.zeros(5), np.zeros(1))
        assert np.max(np.abs(x)) == 0.0

    def test_pure_ode_passthrough(self, decay_model):
        x = consistent_init(decay_model, 0.0, np.array([2.0]), np.zeros(0))
        assert x == pytest.approx([2.0])

    def test_ambiguous_split_needs_mask(self):
        # E maps both coordinates through one row: one algebraic row but
        # no structurally algebraic coordinate
        E = np.array([[1.0, 1.0], [0.0, 0.0]])
        J = np.zeros((2, 2))
        R = np.eye(2)
        model = lti_to_model(LTIModel(
            E=E, J=J, R=R, B=np.zeros((2, 0)), P=np.zeros((2, 0)),
            S=np.zeros((0, 0)), N=np.zeros((0, 0)),
            Z=E, w=np.zeros(2), Q=E.T @ E, v=np.zeros(2), c=0.0))
        with pytest.raises(ValueError, match="algebraic_mask"):
            consistent_init(model, 0.0, np.array([1.0, 0.5]), np.zeros(0))
        x = consistent_init(model, 0.0, np.array([1.0, 0.5]), np.zeros(0),
                            algebraic_mask=np.array([False, True]))
        assert x[0] == 1.0


class TestEnergyReport:
    def test_quadratic_exactness_any_tableau(self):
        x0 = consistent_init(MODEL, 0.0, np.array([1.0, 2.0, -1.0, 0, 0]),
                             np.zeros(1))
        for s in (1, 2, 3, 4, 5):
            rec = step(MODEL, 0.0, x0, 0.02, gauss_legendre_tableau(s))
            rep = discrete_energy_report(rec)
            assert abs(rep.residual) <= 1e-10 * (1 + abs(rep.delta_H))
            assert rep.dissipation_nonpositive

    def test_lossless_scalar_everything_vanishes(self, lossless_model):
        rec = step(lossless_model, 0.0, np.array([1.0]), 0.1,
                   gauss_legendre_tableau(1))
        rep = discrete_energy_report(rec)
        assert abs(rep.delta_H) <= 1e-14
        assert abs(rep.diss_sum) <= 1e-14
        assert rep.port_sum == 0.0
        assert abs(rep.residual) <= 1e-14

    def test_quartic_residual_halving_ratio(self, quartic_model):
        # nonquadratic energy: the balance defect is a pure quadrature
        # error, dropping roughly a factor 8 per halving at these sizes
        tab = gauss_legendre_tableau(1)
        residuals = {}
        for h in (0.05, 0.025, 0.0125):
            rec = step(quartic_model, 0.0, np.array([1.0]), h, tab)
            residuals[h] = discrete_energy_report(rec).residual
        for big, small in ((0.05, 0.025), (0.025, 0.0125)):
            ratio = abs(residuals[big]) / abs(residuals[small])
            assert 2.0 <= ratio <= 8.0


class TestConvergence:
    def test_decay_midpoint_second_order(self, decay_model):
        study = convergence_study(
            decay_model, (0.0, 2.0), np.array([1.0]),
            [0.2, 0.1, 0.05, 0.025], gauss_legendre_tableau(1),
            reference=lambda t: np.array([np.exp(-t)]))
        assert 1.9 <= study.order <= 2.1
        assert study.monotone

    def test_decay_two_stage_fourth_order(self, decay_model):
        study = convergence_study(
            decay_model, (0.0, 2.0), np.array([1.0]),
            [0.4, 0.2, 0.1], gauss_legendre_tableau(2),
            reference=lambda t: np.array([np.exp(-t)]))
        assert 3.7 <= study.order <= 4.3

    def test_circuit_midpoint_order_two_differential(self):
        x0 = consistent_init(MODEL, 0.0, np.array([1.0, 2.0, -1.0, 0, 0]),
                             np.zeros(1))
        ref = integrate(MODEL, (0.0, 2.0), x0, 1e-3,
                        gauss_legendre_tableau(3))
        study = convergence_study(
            MODEL, (0.0, 2.0), x0, [0.1, 0.05, 0.025, 0.0125],
            gauss_legendre_tableau(1), reference=ref,
            components=np.array([0, 1, 2]))
        assert 1.8 <= study.order <= 2.2
