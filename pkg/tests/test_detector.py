import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from conftest import detectable_system, masking_pair, spd
from secpriv.detector import (
    GLRTDetector,
    aggregate,
    batch_model,
    build_setup,
    build_structural,
    detection_parameters,
    glrt,
    glrt_statistic,
    glrt_statistic_direct,
    process,
    stack_attack,
    undetectable,
)
from secpriv.exceptions import DegenerateSetupError, InvalidInputError, NoTestPossibleError
from secpriv.linalg import pinv
from secpriv.privacy import PrivacyMechanism, random_mechanism
from secpriv.system import AttackSignal, InterconnectedSystem, SubsystemModel, simulate


def span_equal(A, B):
    PA = A @ np.linalg.pinv(A)
    PB = B @ np.linalg.pinv(B)
    return np.linalg.norm(PA - PB) < 1e-10


def random_case(seed, T=2):
    rng = np.random.default_rng(seed)
    sysm = detectable_system(rng)
    mechs = {j: random_mechanism(rng, sysm[j].p, int(rng.integers(1, sysm[j].p + 1))) for j in (1, 2)}
    return rng, sysm, mechs, build_setup(batch_model(sysm, mechs, T))


class TestStructure:
    def test_single_step(self):
        rng = np.random.default_rng(0)
        C, A, Z = rng.standard_normal((2, 3)), rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
        np.testing.assert_allclose(build_structural(Z, C, A, 1), C @ Z)

    def test_toeplitz_blocks(self):
        rng = np.random.default_rng(1)
        C, A, Z = rng.standard_normal((2, 3)), rng.standard_normal((3, 3)), rng.standard_normal((3, 1))
        F = build_structural(Z, C, A, 3)
        np.testing.assert_allclose(F[4:6, 0:1], C @ A @ A @ Z)
        np.testing.assert_allclose(F[4:6, 1:2], C @ A @ Z)
        np.testing.assert_allclose(F[4:6, 2:3], C @ Z)
        assert not F[0:2, 1:].any()

    def test_local_stack_matches_simulation(self):
        rng = np.random.default_rng(2)
        sysm = detectable_system(rng)
        T = 3
        vals = rng.standard_normal((T, 2))
        tr = simulate(sysm, AttackSignal(0, vals), T, seed=5)
        model = batch_model(sysm, {1: PrivacyMechanism.full(sysm[1].p), 2: PrivacyMechanism.full(sysm[2].p)}, T)
        sub = sysm[0]
        x_other = np.concatenate([tr.states[1], tr.states[2]], axis=1)[:T].reshape(-1)
        w = tr.process_noise[0].reshape(-1)
        v = (tr.outputs[0][1:] - tr.states[0][1:] @ sub.C.T).reshape(-1)
        recon = model.O @ tr.states[0][0] + model.F_x @ x_other + model.F_a @ (w + stack_attack(sub.Ba, vals)) + v
        np.testing.assert_allclose(recon, tr.outputs[0][1:].reshape(-1), atol=1e-9)


class TestMasking:
    def test_hidden_attack(self):
        system, mechs = masking_pair(shared_row=1)
        setup = build_setup(batch_model(system, mechs, 1))
        assert span_equal(setup.M, np.eye(3)[:, [1, 2]])
        assert np.linalg.norm(setup.M.T @ system[0].Ba) < 1e-12
        assert undetectable(system[0].Ba, system[0].B, mechs[1].S, system[1].C)

    def test_visible_attack(self):
        system, mechs = masking_pair(shared_row=0)
        setup = build_setup(batch_model(system, mechs, 1))
        assert span_equal(setup.M, np.eye(3)[:, [0, 2]])
        assert np.linalg.norm(setup.M.T @ system[0].Ba) > 0.5
        assert not undetectable(system[0].Ba, system[0].B, mechs[1].S, system[1].C)

    def test_single_step_structure(self):
        system, mechs = masking_pair(shared_row=0)
        model = batch_model(system, mechs, 1)
        np.testing.assert_allclose(model.F_x, system[0].B)
        np.testing.assert_allclose(model.F_a, np.eye(3))

    def test_shipped_config_matches(self, masking):
        hidden = build_setup(batch_model(masking.system, masking.mechanism_sets["second"], 1))
        visible = build_setup(batch_model(masking.system, masking.mechanism_sets["first"], 1))
        a = stack_attack(masking.system[0].Ba, masking.attack.values)
        assert detection_parameters(hidden, a)[1] == pytest.approx(0.0, abs=1e-20)
        assert detection_parameters(visible, a)[1] > 1.0

    def test_zero_attack_matrix_is_vacuously_undetectable(self):
        assert undetectable(np.zeros((3, 1)), np.eye(3)[:, :2], np.eye(2), np.eye(2))

    def test_elimination_timing(self):
        import time

        t0 = time.perf_counter()
        for row in (0, 1):
            system, mechs = masking_pair(row)
            build_setup(batch_model(system, mechs, 1))
        assert time.perf_counter() - t0 < 1.0


class TestProcessing:
    def test_noise_free_attack_free_is_zero(self):
        rng, sysm, mechs, setup = random_case(3)
        subs = [SubsystemModel(s.A, s.B, s.C, s.Ba, 1e-300 * np.eye(s.n), 1e-300 * np.eye(s.p), np.zeros((s.n, s.n))) for s in sysm.subsystems]
        mechs0 = {j: PrivacyMechanism(m.S, 1e-300 * np.eye(m.m)) for j, m in mechs.items()}
        # nonzero neighbour start: the elimination must cancel its influence
        subs[1] = SubsystemModel(subs[1].A, subs[1].B, subs[1].C, subs[1].Ba, subs[1].Sigma_w, subs[1].Sigma_v, np.eye(subs[1].n))
        quiet = InterconnectedSystem(subs)
        tr = simulate(quiet, None, 2, seed=1)
        setup0 = build_setup(batch_model(quiet, mechs0, 2))
        z = process(aggregate(tr, mechs0, model=setup0.model), setup0)
        assert np.abs(z).max() < 1e-10 * (1 + np.abs(tr.outputs[1]).max())

    def test_elimination_residual(self):
        for seed in range(10):
            setup = random_case(seed)[3]
            assert setup.elimination_residual < 1e-9

    def test_mean_under_attack(self):
        rng, sysm, mechs, setup = random_case(4)
        vals = rng.standard_normal((2, 2))
        a = stack_attack(sysm[0].Ba, vals)
        tr0 = simulate(sysm, None, 2, seed=9, n_trials=4)
        tr1 = simulate(sysm, AttackSignal(0, vals), 2, seed=9, n_trials=4)
        z0 = process(aggregate(tr0, mechs, model=setup.model), setup)
        z1 = process(aggregate(tr1, mechs, model=setup.model), setup)
        np.testing.assert_allclose(z1 - z0, np.tile(setup.M1 @ a, (4, 1)), atol=1e-9)

    def test_processed_covariance_by_simulation(self):
        rng, sysm, mechs, setup = random_case(5)
        tr = simulate(sysm, None, 2, seed=17, n_trials=60000)
        z = process(aggregate(tr, mechs, model=setup.model), setup)
        emp = np.cov(z.T)
        rel = np.linalg.norm(emp - setup.Sigma_vP) / np.linalg.norm(setup.Sigma_vP)
        assert rel < 0.03
        assert np.abs(z.mean(axis=0)).max() < 0.05 * np.sqrt(np.diag(setup.Sigma_vP)).max()

    def test_basis_invariance(self):
        rng, sysm, mechs, setup = random_case(6)
        G = rng.standard_normal((setup.M.shape[1],) * 2) + 3 * np.eye(setup.M.shape[1])
        other = build_setup(setup.model, basis=setup.M @ G)
        np.testing.assert_allclose(other.Lambda, setup.Lambda, rtol=1e-8, atol=1e-10)
        tr = simulate(sysm, None, 2, seed=0, n_trials=5)
        b = aggregate(tr, mechs, model=setup.model)
        np.testing.assert_allclose(glrt_statistic(process(b, other), other), glrt_statistic(process(b, setup), setup), rtol=1e-8)

    def test_degenerate(self):
        rng = np.random.default_rng(0)
        from secpriv.system import random_system

        sysm = random_system(rng, (3, 2, 2), output_dims=(1, 2, 2))
        none = {j: PrivacyMechanism(np.zeros((0, 2))) for j in (1, 2)}
        with pytest.raises(DegenerateSetupError):
            build_setup(batch_model(sysm, none, 1))

    def test_bad_basis(self):
        setup = random_case(1)[3]
        with pytest.raises(InvalidInputError):
            build_setup(setup.model, basis=np.zeros((setup.model.local_dim, 1)))


class TestStatistic:
    def test_zero_input(self):
        setup = random_case(7)[3]
        res = glrt(np.zeros(setup.M.shape[1]), setup, 0.3)
        assert res.statistic == 0.0 and res.decision == "H0" and not res.alarm

    @pytest.mark.parametrize("seed", range(8))
    def test_direct_form(self, seed):
        rng, sysm, mechs, setup = random_case(seed)
        z = rng.standard_normal((20, setup.M.shape[1])) * 3
        np.testing.assert_allclose(glrt_statistic(z, setup), glrt_statistic_direct(z, setup), rtol=1e-8)

    def test_no_test_possible(self):
        s1 = SubsystemModel(np.eye(2), np.zeros((2, 0)), np.zeros((2, 2)), np.eye(2)[:, :1], np.eye(2), np.eye(2), np.eye(2))
        setup = build_setup(batch_model(InterconnectedSystem([s1]), {}, 2))
        assert setup.q == 0
        with pytest.raises(NoTestPossibleError):
            glrt(np.zeros(setup.M.shape[1]), setup)

    def test_detection_parameters(self):
        system, mechs = masking_pair(shared_row=1)
        setup = build_setup(batch_model(system, mechs, 1))
        assert detection_parameters(setup, np.zeros(3)) == (setup.q, 0.0)
        assert detection_parameters(setup, [5.0, 0.0, 0.0])[1] == pytest.approx(0.0, abs=1e-20)
        with pytest.raises(InvalidInputError):
            detection_parameters(setup, np.zeros(4))

    def test_q_is_rank_of_processed_attack_map(self):
        for seed in range(6):
            setup = random_case(seed)[3]
            assert setup.q == np.linalg.matrix_rank(setup.M1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 4))
def test_weighted_least_squares_solution_and_cost(seed, n, extra):
    rng = np.random.default_rng(seed)
    m = n + extra
    r = int(rng.integers(1, n + 1))
    H = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    Sigma = spd(rng, m, 0.1)
    y = rng.standard_normal(m)
    Si = np.linalg.inv(Sigma)
    Ht = H.T @ Si @ H
    Htp = pinv(Ht)
    x = Htp @ H.T @ Si @ y
    W = np.linalg.cholesky(Si).T
    brute = np.linalg.lstsq(W @ H, W @ y, rcond=None)[0]
    cost = lambda v: (y - H @ v) @ Si @ (y - H @ v)
    assert cost(x) == pytest.approx(cost(brute), rel=1e-8, abs=1e-10)
    assert cost(x) == pytest.approx(y @ (Si - Si @ H @ Htp @ H.T @ Si) @ y, rel=1e-7, abs=1e-9)
    d = rng.standard_normal(n)
    assert cost(x + (np.eye(n) - Htp @ Ht) @ d) == pytest.approx(cost(x), rel=1e-7, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 4))
def test_weighted_gram_pinv_identity(seed, m, extra):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((m, m + extra))
    Sigma = spd(rng, m, 0.1)
    lhs = pinv(H.T @ np.linalg.inv(Sigma) @ H)
    rhs = pinv(H) @ Sigma @ pinv(H).T
    np.testing.assert_allclose(lhs, rhs, atol=1e-8 * (1 + np.abs(rhs).max()))


class TestEstimator:
    def fitted(self, seed=2, T=2):
        rng, sysm, mechs, setup = random_case(seed, T)
        return rng, sysm, mechs, GLRTDetector(sysm, mechs, horizon=T, p_false_alarm=0.1).fit()

    def test_predict_matches_functional_api(self):
        rng, sysm, mechs, det = self.fitted()
        tr = simulate(sysm, AttackSignal(0, np.full((2, 2), 1.5)), 2, seed=3, n_trials=200)
        batch = aggregate(tr, mechs, model=det.setup_.model)
        res = glrt(process(batch, det.setup_), det.setup_, 0.1)
        np.testing.assert_array_equal(det.predict(batch.features()), res.alarm.astype(int))
        np.testing.assert_allclose(det.decision_function(batch.features()), res.statistic)
        assert det.transform(batch.features()).shape == (200, det.setup_.M.shape[1])

    def test_params_and_clone(self):
        _, sysm, mechs, det = self.fitted()
        params = det.get_params()
        assert params["horizon"] == 2 and params["p_false_alarm"] == 0.1
        c = clone(det)
        assert not hasattr(c, "setup_")
        c.set_params(p_false_alarm=0.01).fit()
        assert c.threshold_ > det.threshold_

    def test_unfitted_and_bad_shape(self):
        from sklearn.exceptions import NotFittedError

        _, sysm, mechs, det = self.fitted()
        with pytest.raises(NotFittedError):
            GLRTDetector(sysm, mechs).transform(np.zeros((1, 3)))
        with pytest.raises(InvalidInputError):
            det.predict(np.zeros((2, det.n_features_in_ + 1)))
        with pytest.raises(InvalidInputError):
            GLRTDetector().fit()

    def test_analytic_detection_probability(self):
        _, sysm, mechs, det = self.fitted()
        assert det.detection_probability(np.zeros(det.setup_.model.attack_dim)) == pytest.approx(0.1)
