"""Entropy-bound engine: objective, constraints, Frank-Wolfe sandwich."""

import numpy as np
import pytest

from dmcv_qkd.constellation import qpsk_constellation
from dmcv_qkd.fock import thermal_diagonal
from dmcv_qkd.regions import region_operators
from dmcv_qkd.sdp import (
    InfeasibleModelError,
    MomentConstraints,
    canonical_constraints,
    constraint_operators,
    dual_lower_bound,
    feasible_point,
    frank_wolfe,
    honest_pure_loss_state,
    kraus_operator,
    objective_and_gradient,
    projected_moments,
)

ALPHA = 0.74787
T_LINE = 0.495


def partial_trace_b(rho, dim):
    return np.einsum("jmkm->jk", rho.reshape(4, dim, 4, dim))


def make_instance(dim, mu1=2e-3, mu2=1e-2, weight=1e-3, noise_s=0.0):
    """Pure-loss honest instance at cutoff dim, optionally mixed with an
    uncorrelated thermal background to emulate excess noise."""
    alphas = np.array(qpsk_constellation(ALPHA).points)
    rho, rho_a = honest_pure_loss_state(alphas, T_LINE, dim)
    if noise_s:
        tau = thermal_diagonal(0.3, dim)
        tau = tau / tau.sum()
        background = np.kron(np.diag(np.diag(rho_a).real), np.diag(tau))
        rho = (1.0 - noise_s) * rho + noise_s * background
    beta = np.sqrt(T_LINE) * alphas
    n1, n2 = projected_moments(rho, beta, dim)
    cons = canonical_constraints(beta, n1, n2, mu1, mu2, rho_a, weight)
    return rho, cons, beta


@pytest.fixture(scope="module")
def regions3():
    return region_operators(5.0, 0.0, 3)


class TestConstraintConstruction:
    def test_interval_order_enforced(self):
        beta = np.array([0.1 + 0.1j, -0.1 + 0.1j, -0.1 - 0.1j, 0.1 - 0.1j])
        with pytest.raises(ValueError):
            MomentConstraints(
                beta=beta,
                n1_lo=np.full(4, 0.2), n1_hi=np.full(4, 0.1),
                n2_lo=np.zeros(4), n2_hi=np.ones(4),
                rho_a=np.eye(4) / 4, weight=0.0)

    def test_weight_range_enforced(self):
        beta = np.array([0.1 + 0.1j, -0.1 + 0.1j, -0.1 - 0.1j, 0.1 - 0.1j])
        with pytest.raises(ValueError):
            MomentConstraints(
                beta=beta,
                n1_lo=np.zeros(4), n1_hi=np.ones(4),
                n2_lo=np.zeros(4), n2_hi=np.ones(4),
                rho_a=np.eye(4) / 4, weight=1.5)

    def test_canonical_endpoints(self):
        beta = np.array([0.3 + 0.3j, -0.3 + 0.3j, -0.3 - 0.3j, 0.3 - 0.3j])
        n1 = np.full(4, 0.10)
        n2 = np.full(4, 0.05)
        cons = canonical_constraints(beta, n1, n2, 0.01, 0.02,
                                     np.eye(4) / 4, weight=1e-3,
                                     norms=(24.5, 600.25))
        assert np.allclose(cons.n1_lo, 0.25 * 0.09 - 1e-3 * 24.5)
        assert np.allclose(cons.n1_hi, 0.25 * 0.11)
        assert np.allclose(cons.n2_lo, 0.25 * 0.03 - 1e-3 * 600.25)
        assert np.allclose(cons.n2_hi, 0.25 * 0.07)

    def test_verbatim_mode_needs_wide_weight_slack(self):
        beta = np.array([0.3 + 0.3j, -0.3 + 0.3j, -0.3 - 0.3j, 0.3 - 0.3j])
        n1 = np.full(4, 0.10)
        n2 = np.full(4, 0.05)
        # printed pair is a nonempty interval only when 2 p mu <= w ||X||
        cons = canonical_constraints(beta, n1, n2, 0.01, 0.01,
                                     np.eye(4) / 4, weight=1e-3,
                                     norms=(24.5, 600.25), mode="verbatim")
        wide = canonical_constraints(beta, n1, n2, 0.01, 0.01,
                                     np.eye(4) / 4, weight=1e-3,
                                     norms=(24.5, 600.25))
        assert np.all(cons.n1_lo >= wide.n1_lo - 1e-15)
        assert np.all(cons.n1_hi <= wide.n1_hi + 1e-15)
        with pytest.raises(ValueError):
            canonical_constraints(beta, n1, n2, 0.01, 0.01,
                                  np.eye(4) / 4, weight=1e-4,
                                  norms=(24.5, 600.25), mode="verbatim")

    def test_unknown_mode(self):
        beta = np.array([0.3 + 0.3j, -0.3 + 0.3j, -0.3 - 0.3j, 0.3 - 0.3j])
        with pytest.raises(ValueError):
            canonical_constraints(beta, np.zeros(4), np.zeros(4), 0.1, 0.1,
                                  np.eye(4) / 4, mode="exact")

    def test_operator_block_structure(self):
        _, cons, _ = make_instance(4)
        ops = constraint_operators(cons, 4)
        assert len(ops) == 8
        for j, op in enumerate(ops):
            assert np.max(np.abs(op - op.conj().T)) < 1e-12
            blocks = op.reshape(4, 4, 4, 4)
            for a in range(4):
                for b in range(4):
                    if (a, b) != (j % 4, j % 4):
                        assert np.max(np.abs(blocks[a, :, b, :])) == 0.0


class TestObjective:
    def test_kraus_is_isometry(self, regions3):
        K = kraus_operator(regions3)
        assert K.shape == (5 * 16, 16)
        assert np.max(np.abs(K.conj().T @ K - np.eye(16))) < 1e-10

    def test_kraus_is_isometry_trusted(self):
        ops = region_operators(5.0, 0.0, 3, mode="trusted", eta=0.7,
                               nu_el=0.1)
        K = kraus_operator(ops)
        assert np.max(np.abs(K.conj().T @ K - np.eye(16))) < 1e-10

    def test_product_state_gives_two_bits(self, regions3):
        # A uncorrelated with the key outcome and B pure: H(X|E) = H(X),
        # and Fock-diagonal B states answer the four quadrants uniformly
        rho_a = np.diag([0.25, 0.25, 0.25, 0.25])
        vac = np.zeros((4, 4))
        vac[0, 0] = 1.0
        rho = np.kron(rho_a, vac)
        K = kraus_operator(regions3)
        f, _ = objective_and_gradient(rho, K)
        assert abs(f - 2.0) < 1e-8

    def test_nonnegative_on_random_states(self, regions3):
        K = kraus_operator(regions3)
        rng = np.random.default_rng(11)
        for _ in range(1000):
            g = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
            rho = g @ g.conj().T
            rho /= np.trace(rho).real
            f, _ = objective_and_gradient(rho, K)
            assert f > -1e-9

    def test_gradient_matches_finite_differences(self, regions3):
        K = kraus_operator(regions3)
        rho, _, _ = make_instance(4)
        rho = 0.9 * rho / np.trace(rho).real + 0.1 * np.eye(16) / 16
        _, grad = objective_and_gradient(rho, K)
        h = 1e-5
        worst = 0.0
        for j in range(16):
            for k in range(j, 16):
                if j == k:
                    bases = [np.outer(np.eye(16)[j], np.eye(16)[j])]
                else:
                    e = np.zeros((16, 16))
                    e[j, k] = 1.0
                    bases = [(e + e.T) / 2, (1j * e + (1j * e).conj().T) / 2]
                for b in bases:
                    fp, _ = objective_and_gradient(rho + h * b, K)
                    fm, _ = objective_and_gradient(rho - h * b, K)
                    fd = (fp - fm) / (2 * h)
                    an = float(np.real(np.trace(grad @ b)))
                    worst = max(worst, abs(fd - an))
        assert worst < 1e-6

    def test_nan_input_raises(self, regions3):
        K = kraus_operator(regions3)
        bad = np.full((16, 16), np.nan, dtype=complex)
        with pytest.raises(FloatingPointError):
            objective_and_gradient(bad, K)


class TestFrankWolfe:
    def test_sandwich_and_gap_pure_loss(self, regions3):
        _, cons, _ = make_instance(4)
        rep = frank_wolfe(cons, regions3, tol=1e-4, max_iter=60)
        assert rep.lower_bound <= rep.upper_bound
        assert rep.upper_bound - rep.lower_bound < 1e-3
        assert not rep.dual_clamped
        assert 0.0 < rep.lower_bound < 2.0

    def test_objective_trace_monotone(self, regions3):
        _, cons, _ = make_instance(4)
        rep = frank_wolfe(cons, regions3, tol=1e-4, max_iter=60)
        diffs = np.diff(np.asarray(rep.objective_trace))
        assert np.all(diffs <= 1e-9)

    def test_point_constraints_bound_known_state(self, regions3):
        dim = 4
        rho, _, beta = make_instance(dim)
        sigma = rho / np.trace(rho).real
        rho_a = partial_trace_b(sigma, dim)
        ops_n = constraint_operators(
            MomentConstraints(beta=beta,
                              n1_lo=np.zeros(4), n1_hi=np.ones(4),
                              n2_lo=np.zeros(4), n2_hi=np.ones(4),
                              rho_a=rho_a, weight=0.0), dim)
        vals = np.array([float(np.real(np.trace(op @ sigma)))
                         for op in ops_n])
        cons = MomentConstraints(
            beta=beta,
            n1_lo=vals[:4], n1_hi=vals[:4],
            n2_lo=vals[4:], n2_hi=vals[4:],
            rho_a=rho_a, weight=0.0)
        K = kraus_operator(regions3)
        f_sigma, _ = objective_and_gradient(sigma, K)
        rep = frank_wolfe(cons, regions3, tol=1e-4, max_iter=40)
        assert rep.upper_bound <= f_sigma + 1e-3
        assert rep.lower_bound <= f_sigma + 1e-9

    def test_widening_intervals_never_raises_upper(self, regions3):
        uppers = []
        for mu1 in (1e-3, 4e-3, 1.6e-2):
            _, cons, _ = make_instance(4, mu1=mu1, mu2=4 * mu1)
            rep = frank_wolfe(cons, regions3, tol=1e-4, max_iter=40)
            uppers.append(rep.upper_bound)
        assert uppers[1] <= uppers[0] + 3e-4
        assert uppers[2] <= uppers[1] + 3e-4

    @pytest.mark.slow
    @pytest.mark.parametrize("n_c", [3, 4, 5])
    def test_noise_monotonicity(self, n_c):
        regions = region_operators(5.0, 0.0, n_c)
        lowers = []
        for s in (0.0, 0.05, 0.15):
            _, cons, _ = make_instance(n_c + 1, noise_s=s)
            rep = frank_wolfe(cons, regions, tol=2e-4, max_iter=12)
            lowers.append(rep.lower_bound)
        assert lowers[1] <= lowers[0] + 3e-4
        assert lowers[2] <= lowers[1] + 3e-4

    def test_grid_oracle_brackets_lower_bound(self):
        dim = 2
        regions = region_operators(5.0, 0.0, 1)
        _, cons, _ = make_instance(dim, mu1=5e-3, mu2=2e-2, weight=1e-2)
        rep = frank_wolfe(cons, regions, tol=1e-4, max_iter=40)
        K = kraus_operator(regions)
        anchor = feasible_point(cons, dim)
        best = np.inf
        for theta in np.linspace(0.0, 1.0, 21):
            mix = theta * rep.rho + (1.0 - theta) * anchor
            f, _ = objective_and_gradient(mix, K)
            best = min(best, f)
        assert rep.lower_bound <= best + 1e-6

    def test_infeasible_certificate(self, regions3):
        _, cons, beta = make_instance(4)
        ops = constraint_operators(cons, 4)
        top = max(np.linalg.eigvalsh(op).max() for op in ops[:4])
        bad = MomentConstraints(
            beta=beta,
            n1_lo=np.full(4, top + 1.0), n1_hi=np.full(4, top + 1.1),
            n2_lo=np.zeros(4), n2_hi=np.full(4, 1e3),
            rho_a=cons.rho_a, weight=1e-3)
        with pytest.raises(InfeasibleModelError):
            frank_wolfe(bad, regions3, tol=1e-4, max_iter=10)

    def test_report_serialization(self, regions3):
        _, cons, _ = make_instance(4)
        rep = frank_wolfe(cons, regions3, tol=2e-4, max_iter=20)
        blob = rep.to_json()
        for key in ("upper_bound", "lower_bound", "gap", "fw_gap",
                    "iterations", "status", "dual_clamped"):
            assert key in blob
        assert blob["gap"] == pytest.approx(
            blob["upper_bound"] - blob["lower_bound"])

    def test_dual_bound_valid_at_crude_iterate(self, regions3):
        # the certificate must hold at any PSD iterate, not only optima
        _, cons, _ = make_instance(4)
        ref = frank_wolfe(cons, regions3, tol=1e-4, max_iter=60)
        crude = frank_wolfe(cons, regions3, tol=1e-4, max_iter=2)
        assert crude.lower_bound <= ref.upper_bound + 1e-9


class TestHonestStateFeasibility:
    def test_cutoff_projection_inside_point_set(self):
        dim = 11
        alphas = np.array(qpsk_constellation(ALPHA).points)
        rho, rho_a = honest_pure_loss_state(alphas, T_LINE, dim)
        beta = np.sqrt(T_LINE) * alphas
        n1, n2 = projected_moments(rho, beta, dim)
        cons = canonical_constraints(beta, n1, n2, 0.0, 0.0, rho_a, 0.0)
        ops = constraint_operators(cons, dim)
        vals = np.array([float(np.real(np.trace(op @ rho))) for op in ops])
        lo = np.concatenate([cons.n1_lo, cons.n2_lo])
        hi = np.concatenate([cons.n1_hi, cons.n2_hi])
        assert np.all(vals >= lo - 1e-9)
        assert np.all(vals <= hi + 1e-9)
        assert abs(np.trace(rho).real - 1.0) < 1e-9
        gap = partial_trace_b(rho, dim) - rho_a
        assert np.abs(np.linalg.eigvalsh(gap)).sum() < 1e-9

    def test_feasibility_presolve_succeeds(self):
        dim = 11
        alphas = np.array(qpsk_constellation(ALPHA).points)
        rho, rho_a = honest_pure_loss_state(alphas, T_LINE, dim)
        beta = np.sqrt(T_LINE) * alphas
        n1, n2 = projected_moments(rho, beta, dim)
        cons = canonical_constraints(beta, n1, n2, 0.0, 0.0, rho_a, 0.0)
        point = feasible_point(cons, dim)
        assert np.linalg.eigvalsh(point).min() > -1e-10
        assert abs(np.trace(point).real - 1.0) < 1e-6
