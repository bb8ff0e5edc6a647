"""Key-map region operators: closed-form anchors, completeness, symmetry."""

import numpy as np
import pytest

from dmcv_qkd.fock import coherent_vector, displacement, ladder, number
from dmcv_qkd.regions import QuadratureConvergenceError, region_operators


class TestFockBasics:
    def test_number_diagonal(self):
        n = number(7)
        assert np.allclose(n, np.diag(np.arange(7)))

    def test_ladder_shifts_with_sqrt_weights(self):
        a = ladder(6)
        vac = np.zeros(6)
        vac[0] = 1.0
        one = a.conj().T @ vac
        assert abs(one[1] - 1.0) < 1e-15
        two = a.conj().T @ one
        assert abs(two[2] - np.sqrt(2.0)) < 1e-15

    def test_displacement_unitary_away_from_corner(self):
        d = displacement(0.5 + 0.2j, 30)
        err = d.conj().T @ d - np.eye(30)
        assert np.max(np.abs(err[:15, :15])) < 1e-10

    def test_displacement_moves_vacuum_to_coherent(self):
        alpha = 0.7 - 0.3j
        d = displacement(alpha, 25)
        vac = np.zeros(25)
        vac[0] = 1.0
        assert np.max(np.abs(d @ vac - coherent_vector(alpha, 25))) < 1e-12


@pytest.fixture(scope="module")
def ideal_m5():
    return region_operators(5.0, 0.0, 3)


class TestIdealRegions:
    def test_vacuum_element_closed_form(self, ideal_m5):
        # (1/pi) * int over one quadrant of |<0|zeta>|^2 d^2 zeta
        #   = (1/4) * int_0^M 2 r e^{-r^2} dr = (1 - e^{-M^2})/4
        want = 0.25 * (1.0 - np.exp(-25.0))
        for z in range(4):
            assert abs(ideal_m5.R[z][0, 0].real - want) < 1e-12

    def test_completeness_large_m(self):
        ops = region_operators(40.0, 0.0, 3)
        total = ops.R.sum(axis=0)
        assert np.max(np.abs(total - np.eye(4))) < 1e-9

    def test_perp_complements_exactly(self, ideal_m5):
        total = ideal_m5.R.sum(axis=0) + ideal_m5.R_perp
        assert np.max(np.abs(total - np.eye(4))) < 1e-13

    def test_four_fold_symmetry(self, ideal_m5):
        # quarter-turn phase rotation maps each quadrant to the next
        u = np.diag(np.exp(1j * np.pi / 2 * np.arange(4)))
        for z in range(4):
            rot = u @ ideal_m5.R[z] @ u.conj().T
            assert np.max(np.abs(rot - ideal_m5.R[(z + 1) % 4])) < 1e-12

    @pytest.mark.parametrize("bound_m,delta_r", [
        (5.0, 0.0), (5.0, 0.4), (2.0, 0.0), (1.2, 0.3),
    ])
    def test_psd_and_completeness_grid(self, bound_m, delta_r):
        ops = region_operators(bound_m, delta_r, 4)
        for z in range(4):
            assert np.linalg.eigvalsh(ops.R[z]).min() > -1e-10
        assert np.linalg.eigvalsh(ops.R_perp).min() > -1e-10
        total = ops.R.sum(axis=0) + ops.R_perp
        assert np.max(np.abs(total - np.eye(5))) < 1e-13

    def test_inner_discard_grows_with_delta_r(self):
        traces = []
        for dr in (0.0, 0.3, 0.8):
            ops = region_operators(5.0, dr, 3)
            traces.append(float(np.trace(ops.R_perp).real))
        assert traces[0] < traces[1] < traces[2]

    def test_hermitian(self, ideal_m5):
        for z in range(4):
            assert np.max(np.abs(ideal_m5.R[z] - ideal_m5.R[z].conj().T)) < 1e-14

    def test_coherent_state_lands_in_its_quadrant(self, ideal_m5):
        # |zeta> centered in quadrant z should weight R_z the most
        for z in range(4):
            zeta = 2.0 * np.exp(1j * (np.pi / 4 + z * np.pi / 2))
            ket = coherent_vector(zeta, 4)
            masses = [float((ket.conj() @ ideal_m5.R[q] @ ket).real)
                      for q in range(4)]
            assert int(np.argmax(masses)) == z


class TestTrustedRegions:
    def test_ideal_limit(self, ideal_m5):
        ops = region_operators(5.0, 0.0, 3, mode="trusted", eta=1.0, nu_el=0.0)
        for z in range(4):
            assert np.max(np.abs(ops.R[z] - ideal_m5.R[z])) < 1e-11

    def test_psd_and_completeness(self):
        ops = region_operators(5.0, 0.0, 6, mode="trusted", eta=0.7, nu_el=0.1)
        for z in range(4):
            assert np.linalg.eigvalsh(ops.R[z]).min() > -1e-9
        assert np.linalg.eigvalsh(ops.R_perp).min() > -1e-9
        total = ops.R.sum(axis=0) + ops.R_perp
        assert np.max(np.abs(total - np.eye(7))) < 1e-13

    def test_four_fold_symmetry(self):
        ops = region_operators(5.0, 0.0, 4, mode="trusted", eta=0.684,
                               nu_el=0.0945)
        u = np.diag(np.exp(1j * np.pi / 2 * np.arange(5)))
        for z in range(4):
            rot = u @ ops.R[z] @ u.conj().T
            assert np.max(np.abs(rot - ops.R[(z + 1) % 4])) < 1e-11

    def test_noise_spreads_vacuum_mass_outward(self, ideal_m5):
        # detection noise pushes part of the vacuum into the quadrants'
        # far field; the <0|R_z|0> element cannot grow above ideal + tol
        ops = region_operators(5.0, 0.0, 3, mode="trusted", eta=0.7,
                               nu_el=0.1)
        total_ideal = sum(float(ideal_m5.R[z][0, 0].real) for z in range(4))
        total_noisy = sum(float(ops.R[z][0, 0].real) for z in range(4))
        assert total_noisy <= total_ideal + 1e-9


class TestValidation:
    def test_bound_must_exceed_inner_radius(self):
        with pytest.raises(ValueError):
            region_operators(0.5, 0.5, 3)
        with pytest.raises(ValueError):
            region_operators(1.0, 2.0, 3)

    def test_cutoff_positive(self):
        with pytest.raises(ValueError):
            region_operators(5.0, 0.0, 0)

    def test_mode_checked(self):
        with pytest.raises(ValueError):
            region_operators(5.0, 0.0, 3, mode="other")

    def test_trusted_params_checked(self):
        with pytest.raises(ValueError):
            region_operators(5.0, 0.0, 3, mode="trusted", eta=0.0, nu_el=0.0)
        with pytest.raises(ValueError):
            region_operators(5.0, 0.0, 3, mode="trusted", eta=0.7, nu_el=-0.1)

    def test_quadrature_nonconvergence_raises(self):
        with pytest.raises(QuadratureConvergenceError):
            region_operators(5.0, 0.0, 3, tol=1e-18, max_nodes=256)
