import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import chisquare

from mpstomo import (
    Dataset,
    DegenerateStateError,
    MatrixProductState,
    MeasurementBasis,
    ParameterError,
    Shot,
    draw_noisy_shot,
    draw_noisy_shots,
    draw_shot,
    draw_shots,
    fixed_bases,
    random_init,
    random_target,
    sample_bases,
    sample_basis,
    w_state,
)
from mpstomo.oracle import DenseState, dense_probabilities
from mpstomo.rotations import rotation_matrices, rotation_matrix, spin_operators, wigner_d, wigner_d_matrix


def outcome_codes(dataset):
    n = dataset.n_sites
    weights = dataset.local_dim ** np.arange(n - 1, -1, -1)
    return (dataset.outcome_indices * weights).sum(axis=1)


class TestWignerD:
    def test_spin_half_elements(self):
        for theta in (0.0, 0.4, 1.7, 3.0):
            assert abs(wigner_d(0.5, 0.5, 0.5, theta) - np.cos(theta / 2)) < 1e-12
            assert abs(wigner_d(0.5, -0.5, 0.5, theta) - np.sin(theta / 2)) < 1e-12
            assert abs(wigner_d(0.5, 0.5, -0.5, theta) + np.sin(theta / 2)) < 1e-12

    def test_identity_at_zero(self):
        for s in (0.5, 1.0, 1.5):
            np.testing.assert_array_equal(wigner_d_matrix(s, 0.0), np.eye(int(2 * s) + 1))

    def test_spin_one_quarter_turn_orthogonal(self):
        d = wigner_d_matrix(1.0, np.pi / 2)
        np.testing.assert_allclose(d @ d.T, np.eye(3), atol=1e-12)

    @pytest.mark.parametrize("s", [0.5, 1.0, 1.5])
    def test_matches_matrix_exponential(self, s):
        _, sy, _ = spin_operators(s)
        for theta in (0.3, 1.1, 2.8, -0.9):
            np.testing.assert_allclose(
                wigner_d_matrix(s, theta), expm(-1j * theta * sy).real, atol=1e-12
            )

    def test_composition(self, rng):
        for s in (0.5, 1.0, 1.5):
            t1, t2 = rng.uniform(0, np.pi, 2)
            lhs = wigner_d_matrix(s, t1) @ wigner_d_matrix(s, t2)
            np.testing.assert_allclose(lhs, wigner_d_matrix(s, t1 + t2), atol=1e-10)


class TestRotationMatrix:
    def test_z_direction_exact_identity(self):
        np.testing.assert_array_equal(rotation_matrix((0.0, 0.0), 0.5), np.eye(2))
        np.testing.assert_array_equal(rotation_matrix((0.0, 2.1), 0.5), np.eye(2))

    def test_x_direction_columns(self):
        u = rotation_matrix((np.pi / 2, 0.0), 0.5)
        # columns of U^dagger are the x eigenstates
        assert abs(abs(u.conj().T[0, 0]) ** 2 - 0.5) < 1e-12

    @pytest.mark.parametrize("s", [0.5, 1.0, 1.5])
    def test_unitary(self, s, rng):
        q = int(2 * s) + 1
        for _ in range(5):
            u = rotation_matrix((rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)), s)
            np.testing.assert_allclose(u @ u.conj().T, np.eye(q), atol=1e-12)

    @pytest.mark.parametrize("s", [0.5, 1.0])
    def test_maps_spin_direction_eigenvectors_to_z(self, s, rng):
        sx, sy, sz = spin_operators(s)
        q = int(2 * s) + 1
        for _ in range(5):
            th = rng.uniform(0, np.pi)
            ph = rng.uniform(0, 2 * np.pi)
            u = rotation_matrix((th, ph), s)
            ns = np.sin(th) * np.cos(ph) * sx + np.sin(th) * np.sin(ph) * sy + np.cos(th) * sz
            evals, evecs = np.linalg.eigh(ns)
            for i, m in enumerate(evals):
                p = round(s - m)
                out = u @ evecs[:, i]
                assert abs(abs(out[p]) - 1.0) < 1e-10

    def test_batch_matches_single(self, rng):
        thetas = rng.uniform(0, np.pi, 7)
        phis = rng.uniform(0, 2 * np.pi, 7)
        batch = rotation_matrices(thetas, phis, 0.5)
        for i in range(7):
            np.testing.assert_allclose(batch[i], rotation_matrix((thetas[i], phis[i]), 0.5), atol=1e-14)


class TestSampleBasis:
    def test_uniform_direction_statistics(self):
        rng = np.random.default_rng(7)
        thetas, phis = sample_bases(100_000, 1, rng)
        nx = np.sin(thetas) * np.cos(phis)
        ny = np.sin(thetas) * np.sin(phis)
        nz = np.cos(thetas)
        for comp in (nx, ny, nz):
            assert abs(comp.mean()) < 0.02
        assert abs(np.cos(thetas).mean()) < 0.02

    def test_deterministic(self):
        a = sample_basis(5, np.random.default_rng(3))
        b = sample_basis(5, np.random.default_rng(3))
        np.testing.assert_array_equal(a.thetas, b.thetas)
        np.testing.assert_array_equal(a.phis, b.phis)

    def test_angle_ranges(self):
        rng = np.random.default_rng(0)
        thetas, phis = sample_bases(1000, 3, rng)
        assert thetas.min() >= 0 and thetas.max() <= np.pi
        assert phis.min() >= 0 and phis.max() < 2 * np.pi


class TestDrawShot:
    def test_deterministic_product_target(self):
        up = np.array([1.0, 0.0]).reshape(1, 2, 1)
        target = MatrixProductState([up] * 4)
        rng = np.random.default_rng(2)
        ds = draw_shots(target, MeasurementBasis.all_z(4), 500, rng)
        assert np.all(ds.outcome_indices == 0)

    def test_w2_z_basis_probabilities(self):
        target = w_state(2, 0.0)
        rng = np.random.default_rng(5)
        ds = draw_shots(target, MeasurementBasis.all_z(2), 100_000, rng)
        freq = np.bincount(outcome_codes(ds), minlength=4) / len(ds)
        assert freq[0b00] == 0.0 and freq[0b11] == 0.0
        assert abs(freq[0b01] - 0.5) < 0.01
        assert abs(freq[0b10] - 0.5) < 0.01

    def test_total_variation_vs_dense(self):
        rng = np.random.default_rng(11)
        target = random_target(5, 3, seed=8)
        dense = DenseState.from_mps(target)
        for _ in range(3):
            basis = sample_basis(5, rng)
            ds = draw_shots(target, basis, 200_000, rng)
            emp = np.bincount(outcome_codes(ds), minlength=32) / len(ds)
            p = dense_probabilities(dense, basis)
            assert 0.5 * np.abs(emp - p).sum() < 0.02

    def test_chi_square_vs_dense(self):
        rng = np.random.default_rng(13)
        target = random_target(4, 3, seed=9)
        dense = DenseState.from_mps(target)
        basis = sample_basis(4, rng)
        count = 200_000
        ds = draw_shots(target, basis, count, rng)
        obs = np.bincount(outcome_codes(ds), minlength=16).astype(float)
        p = dense_probabilities(dense, basis)
        keep = p * count >= 5
        obs_k, exp_k = obs[keep], p[keep] * count
        if not np.all(keep):
            obs_k = np.append(obs_k, obs[~keep].sum())
            exp_k = np.append(exp_k, p[~keep].sum() * count)
        # normalize away the tiny probability mass lost to rounding
        exp_k *= obs_k.sum() / exp_k.sum()
        _, pvalue = chisquare(obs_k, exp_k)
        assert pvalue > 1e-3

    def test_single_shot_wrapper(self):
        rng = np.random.default_rng(4)
        shot = draw_shot(w_state(3, 0.0), MeasurementBasis.all_z(3), rng)
        assert isinstance(shot, Shot)
        assert shot.outcomes.shape == (3,)
        assert set(np.abs(shot.outcomes)) == {0.5}

    def test_degenerate_state_error(self):
        t = np.zeros((1, 2, 1), dtype=complex)
        broken = MatrixProductState([t, t.copy()])
        with pytest.raises(DegenerateStateError):
            draw_shots(broken, MeasurementBasis.all_z(2), 3, np.random.default_rng(0))


class TestDepolarizingNoise:
    def test_zero_epsilon_identical_stream(self):
        target = w_state(3, 0.1)
        basis = MeasurementBasis.all_z(3)
        a = draw_shots(target, basis, 50, np.random.default_rng(9))
        b = draw_noisy_shots(target, basis, 50, 0.0, np.random.default_rng(9))
        np.testing.assert_array_equal(a.outcome_indices, b.outcome_indices)

    def test_full_noise_uniform(self):
        target = w_state(3, 0.0)
        rng = np.random.default_rng(21)
        count = 80_000
        ds = draw_noisy_shots(target, MeasurementBasis.all_z(3), count, 1.0, rng)
        freq = np.bincount(outcome_codes(ds), minlength=8) / count
        sigma = np.sqrt(0.125 * 0.875 / count)
        assert np.all(np.abs(freq - 0.125) < 3.5 * sigma + 1e-12)

    def test_half_noise_mixture(self):
        up = np.array([1.0, 0.0]).reshape(1, 2, 1)
        target = MatrixProductState([up, up])
        rng = np.random.default_rng(17)
        count = 100_000
        ds = draw_noisy_shots(target, MeasurementBasis.all_z(2), count, 0.5, rng)
        p00 = np.mean(outcome_codes(ds) == 0)
        assert abs(p00 - 0.625) < 0.01

    def test_epsilon_validation(self):
        with pytest.raises(ParameterError):
            draw_noisy_shot(w_state(2, 0.0), MeasurementBasis.all_z(2), 1.5, np.random.default_rng(0))


class TestFixedBases:
    def test_single_site(self):
        bases = fixed_bases(1)
        assert len(bases) == 3
        np.testing.assert_allclose(bases[0].thetas, [0.0])
        np.testing.assert_allclose(bases[1].thetas, [np.pi / 2])
        np.testing.assert_allclose(bases[1].phis, [0.0])
        np.testing.assert_allclose(bases[2].phis, [np.pi / 2])

    def test_count_and_sparsity(self):
        bases = fixed_bases(4)
        assert len(bases) == 9
        for b in bases:
            assert np.count_nonzero(b.thetas) <= 1

    def test_directions_exact(self):
        for b in fixed_bases(3):
            for th, ph in zip(b.thetas, b.phis):
                assert (th, ph) in {(0.0, 0.0), (np.pi / 2, 0.0), (np.pi / 2, np.pi / 2)}

    def test_qubits_only(self):
        with pytest.raises(ParameterError):
            fixed_bases(3, local_dim=3)


class TestDataset:
    def test_append_and_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        target = w_state(4, 0.2)
        ds = Dataset(4, 2)
        for _ in range(5):
            ds.append(draw_shot(target, sample_basis(4, rng), rng))
        assert ds.replica_count == 5
        path = tmp_path / "shots.txt"
        ds.to_file(path)
        loaded = Dataset.from_file(path, 2)
        np.testing.assert_array_equal(loaded.outcome_indices, ds.outcome_indices)
        np.testing.assert_allclose(loaded.thetas, ds.thetas, atol=0)
        np.testing.assert_allclose(loaded.phis, ds.phis, atol=0)

    def test_file_format(self, tmp_path):
        ds = Dataset(2, 2)
        basis = MeasurementBasis(np.array([0.5, 1.5]), np.array([0.25, 6.0]))
        ds.append(Shot(basis, np.array([0.5, -0.5])))
        path = tmp_path / "shots.txt"
        ds.to_file(path)
        line = path.read_text().strip()
        fields = line.split(";")
        assert len(fields) == 2
        theta, phi, twice_m = fields[0].split(",")
        assert float(theta) == 0.5 and float(phi) == 0.25 and int(twice_m) == 1
        assert int(fields[1].split(",")[2]) == -1
        # >= 12 significant digits survive the roundtrip
        assert float(fields[1].split(",")[0]) == 1.5

    def test_rejects_mismatched_shot(self):
        ds = Dataset(3, 2)
        with pytest.raises(ParameterError):
            ds.append(Shot(MeasurementBasis.all_z(2), np.array([0.5, 0.5])))

    def test_normalization_invariant_over_random_bases(self, rng):
        target = random_init(5, 2, 3, seed=2)
        for _ in range(3):
            basis = sample_basis(5, rng)
            total = 0.0
            for v in range(2**5):
                ms = [0.5 - ((v >> (4 - j)) & 1) for j in range(5)]
                total += abs(target.amplitude(basis, ms)) ** 2
            assert abs(total - 1.0) < 1e-9
