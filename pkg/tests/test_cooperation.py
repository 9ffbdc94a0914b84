import numpy as np
import pytest

from coopfb import numerics, qbc
from coopfb.cooperation import (
    GlobalChannel,
    LocalCsi,
    acquire_global_csi,
    acquire_local_csi,
    assign_roles,
    build_global_matrix,
)
from coopfb.model import (
    LocalCodebook,
    SystemConfig,
    derive_trial_rng,
    gen_all_channels,
    gen_global_codebook,
    gen_local_codebook,
)

RNG = np.random.default_rng(2024)


def random_channel(n, m, rng=RNG):
    return (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2)


def random_codebook(qcl, m, rng=RNG):
    vecs = (rng.standard_normal((qcl, m)) + 1j * rng.standard_normal((qcl, m))) / np.sqrt(2)
    return LocalCodebook(vecs / np.linalg.norm(vecs, axis=1, keepdims=True))


class TestAcquireLocalCsi:
    def test_single_codeword_always_selected(self):
        h = random_channel(2, 4)
        cb = random_codebook(1, 4)
        local = acquire_local_csi(h, cb)
        np.testing.assert_array_equal(local.cdi, cb.vectors[0])

    def test_in_span_codeword_is_exact(self):
        h = random_channel(2, 4)
        inside = h.conj().T @ np.array([0.3, 0.7j])
        inside /= np.linalg.norm(inside)
        cb = LocalCodebook(np.vstack([random_codebook(3, 4).vectors, inside]))
        local = acquire_local_csi(h, cb)
        np.testing.assert_array_equal(local.cdi, inside)
        assert local.sin2_error < 1e-12
        assert abs(local.cqi - np.linalg.norm(local.h_virt)) < 1e-10

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            h = random_channel(2, 4, rng)
            cb = random_codebook(8, 4, rng)
            local = acquire_local_csi(h, cb)
            gains = []
            for q in range(8):
                combined = qbc.combine_for_codeword(h, cb.vectors[q])
                hv = combined.h_eff
                gains.append(np.abs(np.vdot(cb.vectors[q], hv)) ** 2 / np.vdot(hv, hv).real)
            best = int(np.argmax(gains))
            np.testing.assert_array_equal(local.cdi, cb.vectors[best])
            assert abs((1.0 - gains[best]) - local.sin2_error) < 1e-12

    def test_invariants(self):
        for _ in range(20):
            h = random_channel(2, 4)
            cb = random_codebook(16, 4)
            local = acquire_local_csi(h, cb)
            hv_norm = np.linalg.norm(local.h_virt)
            assert 0.0 <= local.sin2_error <= 1.0
            assert local.cqi >= 0.0
            assert np.linalg.norm(local.quantized_virtual) <= hv_norm + 1e-12
            assert abs(np.linalg.norm(local.combiner) - 1.0) < 1e-12
            # error direction reassembles the unquantized vector
            rebuilt = local.quantized_virtual + hv_norm * np.sqrt(local.sin2_error) * local.error_direction
            assert np.linalg.norm(rebuilt - local.h_virt) < 1e-9 * hv_norm


class TestBuildGlobalMatrix:
    def test_exact_quantization_gives_equal_matrices(self):
        h_b = random_channel(2, 4)
        inside = h_b.conj().T @ np.array([1.0, 0.5 - 0.25j])
        inside /= np.linalg.norm(inside)
        local = acquire_local_csi(h_b, LocalCodebook(inside[None, :]))
        glob = build_global_matrix(random_channel(2, 4), local)
        np.testing.assert_allclose(glob.h_qu, glob.h_dl, atol=1e-9)

    def test_zero_quality_partner(self):
        h_virt = random_channel(1, 4)[0]
        partner = LocalCsi(
            cdi=np.array([1.0, 0, 0, 0], dtype=complex),
            cqi=0.0,
            combiner=np.array([1.0, 0], dtype=complex),
            h_virt=h_virt,
            sin2_error=1.0,
        )
        glob = build_global_matrix(random_channel(2, 4), partner)
        np.testing.assert_array_equal(glob.h_qu[2], np.zeros(4))
        np.testing.assert_array_equal(glob.h_dl[2], h_virt.conj())

    def test_row_difference_identity(self):
        # The matrices differ exactly by the scaled local error row.
        for _ in range(20):
            h_b = random_channel(2, 4)
            cb = random_codebook(8, 4)
            local = acquire_local_csi(h_b, cb)
            glob = build_global_matrix(random_channel(2, 4), local)
            np.testing.assert_array_equal(glob.h_qu[:2], glob.h_dl[:2])
            diff = glob.h_dl[2] - glob.h_qu[2]
            expected_norm = np.linalg.norm(local.h_virt) * np.sqrt(local.sin2_error)
            assert abs(np.linalg.norm(diff) - expected_norm) < 1e-10
            expected_row = (expected_norm * local.error_direction).conj()
            assert np.linalg.norm(diff - expected_row) < 1e-10


class TestAcquireGlobalCsi:
    def cfg(self):
        return SystemConfig(m=4, n=2, k=8, rho=8.0, bcl=3, trials=1, seed=11)

    def test_full_rank_stack_has_zero_error(self):
        # n+1 = m and an exact partner row: the stacked subspace is all of
        # C^m, so the selected beam aligns perfectly.
        cfg = SystemConfig(m=4, n=3, k=8, rho=8.0, bcl=3, trials=1, seed=11)
        cb = gen_global_codebook(cfg, derive_trial_rng(cfg.seed, 0))
        h_b = random_channel(3, 4)
        inside = h_b.conj().T @ np.array([0.2, -0.4j, 0.9])
        inside /= np.linalg.norm(inside)
        local = acquire_local_csi(h_b, LocalCodebook(inside[None, :]))
        glob = build_global_matrix(random_channel(3, 4), local)
        report, z_bar = acquire_global_csi(glob, cb, cfg.rho)
        h_eff = glob.h_qu.conj().T @ z_bar
        align = np.abs(np.vdot(h_eff, cb.codeword(report.beam))) ** 2 / np.vdot(h_eff, h_eff).real
        assert abs(align - 1.0) < 1e-10

    def test_pure_function(self):
        cfg = self.cfg()
        cb = gen_global_codebook(cfg, derive_trial_rng(cfg.seed, 0))
        local = acquire_local_csi(random_channel(2, 4), random_codebook(8, 4))
        glob = build_global_matrix(random_channel(2, 4), local)
        r1, z1 = acquire_global_csi(glob, cb, cfg.rho)
        r2, z2 = acquire_global_csi(glob, cb, cfg.rho)
        assert r1.beam == r2.beam and r1.cqi == r2.cqi
        np.testing.assert_array_equal(z1, z2)

    def test_reported_cqi_reevaluates(self):
        cfg = self.cfg()
        cb = gen_global_codebook(cfg, derive_trial_rng(cfg.seed, 1))
        for _ in range(20):
            local = acquire_local_csi(random_channel(2, 4), random_codebook(8, 4))
            glob = build_global_matrix(random_channel(2, 4), local)
            report, z_bar = acquire_global_csi(glob, cb, cfg.rho)
            h_eff = glob.h_qu.conj().T @ z_bar
            again = qbc.sinr_for_beam(h_eff, cb, report.beam, cfg.rho)
            assert abs(report.cqi - again) <= 1e-12 * max(1.0, report.cqi)


class TestAssignRoles:
    def report(self, user, cqi):
        return qbc.CsiReport(user=user, beam=0, cqi=cqi, combiner=np.ones(3, dtype=complex))

    def test_larger_cqi_wins(self):
        role = assign_roles((2, 3), self.report(2, 3.0), self.report(3, 2.0))
        assert role.mu == 2 and role.au == 3
        role = assign_roles((2, 3), self.report(2, 1.0), self.report(3, 2.0))
        assert role.mu == 3 and role.au == 2

    def test_tie_goes_to_lower_index(self):
        role = assign_roles((0, 1), self.report(0, 1.5), self.report(1, 1.5))
        assert role.mu == 0

    def test_rejects_bad_pairing(self):
        with pytest.raises(ValueError):
            assign_roles((1, 2), self.report(1, 1.0), self.report(2, 1.0))
        with pytest.raises(ValueError):
            assign_roles((0, 2), self.report(0, 1.0), self.report(2, 1.0))

    def test_symmetric_draws_split_evenly(self):
        rng = np.random.default_rng(8)
        wins = 0
        trials = 10000
        for _ in range(trials):
            a = float(rng.exponential())
            b = float(rng.exponential())
            role = assign_roles((0, 1), self.report(0, a), self.report(1, b))
            wins += role.mu == 0
        assert abs(wins / trials - 0.5) < 0.02


class TestCooperativeStatistics:
    def test_mu_cqi_at_least_au_cqi_every_draw(self):
        cfg = SystemConfig(m=4, n=2, k=8, rho=6.0, bcl=4, trials=1, seed=4)
        for t in range(30):
            rng = derive_trial_rng(cfg.seed, t)
            h = gen_all_channels(cfg, rng)
            cb = gen_global_codebook(cfg, rng)
            local_cb = gen_local_codebook(cfg, rng)
            for a in range(0, cfg.k, 2):
                la = acquire_local_csi(h[a], local_cb)
                lb = acquire_local_csi(h[a + 1], local_cb)
                ra, _ = acquire_global_csi(build_global_matrix(h[a], lb), cb, cfg.rho, user=a)
                rb, _ = acquire_global_csi(build_global_matrix(h[a + 1], la), cb, cfg.rho, user=a + 1)
                role = assign_roles((a, a + 1), ra, rb)
                other = rb if role.mu == a else ra
                assert role.mu_csi.cqi >= other.cqi

    def test_selected_error_is_minimum_over_codewords(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            h = random_channel(2, 4, rng)
            cb = random_codebook(16, 4, rng)
            local = acquire_local_csi(h, cb)
            basis = numerics.orthonormal_basis(h)
            errors = 1.0 - np.sum(np.abs(cb.vectors.conj() @ basis) ** 2, axis=1)
            assert local.sin2_error <= errors.min() + 1e-12
