import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from crdlab import constructions as cons
from crdlab import gauss
from crdlab.audits import conditionally_independent_quadruple, random_block_channel
from crdlab.gauss import ArSourceModel

AR1 = ArSourceModel([0.9], 0.19)
AR2 = ArSourceModel([0.5, -0.3], 1.0)


def lower_channel(n=3):
    C = np.tril(np.full((n, n), 0.3)) + 0.7 * np.eye(n)
    N = 0.2 * np.eye(n) + 0.05
    return cons.BlockChannel(n, C, N)


class TestBlockChannel:
    def test_rejects_upper_entries(self):
        with pytest.raises(ValueError, match="lower triangular"):
            cons.BlockChannel(2, [[1.0, 0.1], [0.0, 1.0]], np.eye(2))

    def test_rejects_shape(self):
        with pytest.raises(ValueError):
            cons.BlockChannel(3, np.eye(2), np.eye(2))

    def test_json_round_trip(self):
        ch = lower_channel()
        d = json.loads(json.dumps(ch.to_dict(), default=lambda a: a.tolist()))
        back = cons.BlockChannel.from_dict(d)
        assert np.array_equal(back.gain, ch.gain) and np.array_equal(back.noise_cov, ch.noise_cov)


class TestReplication:
    @pytest.mark.parametrize("src", [AR1, AR2])
    def test_joint_matches_block_formula(self, src):
        ch = lower_channel()
        r = cons.replicate_blocks(src, ch, 4)
        want = oracles.replicated_covariance(src.autocovariances(12), ch.gain, ch.noise_cov, 4)
        assert np.allclose(r.joint.sigma.entries, want, atol=1e-12)

    def test_single_block_is_the_channel(self):
        ch = lower_channel()
        r = cons.replicate_blocks(AR2, ch, 1)
        m = gauss.channel_model(AR2, 3, ch.gain, ch.noise_cov)
        assert r.block_mi() == pytest.approx(gauss.mutual_information(m, m.x(1, 3), m.y(1, 3)), abs=1e-14)

    def test_identities_hold(self):
        rep = cons.verify_block_identities(cons.replicate_blocks(AR1, lower_channel(), 4))
        assert rep.passed, rep.failures
        names = {c.check for c in rep.checks}
        assert names == {"block_mi_equal_across_blocks", "y_block_independent_given_own_x_block",
                         "blocks_rate_at_most_single_block_rate"}

    def test_iid_source_attains_single_block_rate(self):
        r = cons.replicate_blocks(ArSourceModel([0.0], 1.0), lower_channel(), 3)
        J = r.joint
        per = r.block_mi() / 3
        for ell in (1, 2, 3):
            assert gauss.mutual_information(J, J.x(1, 3 * ell), J.y(1, 3 * ell)) / (3 * ell) == \
                pytest.approx(per, abs=1e-12)

    def test_memory_makes_blocks_rate_strictly_smaller(self):
        r = cons.replicate_blocks(AR1, lower_channel(), 3)
        J = r.joint
        assert gauss.mutual_information(J, J.x(1, 9), J.y(1, 9)) / 9 < r.block_mi() / 3 - 1e-4

    @given(st.integers(0, 5000), st.integers(1, 3))
    def test_random_channels(self, seed, n):
        rng = np.random.default_rng(seed)
        r = cons.replicate_blocks(AR2, random_block_channel(rng, n), 3)
        assert cons.verify_block_identities(r).passed

    def test_kappa_lagged_causality(self):
        r = cons.replicate_blocks(AR1, lower_channel(2), 3)
        assert cons.kappa_lagged_causality_audit(r, kappa=2).passed

    def test_window_bounds(self):
        r = cons.replicate_blocks(AR1, lower_channel(), 2)
        with pytest.raises(ValueError):
            r.window(0, 3)
        with pytest.raises(ValueError):
            cons.replicate_blocks(AR1, lower_channel(), 0)


class TestShiftMixture:
    def make(self, src=AR2, n=3, window=6, lead=2):
        r = cons.replicate_blocks(src, lower_channel(n), 5)
        return cons.shift_stationarize(r, window, lead)

    def test_components_and_phase(self):
        s = self.make()
        assert len(s.components) == 3 and np.allclose(s.weights, 1 / 3)
        assert [s.phase(t, 1) for t in range(3)] == [0, 1, 2]

    def test_component_is_shifted_window(self):
        s = self.make()
        r = s.source
        ref = r.window(3 + 1 + 1, 3 + 1 + 6, lead=2)
        assert np.allclose(s.components[1].sigma.entries, ref.sigma.entries)

    def test_mixture_is_stationary(self):
        res = cons.mixture_stationarity(self.make(), 3)
        assert res.holds, res

    def test_components_alone_are_not(self):
        s = self.make()
        c = s.components[0]
        res = gauss.joint_stationarity_audit(gauss.window_blocks(c, 3))
        assert not res.holds

    def test_too_short_rejected(self):
        r = cons.replicate_blocks(AR2, lower_channel(3), 2)
        with pytest.raises(ValueError, match="too short"):
            cons.shift_stationarize(r, 3)

    @pytest.mark.parametrize("m", [1, 2, 3, 4, 6])
    def test_conditional_mi_bound(self, m):
        b = cons.mixture_conditional_mi(self.make(), m)
        assert b.check.passed and b.per_sample <= b.bound + 1e-9
        # direct average over components
        s = self.make()
        direct = np.mean([gauss.mutual_information(c, c.x(1, m), c.y(1, m)) for c in s.components])
        assert b.conditional_mi == pytest.approx(direct, abs=1e-12)


class TestConcatenation:
    def test_head_law(self):
        s = cons.shift_stationarize(cons.replicate_blocks(AR1, lower_channel(2), 5), 4, lead=2)
        c = cons.concatenate_first_samples(s, kappa=3)
        assert c.horizon == 6 and len(c.components) == 2
        # head pair: y_hat = x_hat + unit noise on two AR(1) samples
        h = gauss.fir_channel_model(AR1, 2, {0: 1.0}, 1.0)
        assert c.head_mi() == pytest.approx(gauss.mutual_information(h, h.x(1, 2), h.y(1, 2)), abs=1e-12)

    def test_head_y_depends_only_on_x_hat(self):
        s = cons.shift_stationarize(cons.replicate_blocks(AR2, lower_channel(2), 5), 4, lead=2)
        m = cons.concatenate_first_samples(s, kappa=3).components[0]
        cert = gauss.markov_chain_check(m, m.y(1, 2), m.x(1, 2), m.x(3, 6) | m.y(3, 6))
        assert cert.holds

    def test_qjs_gaps_bounded(self):
        s = cons.shift_stationarize(cons.replicate_blocks(AR2, lower_channel(3), 6), 9, lead=2)
        c = cons.concatenate_first_samples(s, kappa=3)
        rows, rep = cons.qjs_audit(c, [3, 5, 8, 11])
        assert rep.passed
        assert all(r.gap <= r.bound for r in rows)
        assert rows[-1].gap < rows[0].gap

    def test_plain_tail(self):
        m = gauss.fir_channel_model(AR1, 5, {0: 1.0, 1: 0.5}, 0.2, past=2)
        c = cons.concatenate_first_samples(m, kappa=2)
        assert c.tail_mi > 0
        assert cons.qjs_audit(c, [2, 4, 6])[1].passed

    def test_kappa_one_is_identity(self):
        s = cons.shift_stationarize(cons.replicate_blocks(AR1, lower_channel(2), 5), 4)
        c = cons.concatenate_first_samples(s)
        assert c.head is None and c.head_mi() == 0.0 and c.components == s.components

    def test_insufficient_lead(self):
        s = cons.shift_stationarize(cons.replicate_blocks(AR1, lower_channel(2), 5), 4, lead=1)
        with pytest.raises(ValueError, match="pre-samples"):
            cons.concatenate_first_samples(s, kappa=3)

    def test_horizon_range(self):
        s = cons.shift_stationarize(cons.replicate_blocks(AR1, lower_channel(2), 5), 4, lead=1)
        c = cons.concatenate_first_samples(s, kappa=2)
        with pytest.raises(ValueError):
            cons.qjs_audit(c, [1, 3])
        with pytest.raises(ValueError):
            cons.qjs_audit(c, [4, 3])


class TestConditionallyIndependentCopy:
    def test_markov_and_marginal(self):
        m = gauss.fir_channel_model(AR2, 3, {0: 1.0, 1: 0.7}, 0.1)
        A, B, C = m.y(2, 3), m.x(1, 3), m.y(1)
        out = cons.conditionally_independent_copy(m, A, B, C)
        assert gauss.markov_chain_check(out, A, B, C).holds
        assert np.allclose(out.block(A | B), m.block(A | B), atol=1e-14)

    @given(st.integers(0, 5000))
    def test_already_markov_is_unchanged(self, seed):
        S, (a, b, c, d) = conditionally_independent_quadruple(np.random.default_rng(seed))
        m = gauss.JointProcessModel(S.shape[0] // 2, S)
        out = cons.conditionally_independent_copy(m, a, c, sorted(b + d))
        assert np.allclose(out.sigma.entries, S, atol=1e-9)

    def test_copy_is_psd(self):
        m = gauss.fir_channel_model(AR1, 4, {0: 1.0, -1: 0.5}, 0.1)
        out = cons.conditionally_independent_copy(m, m.y(1, 2), m.x(1, 2), m.x(3, 4))
        assert np.linalg.eigvalsh(out.sigma.entries).min() > -1e-12

    def test_validation(self):
        m = gauss.fir_channel_model(AR1, 2, {0: 1.0}, 0.1)
        with pytest.raises(ValueError):
            cons.conditionally_independent_copy(m, m.y(1), m.y(1), m.x(1))
        with pytest.raises(ValueError):
            cons.conditionally_independent_copy(m, m.y(1), m.x(1), [])


class TestDistortion:
    def test_mse(self):
        m = gauss.fir_channel_model(AR1, 4, {0: 1.0}, 0.3)
        assert cons.mean_squared_error(m) == pytest.approx(0.3, abs=1e-12)
        assert cons.distortion_check(m, 0.3).passed
        assert not cons.distortion_check(m, 0.29).passed
