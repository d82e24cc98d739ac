import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

import frozen
from crdlab import coder, kernels
from crdlab.gauss import ArSourceModel
from crdlab.solver import UnsupportedOrderError

AR09 = ArSourceModel([0.9], 0.19)


@pytest.fixture(scope="module")
def cfg():
    return coder.design_coder(AR09, 0.1, dither_seed=1234)


@pytest.fixture(scope="module")
def signal():
    return coder.synthesize(AR09, 20_000, np.random.default_rng(5))


def reference_loop(x, z, a, step, beta):
    """Straight-line encoder loop, one sample at a time."""
    y_prev, qs, ys = 0.0, [], []
    for xk, zk in zip(x, z):
        u = xk - a * y_prev
        q = math.floor((u + zk) / step + 0.5)
        y = a * y_prev + beta * (q * step - zk)
        qs.append(q)
        ys.append(y)
        y_prev = y
    return np.array(qs, float), np.array(ys)


def gamma_bits(v):
    b = bin(v)[2:]
    return "0" * (len(b) - 1) + b


class TestDesign:
    def test_theta_and_step(self, cfg):
        assert cfg.theta == pytest.approx(frozen.THETA_09_01, rel=1e-14)
        assert cfg.step == pytest.approx(frozen.STEP_09_01, rel=1e-14)

    def test_steady_state_distortion(self, cfg):
        assert cfg.design_distortion == pytest.approx(0.1, rel=1e-12)
        assert cfg.scaling == pytest.approx(0.271 / (0.271 + frozen.THETA_09_01), rel=1e-12)

    def test_zero_rate(self):
        with pytest.raises(coder.ZeroRateError):
            coder.design_coder(AR09, 1.0)

    def test_higher_order(self):
        with pytest.raises(UnsupportedOrderError):
            coder.design_coder(ArSourceModel([0.5, -0.3], 1.0), 0.1)


class TestDither:
    def test_range_and_determinism(self, cfg):
        z = coder.dither(cfg, 10_000)
        assert np.all(np.abs(z) <= cfg.step / 2)
        assert np.array_equal(z, coder.dither(cfg, 10_000))

    def test_chunked_equals_single_draw(self, cfg):
        gen = coder.dither_stream(cfg)
        parts = np.concatenate([coder.dither(cfg, n, gen) for n in (7, 100, 1, 892)])
        assert np.array_equal(parts, coder.dither(cfg, 1000))

    def test_seeds_differ(self):
        a = coder.design_coder(AR09, 0.1, 1)
        b = coder.design_coder(AR09, 0.1, 2)
        assert not np.array_equal(coder.dither(a, 10), coder.dither(b, 10))


class TestLoop:
    def test_matches_reference(self, cfg, signal):
        x = signal[:2000]
        enc = coder.encode(x, cfg)
        q, y = reference_loop(x, coder.dither(cfg, 2000), cfg.predictor, cfg.step, cfg.scaling)
        assert np.array_equal(enc.indices, q)
        assert np.allclose(enc.reconstruction, y, rtol=0, atol=1e-12)

    def test_round_trip_exact(self, cfg, signal):
        enc = coder.encode(signal, cfg)
        assert np.array_equal(coder.decode(enc.bitstream, cfg), enc.reconstruction)

    def test_bitstream_layout(self, cfg):
        x = np.array([0.0, 2.0, -3.0])
        enc = coder.encode(x, cfg)
        head = coder.HEADER.unpack_from(enc.bitstream)
        assert head[0] == b"CRDL" and head[6] == 3 and len(enc.bitstream) >= 44
        zz = [2 * int(q) if q >= 0 else -2 * int(q) - 1 for q in enc.indices]
        want = "".join(gamma_bits(v + 1) for v in zz)
        body = np.unpackbits(np.frombuffer(enc.bitstream[44:], np.uint8))
        assert "".join(map(str, body[: len(want)])) == want
        assert not body[len(want):].any()

    def test_streaming_prefix(self, cfg, signal):
        enc = coder.encode(signal[:5000], cfg)
        it = coder.iter_decode(enc.bitstream, cfg, chunk=64)
        first = [next(it) for _ in range(100)]
        assert np.array_equal(first, enc.reconstruction[:100])

    @pytest.mark.parametrize("chunk", [1, 3, 4096])
    def test_chunk_size_irrelevant(self, cfg, signal, chunk):
        enc = coder.encode(signal[:700], cfg)
        out = np.fromiter(coder.iter_decode(enc.bitstream, cfg, chunk), float)
        assert np.array_equal(out, enc.reconstruction)

    def test_deterministic(self, cfg, signal):
        assert coder.encode(signal, cfg).bitstream == coder.encode(signal, cfg).bitstream

    def test_rejects_nonfinite(self, cfg):
        with pytest.raises(ValueError):
            coder.encode(np.array([1.0, np.nan]), cfg)


class TestErrors:
    def test_truncation_keeps_prefix(self, cfg, signal):
        enc = coder.encode(signal[:3000], cfg)
        cut = enc.bitstream[: len(enc.bitstream) // 2]
        with pytest.raises(coder.TruncatedStreamError) as info:
            coder.decode(cut, cfg)
        part = info.value.partial
        assert 0 < part.size < 3000
        assert np.array_equal(part, enc.reconstruction[: part.size])

    def test_header_truncation(self, cfg):
        with pytest.raises(coder.TruncatedStreamError):
            coder.decode(b"CRDL", cfg)

    def test_checksum_mismatch(self, cfg, signal):
        enc = coder.encode(signal[:100], cfg)
        other = coder.design_coder(AR09, 0.1, dither_seed=99)
        with pytest.raises(coder.ChecksumError):
            coder.decode(enc.bitstream, other)

    def test_corrupt_count(self, cfg, signal):
        enc = coder.encode(signal[:100], cfg)
        bad = bytearray(enc.bitstream)
        bad[32:40] = struct.pack("<Q", 101)
        with pytest.raises(coder.ChecksumError):
            coder.decode(bytes(bad), cfg)

    def test_bad_magic(self, cfg, signal):
        enc = coder.encode(signal[:10], cfg)
        with pytest.raises(ValueError, match="magic"):
            coder.decode(b"XXXX" + enc.bitstream[4:], cfg)


class TestEscapes:
    def test_huge_input_round_trips(self, cfg):
        x = np.array([0.1, 1e12, -3e15, 0.2, 5e9, 0.0])
        enc = coder.encode(x, cfg)
        assert np.any(np.abs(enc.indices) >= 2 ** 31 - 1)
        assert np.array_equal(coder.decode(enc.bitstream, cfg), enc.reconstruction)

    @given(st.lists(st.integers(-(2 ** 40), 2 ** 40), min_size=1, max_size=30))
    def test_zigzag_inverse(self, vals):
        q = np.array(vals, dtype=float)
        back, used = coder._unzigzag(coder._zigzag(q))
        assert np.array_equal(back, q) and used == coder._zigzag(q).size

    def test_kraft(self, cfg):
        k = coder.kraft_sum(cfg)
        assert k <= 1
        assert float(1 - k) == pytest.approx(2.0 ** -32 - 2.0 ** -65, rel=1e-12)


class TestAdaptiveModel:
    def test_kt_by_hand(self):
        sym = np.array([0, 0, 1, 0])
        ctx = np.zeros(4, dtype=np.int64)
        # KT with alphabet 2: (0+1/2)/(0+1), (1+1/2)/(1+1), (0+1/2)/(2+1), (2+1/2)/(3+1)
        p = [0.5, 0.75, 0.5 / 3, 2.5 / 4]
        got = kernels.kt_codelengths(sym, ctx, 2, 1)
        assert np.allclose(got, [-math.log2(v) for v in p], atol=1e-12)

    def test_contexts_are_separate(self):
        sym = np.array([1, 1, 1, 1])
        ctx = np.array([0, 1, 0, 1])
        got = kernels.kt_codelengths(sym, ctx, 2, 2)
        assert got[0] == got[1] and got[2] == got[3]


@pytest.fixture(scope="module")
def ev():
    return coder.evaluate(AR09, 0.1, 200_000, seed=7)


class TestEvaluation:
    def test_all_checks(self, ev):
        assert ev.report.passed, ev.report.failures

    def test_mse_near_target(self, ev):
        assert abs(ev.stats.mse / 0.1 - 1) < 0.03

    def test_gaps(self, ev):
        assert 0 <= ev.entropy_gap <= coder.ENTROPY_GAP + coder.STAT_SLACK
        assert ev.prefix_gap <= coder.PREFIX_GAP
        assert ev.stats.prefix_rate_bits >= ev.stats.entropy_rate_bits

    def test_memoryless_source(self):
        ev = coder.evaluate(ArSourceModel([0.0], 1.0), 0.5, 50_000, seed=1)
        assert abs(ev.stats.mse / 0.5 - 1) < 0.03

    def test_small_n_rejected(self):
        with pytest.raises(ValueError):
            coder.evaluate(AR09, 0.1, 100)


class TestDitherNoise:
    def test_noise_is_white_uniform(self, cfg):
        x = coder.synthesize(AR09, 100_000, np.random.default_rng(3))
        noise, u = coder.quantizer_noise(x, cfg)
        assert coder.dither_noise_audit(noise, cfg.step, u).passed
        assert np.all(np.abs(noise) <= cfg.step / 2 + 1e-12)

    @pytest.mark.parametrize("scale", [0.5, 2.0])
    def test_variance_tracks_step(self, cfg, scale):
        c2 = coder.CoderConfig(cfg.step * scale, cfg.scaling, cfg.predictor, cfg.dither_seed,
                               cfg.target_distortion, cfg.prediction_variance)
        x = coder.synthesize(AR09, 50_000, np.random.default_rng(4))
        noise, _ = coder.quantizer_noise(x, c2)
        assert np.var(noise) == pytest.approx(c2.step ** 2 / 12, rel=0.03)

    def test_undithered_noise_fails_audit(self, cfg):
        # a coarse quantizer on a slow input without dither leaves correlated error
        x = np.sin(np.linspace(0, 40, 20_000))
        step = 1.0
        noise = np.floor(x / step + 0.5) * step - x
        assert not coder.dither_noise_audit(noise, step, x).passed


class TestSynthesis:
    def test_stationary_moments(self):
        x = coder.synthesize(AR09, 400_000, np.random.default_rng(0))
        assert np.var(x) == pytest.approx(1.0, rel=0.03)
        assert np.corrcoef(x[:-1], x[1:])[0, 1] == pytest.approx(0.9, abs=0.01)

    def test_seeds_reproducible(self):
        r1, k1 = coder.seeds(3)
        r2, k2 = coder.seeds(3)
        assert k1 == k2 and r1.random() == r2.random()
