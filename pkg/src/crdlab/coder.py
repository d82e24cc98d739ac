"""Zero-delay predictive coder with a subtractively dithered uniform quantizer.

The loop quantizes the innovation ``u(k) = x(k) - a y(k-1)`` with dither
shared by encoder and decoder through a counter-based generator, and
reconstructs ``y(k) = a y(k-1) + beta (i(k) step - z(k))``. Indices go into
an Elias-gamma bitstream (an instantaneous code, decodable sample by
sample); a second figure, the adaptive Krichevsky-Trofimov codelength
conditioned on the dither bin, measures what an ideal zero-delay entropy
coder would spend.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np
from scipy.signal import lfilter

from . import kernels
from .gauss import ArSourceModel
from .report import AuditReport, Check, fmt
from .solver import UnsupportedOrderError, stationary_irdf

MAGIC = b"CRDL"
VERSION = 1
HEADER = struct.Struct("<4sHHddQQI")
DITHER_CONTEXTS = 16
# zigzag value reserved for escapes; the raw float64 bits follow as one more codeword
ESCAPE = (1 << 32) - 1
ENTROPY_GAP = 0.254
PREFIX_GAP = 1.254
STAT_SLACK = 0.05


class ZeroRateError(ValueError):
    pass


class ChecksumError(ValueError):
    pass


class TruncatedStreamError(ValueError):
    def __init__(self, message: str, partial: np.ndarray):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class CoderConfig:
    step: float
    scaling: float
    predictor: float
    dither_seed: int
    target_distortion: float
    prediction_variance: float

    @property
    def theta(self) -> float:
        return self.step ** 2 / 12.0

    @property
    def design_distortion(self) -> float:
        p, th = self.prediction_variance, self.theta
        return p * th / (p + th)

    @property
    def shannon_rate(self) -> float:
        return 0.5 * math.log2((self.prediction_variance + self.theta) / self.theta)

    @property
    def radius(self) -> int:
        """Index magnitudes beyond this are escaped in the adaptive model."""
        return int(math.ceil(4.0 * math.sqrt(self.prediction_variance + self.theta) / self.step)) + 1

    def checksum(self, samples: int) -> int:
        blob = struct.pack("<dddQQHH", self.step, self.scaling, self.predictor,
                           self.dither_seed, samples, VERSION, DITHER_CONTEXTS)
        return zlib.crc32(blob)

    def to_dict(self) -> dict:
        return {"step": self.step, "scaling": self.scaling, "predictor": self.predictor,
                "dither_seed": self.dither_seed, "target_distortion": self.target_distortion,
                "prediction_variance": self.prediction_variance, "theta": self.theta}


def design_coder(model: ArSourceModel, D: float, dither_seed: int = 0) -> CoderConfig:
    """Step and scaling that put the steady-state loop distortion at D.

    With ``p = a^2 D + s2`` and uniform noise variance ``theta = p D / (p - D)``
    the MMSE scaling ``beta = p / (p + theta)`` gives error ``p theta / (p + theta) = D``.
    """
    if model.order > 1:
        raise UnsupportedOrderError("coder handles AR order <= 1")
    D = float(D)
    rho0 = model.stationary_variance
    if not D > 0:
        raise ValueError("distortion must be positive")
    a = float(model.coeffs[0]) if model.order == 1 else 0.0
    p = a * a * D + model.innovation_variance
    # p > D exactly when D < rho0; testing p catches roundoff at the boundary
    if D >= rho0 or p <= D:
        raise ZeroRateError(f"zero-rate regime: D={D:g} >= stationary variance {rho0:g}")
    theta = p * D / (p - D)
    return CoderConfig(math.sqrt(12.0 * theta), p / (p + theta), a,
                       int(dither_seed) & 0xFFFFFFFFFFFFFFFF, D, p)


def dither_stream(cfg: CoderConfig) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=cfg.dither_seed))


def dither(cfg: CoderConfig, count: int, gen: np.random.Generator | None = None) -> np.ndarray:
    """Next ``count`` dither values in ``(-step/2, step/2]`` (from the start by default)."""
    gen = dither_stream(cfg) if gen is None else gen
    return (0.5 - gen.random(count)) * cfg.step


# -- index <-> codeword mapping ---------------------------------------------


def _zigzag(q: np.ndarray) -> np.ndarray:
    """Map float-valued integer indices to gamma values (>= 1), escaping large ones."""
    big = np.abs(q) >= 2.0 ** 31 - 1
    qi = np.where(big, 0, q).astype(np.int64)
    zz = np.where(qi >= 0, 2 * qi, -2 * qi - 1).astype(np.uint64)
    if not big.any():
        return zz + np.uint64(1)
    out = []
    for v, b, x in zip(zz, big, q):
        if b:
            out.append(ESCAPE + 1)
            out.append(int(np.float64(x).view(np.uint64)) + 1)
        else:
            out.append(int(v) + 1)
    return np.array(out, dtype=np.uint64)


def _unzigzag(vals: np.ndarray) -> tuple[np.ndarray, int]:
    """Inverse of ``_zigzag``; returns indices and the number of values consumed.

    A trailing escape marker without its payload is left unconsumed.
    """
    v = vals.astype(np.uint64) - np.uint64(1)
    esc = np.flatnonzero(v == ESCAPE)
    if esc.size == 0:
        z = v.astype(np.int64)
        return np.where(z % 2 == 0, z // 2, -(z + 1) // 2).astype(float), v.size
    out = []
    i = 0
    while i < v.size:
        if v[i] == ESCAPE:
            if i + 1 >= v.size:
                break
            out.append(float(np.uint64(v[i + 1]).view(np.float64)))
            i += 2
        else:
            z = int(v[i])
            out.append(float(z // 2 if z % 2 == 0 else -(z + 1) // 2))
            i += 1
    return np.array(out, dtype=float), i


# -- statistics -----------------------------------------------------------------


@dataclass(frozen=True)
class BitstreamStats:
    samples: int
    mse: float
    entropy_rate_bits: float
    prefix_rate_bits: float
    error_autocorr: np.ndarray
    error_input_corr: float
    noise_variance: float
    skipped: int
    header_bits: int

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "mse": self.mse,
            "entropy_rate_bits": self.entropy_rate_bits,
            "prefix_rate_bits": self.prefix_rate_bits,
            "error_autocorr": self.error_autocorr,
            "error_input_corr": self.error_input_corr,
            "noise_variance": self.noise_variance,
            "skipped_transient": self.skipped,
            "header_bits": self.header_bits,
        }


def transient_length(cfg: CoderConfig) -> int:
    return int(math.ceil(5.0 / (1.0 - abs(cfg.predictor))))


def kraft_sum(cfg: CoderConfig) -> Fraction:
    """Exact Kraft sum of the gamma code over every codeword the encoder can emit.

    Values 1..ESCAPE+1 are used; there are ``2^j`` values of length ``2j+1``.
    """
    top = (ESCAPE + 1).bit_length() - 1
    total = sum(Fraction(1 << j, 1 << (2 * j + 1)) for j in range(top))
    extra = ESCAPE + 1 - (1 << top) + 1
    return total + Fraction(extra, 1 << (2 * top + 1))


def adaptive_codelengths(q: np.ndarray, z: np.ndarray, cfg: CoderConfig) -> np.ndarray:
    """Sequential KT codelengths of the indices, context = dither bin.

    Indices outside the model radius cost the escape symbol plus their
    gamma codewords.
    """
    R = cfg.radius
    esc = np.abs(q) > R
    sym = np.where(esc, 2 * R + 1, np.clip(q, -R, R) + R).astype(np.int64)
    ctx = np.clip(np.floor((z / cfg.step + 0.5) * DITHER_CONTEXTS), 0, DITHER_CONTEXTS - 1)
    bits = kernels.kt_codelengths(sym, ctx.astype(np.int64), 2 * R + 2, DITHER_CONTEXTS)
    if esc.any():
        bits = bits.copy()
        for i in np.flatnonzero(esc):
            bits[i] += float(kernels.gamma_lengths(_zigzag(q[i : i + 1])).sum())
    return bits


def _stats(x, q, y, u, z, cfg: CoderConfig) -> BitstreamStats:
    N = x.shape[0]
    skip = min(transient_length(cfg), N - 2)
    sl = slice(skip, N)
    err = x[sl] - y[sl]
    noise = (q * cfg.step - z - u)[sl]
    kt = adaptive_codelengths(q, z, cfg)[sl]
    pref = kernels.gamma_lengths(_zigzag(q[sl])).astype(float)
    return BitstreamStats(
        samples=N,
        mse=float(np.mean(err * err)),
        entropy_rate_bits=float(math.fsum(kt) / kt.size),
        prefix_rate_bits=float(math.fsum(pref) / kt.size),
        error_autocorr=autocorrelation(noise, 8),
        error_input_corr=float(np.corrcoef(noise, u[sl])[0, 1]),
        noise_variance=float(np.var(noise)),
        skipped=skip,
        header_bits=8 * HEADER.size,
    )


def autocorrelation(e: np.ndarray, lags: int) -> np.ndarray:
    e = e - e.mean()
    v = float(np.dot(e, e))
    return np.array([float(np.dot(e[:-k], e[k:])) / v for k in range(1, lags + 1)])


# -- encode / decode ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Encoded:
    indices: np.ndarray
    bitstream: bytes
    reconstruction: np.ndarray
    stats: BitstreamStats = field(repr=False)


def encode(x: np.ndarray, cfg: CoderConfig) -> Encoded:
    x = np.ascontiguousarray(x, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError("input must be a finite 1-D stream")
    N = x.shape[0]
    z = dither(cfg, N)
    q, y, u = kernels.dpcm_encode(x, z, cfg.predictor, cfg.step, cfg.scaling)
    bits = kernels.gamma_encode(_zigzag(q))
    header = HEADER.pack(MAGIC, VERSION, 0, cfg.step, cfg.scaling, cfg.dither_seed, N,
                         cfg.checksum(N))
    stream = header + np.packbits(bits).tobytes()
    return Encoded(q, stream, y, _stats(x, q, y, u, z, cfg) if N > 2 else None)


def _read_header(stream: bytes, cfg: CoderConfig) -> int:
    if len(stream) < HEADER.size:
        raise TruncatedStreamError("stream shorter than its header", np.zeros(0))
    magic, version, _, step, beta, seed, N, crc = HEADER.unpack_from(stream)
    if magic != MAGIC or version != VERSION:
        raise ValueError("not a crdlab bitstream (bad magic or version)")
    if crc != cfg.checksum(N) or (step, beta, seed) != (cfg.step, cfg.scaling, cfg.dither_seed):
        raise ChecksumError("header checksum does not match the decoder configuration")
    return N


def iter_decode(stream: bytes, cfg: CoderConfig, chunk: int = 4096) -> Iterator[float]:
    """Yield ``y(k)`` as soon as the codeword of sample k has been read.

    Raises TruncatedStreamError (carrying the samples already produced) at the
    first codeword that cannot be read.
    """
    N = _read_header(stream, cfg)
    bits = np.unpackbits(np.frombuffer(stream, dtype=np.uint8, offset=HEADER.size))
    pos = 0
    done = 0
    prev = 0.0
    gen = dither_stream(cfg)
    produced: list[np.ndarray] = []
    pending = np.zeros(0, dtype=np.uint64)
    while done < N:
        want = min(chunk, N - done)
        vals, got, pos = kernels.gamma_decode(bits, pos, want)
        vals = np.concatenate([pending, vals[:got]])
        q, used = _unzigzag(vals)
        pending = vals[used:]
        q = q[: N - done]
        if q.size:
            z = dither(cfg, q.size, gen)
            y = kernels.dpcm_reconstruct(q, z, cfg.predictor, cfg.step, cfg.scaling, prev)
            prev = float(y[-1])
            produced.append(y)
            done += q.size
            yield from y.tolist()
        if got < want and done < N:
            partial = np.concatenate(produced) if produced else np.zeros(0)
            raise TruncatedStreamError(
                f"bitstream ends inside the codeword of sample {done + 1} of {N}", partial)


def decode(stream: bytes, cfg: CoderConfig) -> np.ndarray:
    out: list[float] = []
    try:
        for v in iter_decode(stream, cfg):
            out.append(v)
    except TruncatedStreamError as exc:
        raise TruncatedStreamError(str(exc), np.asarray(out)) from None
    return np.asarray(out)


# -- evaluation ----------------------------------------------------------------


def synthesize(model: ArSourceModel, N: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR samples: the filter state starts from the stationary law."""
    a = np.asarray(model.coeffs, dtype=float)
    w = rng.standard_normal(N) * math.sqrt(model.innovation_variance)
    if model.order == 0:
        return w
    x0 = rng.standard_normal() * math.sqrt(model.stationary_variance)
    den = np.concatenate(([1.0], -a[: model.order]))
    zi = np.array([a[0] * x0]) if model.order == 1 else None
    if zi is None:
        raise UnsupportedOrderError("synthesis supports AR order <= 1")
    x, _ = lfilter([1.0], den, w, zi=zi)
    return x


def seeds(seed: int) -> tuple[np.random.Generator, int]:
    """Independent source generator and 64-bit dither key from one seed."""
    src, dit = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(src), int(dit.generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class Evaluation:
    config: CoderConfig
    stats: BitstreamStats
    R_measured: float
    entropy_gap: float
    prefix_gap: float
    report: AuditReport

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "stats": self.stats.to_dict(),
            "R_stationary_at_measured_D_bits": self.R_measured,
            "entropy_gap_bits": self.entropy_gap,
            "prefix_gap_bits": self.prefix_gap,
            "audit": self.report.to_dict(),
        }


def evaluate(model: ArSourceModel, D: float, N: int = 200_000, seed: int = 0) -> Evaluation:
    """Design, encode and decode N synthetic samples and compare rates to the bound."""
    if N < 10_000:
        raise ValueError("evaluation needs at least 10^4 samples")
    rng, key = seeds(seed)
    cfg = design_coder(model, D, key)
    x = synthesize(model, N, rng)
    enc = encode(x, cfg)
    y = decode(enc.bitstream, cfg)
    st = enc.stats
    R = stationary_irdf(model, st.mse).R
    eg = st.entropy_rate_bits - R
    pg = st.prefix_rate_bits - R
    rep = AuditReport("coder.evaluate")
    rep.add(Check.leq("decoder_matches_encoder_loop", float(np.max(np.abs(y - enc.reconstruction))), 0.0))
    rep.add(Check.leq("rate_not_below_information_bound", -eg, STAT_SLACK))
    rep.add(Check.leq("entropy_gap_within_causal_bound", eg, ENTROPY_GAP + STAT_SLACK))
    rep.add(Check.leq("prefix_gap_within_zero_delay_bound", pg, PREFIX_GAP))
    rep.add(Check.leq("prefix_rate_not_below_entropy_rate", st.entropy_rate_bits - 1e-9,
                      st.prefix_rate_bits))
    rep.add(Check.leq("kraft_sum", float(kraft_sum(cfg)), 1.0))
    return Evaluation(cfg, st, R, eg, pg, rep)


def dither_noise_audit(noise: np.ndarray, step: float, quantizer_input: np.ndarray | None = None,
                       lags: int = 8) -> AuditReport:
    """Subtractive-dither noise should be uniform-variance, white and input-independent."""
    noise = np.asarray(noise, dtype=float)
    if noise.size < 10_000:
        raise ValueError("dither audit needs at least 10^4 samples")
    rep = AuditReport("coder.dither_noise")
    target = step * step / 12.0
    rep.add(Check.leq("noise_variance_matches_uniform", abs(float(np.var(noise)) / target - 1.0), 0.02,
                      detail=f"target={fmt(target)}"))
    for k, r in enumerate(autocorrelation(noise, lags), start=1):
        rep.add(Check.leq("noise_autocorrelation_small", abs(r), 0.02, detail=f"lag={k}"))
    if quantizer_input is not None:
        c = float(np.corrcoef(noise, quantizer_input)[0, 1])
        rep.add(Check.leq("noise_uncorrelated_with_input", abs(c), 0.02))
    return rep


def quantizer_noise(x: np.ndarray, cfg: CoderConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample quantizer noise ``i step - z - u`` and the quantizer input u."""
    x = np.ascontiguousarray(x, dtype=float)
    z = dither(cfg, x.shape[0])
    q, _, u = kernels.dpcm_encode(x, z, cfg.predictor, cfg.step, cfg.scaling)
    return q * cfg.step - z - u, u
