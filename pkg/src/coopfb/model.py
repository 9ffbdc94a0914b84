"""System configuration, deterministic randomness, and channel/codebook generation.

The randomness contract: every random quantity is drawn from a stream
addressed by ``(seed, trial, purpose)``. Streams are derived by hashing the
label, never by sharing generator state, so results are bit-identical no
matter how trials are ordered or how many workers run them.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from . import numerics

CODEBOOK_MODES = ("haar", "dft")
MODES = ("conventional", "cooperative", "adaptive")


class ConfigError(ValueError):
    """Invalid system configuration."""


@dataclass(frozen=True)
class RandomStream:
    """Label-addressed deterministic random stream.

    A stream is identified by ``(seed, path)``. :meth:`generator` always
    returns a freshly seeded numpy Generator derived from a hash of that
    identity, so draws are reproducible and independent of call order,
    worker count, and sibling streams.
    """

    seed: int
    path: tuple = ()

    def child(self, *labels) -> "RandomStream":
        return RandomStream(self.seed, self.path + tuple(labels))

    def generator(self) -> np.random.Generator:
        tag = repr((int(self.seed), self.path)).encode("utf-8")
        digest = hashlib.sha256(tag).digest()
        return np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))


def derive_trial_rng(seed: int, trial: int, purpose: str = "") -> RandomStream:
    """Independent, reproducible substream for ``(seed, trial, purpose)``."""
    stream = RandomStream(int(seed), (int(trial),))
    return stream.child(str(purpose)) if purpose else stream


def complex_gaussian(gen: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) draws: real/imag parts each have variance 1/2.

    Real/imag pairs are drawn per element, so a slice along the leading axis
    consumes the same stream positions no matter how large the full draw is.
    """
    parts = gen.standard_normal(tuple(shape) + (2,))
    return (parts[..., 0] + 1j * parts[..., 1]) / np.sqrt(2.0)


def db_to_linear(rho_db: float) -> float:
    return 10.0 ** (rho_db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions, SNR, feedback budgets, and Monte Carlo bookkeeping.

    ``m`` transmit antennas (= beams = global codewords), ``n`` receive
    antennas per user, ``k`` users (even, at least ``2*m``), ``rho`` linear
    SNR, ``bcl`` cooperation-link bits, plus trial count and master seed.
    """

    m: int = 4
    n: int = 2
    k: int = 16
    rho: float = 10.0
    bcl: int = 8
    trials: int = 10000
    seed: int = 0
    codebook_mode: str = "haar"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"need n >= 1, got n={self.n}")
        if self.n + 1 > self.m:
            raise ConfigError(
                f"global combining uses n+1 dimensions, so n+1 <= m is required; got n={self.n}, m={self.m}"
            )
        if self.k % 2:
            raise ConfigError(f"k must be even (users pair up two by two), got k={self.k}")
        if self.k < 2 * self.m:
            raise ConfigError(f"need k >= 2*m so every beam can find a user, got k={self.k}, m={self.m}")
        if not (self.rho > 0.0 and math.isfinite(self.rho)):
            raise ConfigError(f"need a positive finite linear SNR, got rho={self.rho}")
        if self.bcl < 0:
            raise ConfigError(f"need bcl >= 0, got bcl={self.bcl}")
        if self.trials < 1:
            raise ConfigError(f"need trials >= 1, got trials={self.trials}")
        if self.codebook_mode not in CODEBOOK_MODES:
            raise ConfigError(f"codebook_mode must be one of {CODEBOOK_MODES}, got {self.codebook_mode!r}")

    @property
    def b(self) -> int:
        """Feedback bits for the global codeword index."""
        return max(1, math.ceil(math.log2(self.m)))

    @property
    def qcl(self) -> int:
        """Number of local codewords, 2**bcl."""
        return 2**self.bcl

    def with_rho(self, rho: float) -> "SystemConfig":
        return replace(self, rho=float(rho))


@dataclass(frozen=True)
class ChannelMatrix:
    """Per-user downlink channel, ``n x m`` with i.i.d. CN(0, 1) entries."""

    user: int
    h: np.ndarray


@dataclass(frozen=True)
class GlobalCodebook:
    """Unitary beamforming codebook; codewords are the columns of ``matrix``."""

    matrix: np.ndarray

    @property
    def num_beams(self) -> int:
        return self.matrix.shape[1]

    def codeword(self, beam: int) -> np.ndarray:
        return self.matrix[:, beam]


@dataclass(frozen=True)
class LocalCodebook:
    """RVQ codebook for the cooperation link; codewords are rows of ``vectors``."""

    vectors: np.ndarray

    def __len__(self) -> int:
        return self.vectors.shape[0]


def gen_all_channels(cfg: SystemConfig, rng: RandomStream) -> np.ndarray:
    """All users' channels for one trial, shape ``(k, n, m)``.

    User ``u`` occupies block ``u`` of the ``"channels"`` substream, so the
    draw for a given user does not depend on how many users are generated.
    """
    gen = rng.child("channels").generator()
    return complex_gaussian(gen, (cfg.k, cfg.n, cfg.m))


def gen_channel(cfg: SystemConfig, user: int, rng: RandomStream) -> ChannelMatrix:
    """Channel matrix of one user, deterministic per (seed, trial, user)."""
    if not 0 <= user < cfg.k:
        raise ConfigError(f"user index {user} outside 0..{cfg.k - 1}")
    gen = rng.child("channels").generator()
    block = complex_gaussian(gen, (user + 1, cfg.n, cfg.m))
    return ChannelMatrix(user=user, h=block[user])


def dft_matrix(m: int) -> np.ndarray:
    """Unitary DFT matrix, the deterministic codebook option."""
    idx = np.arange(m)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / m) / np.sqrt(m)


def gen_global_codebook(cfg: SystemConfig, rng: RandomStream) -> GlobalCodebook:
    """Unitary global codebook: Haar-random by default, DFT when configured."""
    if cfg.codebook_mode == "dft":
        return GlobalCodebook(dft_matrix(cfg.m))
    gen = rng.child("global_codebook").generator()
    return GlobalCodebook(numerics.haar_unitary(cfg.m, gen))


def gen_local_codebook(cfg: SystemConfig, rng: RandomStream) -> LocalCodebook:
    """RVQ codebook: ``qcl`` i.i.d. isotropic unit vectors of length ``m``."""
    gen = rng.child("local_codebook").generator()
    vecs = complex_gaussian(gen, (cfg.qcl, cfg.m))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return LocalCodebook(vecs)
