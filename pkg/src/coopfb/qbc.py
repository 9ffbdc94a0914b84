"""Quantization-based combining.

Given a channel matrix and a target codeword, the receive combiner is chosen
so that the effective channel ``H^H z`` aligns as well as possible with the
codeword: project the codeword onto the channel's row subspace, then invert
the Gram system to find the combiner that reproduces the projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .model import GlobalCodebook


def _channel_array(channel) -> np.ndarray:
    return getattr(channel, "h", channel)


@dataclass(frozen=True)
class CombinedChannel:
    """Result of combining toward one target codeword.

    ``combiner`` is unit norm, ``h_eff = H^H combiner`` points along the
    projected codeword, and ``beam`` records the target index when the
    caller selected the codeword out of a codebook.
    """

    combiner: np.ndarray
    h_eff: np.ndarray
    beam: int | None = None


@dataclass(frozen=True)
class CsiReport:
    """One user's feedback: chosen beam index, its SINR, and the combiner used."""

    user: int
    beam: int
    cqi: float
    combiner: np.ndarray


def combine_for_codeword(channel, codeword) -> CombinedChannel:
    """QBC combiner and effective channel for a single target codeword."""
    h = _channel_array(channel)
    basis = numerics.orthonormal_basis(h)
    projected = numerics.subspace_project_unit(codeword, basis)
    u = numerics.gram_solve(h, projected)
    z = u / np.linalg.norm(u)
    return CombinedChannel(combiner=z, h_eff=h.conj().T @ z)


def sinr_for_beam(h_eff: np.ndarray, codebook: GlobalCodebook, beam: int, rho: float) -> float:
    """SINR of an effective channel served by beam ``beam``.

    All other beams of the unitary codebook transmit simultaneously, so the
    denominator carries the noise-normalised power ``m / rho`` plus every
    cross-beam leakage term.
    """
    m = codebook.num_beams
    powers = np.abs(codebook.matrix.conj().T @ h_eff) ** 2
    signal = powers[beam]
    return float(signal / (m / rho + (powers.sum() - signal)))


def select_csi(channel, codebook: GlobalCodebook, rho: float, user: int = 0) -> CsiReport:
    """Evaluate every beam and report the SINR-maximising one.

    Ties break toward the lowest beam index so regression runs are
    deterministic. A beam whose codeword is orthogonal to the channel
    subspace cannot be served at all and is skipped; at least one beam
    always has a nonzero projection.
    """
    h = _channel_array(channel)
    best = None
    for beam in range(codebook.num_beams):
        try:
            combined = combine_for_codeword(h, codebook.codeword(beam))
        except numerics.DegenerateProjection:
            continue
        gamma = sinr_for_beam(combined.h_eff, codebook, beam, rho)
        if best is None or gamma > best[0]:
            best = (gamma, beam, combined.combiner)
    if best is None:
        raise numerics.DegenerateProjection("no codeword projects onto the channel subspace")
    gamma, beam, combiner = best
    return CsiReport(user=user, beam=beam, cqi=gamma, combiner=combiner)
