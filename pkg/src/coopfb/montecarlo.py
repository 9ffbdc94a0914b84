"""Trial orchestration, empirical statistics, and the figure-class experiments.

The per-trial pipeline is vectorised across users (stacked small-matrix
linear algebra) so large-population sweeps stay fast; the arithmetic is the
same modified Gram-Schmidt / Gram-solve sequence the per-user modules use.
Every random quantity is keyed by (seed, trial, purpose), so results are
bit-identical for any worker count, and trials resample their draws when a
channel comes out numerically rank deficient (counted, never silently).
"""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from . import analysis, cooperation, numerics, qbc
from .model import (
    GlobalCodebook,
    RandomStream,
    SystemConfig,
    complex_gaussian,
    db_to_linear,
    derive_trial_rng,
    gen_global_codebook,
    gen_local_codebook,
)

MAX_RESAMPLE_ATTEMPTS = 16
EXPERIMENTS = ("fig3", "fig5", "fig6", "fig7", "fig8", "fig9")

_DEGENERATE = (numerics.RankDeficient, numerics.DegenerateProjection)


class EmptyInput(ValueError):
    """An empirical statistic was asked for on an empty sample set."""


# ---------------------------------------------------------------------------
# Empirical statistics
# ---------------------------------------------------------------------------


def empirical_cdf(samples: Sequence[float], grid) -> np.ndarray:
    """Right-continuous empirical cdf evaluated on ``grid``."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise EmptyInput("empirical_cdf needs at least one sample")
    return np.searchsorted(s, np.asarray(grid, dtype=float), side="right") / s.size


def ks_distance(samples: Sequence[float], cdf: Callable, region: Optional[float] = None) -> float:
    """Sup distance between the empirical cdf of ``samples`` and ``cdf``.

    Evaluated at the sample points (both sides of each empirical jump).
    ``region`` restricts the sup to where the model cdf is at least that
    probability, which is how upper-tail agreement is scored.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    if n == 0:
        raise EmptyInput("ks_distance needs at least one sample")
    # Evaluating the model's left limits keeps the statistic exact when the
    # model itself is a step function (e.g. another empirical cdf).
    model_right = np.asarray(cdf(s), dtype=float)
    model_left = np.asarray(cdf(np.nextafter(s, -np.inf)), dtype=float)
    below = np.arange(0, n) / n
    above = np.arange(1, n + 1) / n
    gaps = np.maximum(np.abs(above - model_right), np.abs(below - model_left))
    if region is not None:
        mask = model_right >= region
        if not mask.any():
            raise ValueError(f"no samples fall in the region with model cdf >= {region}")
        gaps = gaps[mask]
    return float(gaps.max())


# ---------------------------------------------------------------------------
# Batched per-trial engine
# ---------------------------------------------------------------------------


@dataclass
class _ConvArrays:
    sig: np.ndarray
    intf: np.ndarray
    sin2_global: np.ndarray
    eff_norm2: np.ndarray


@dataclass
class _CoopArrays:
    sig_qu: np.ndarray
    intf_qu: np.ndarray
    sig_dl: np.ndarray
    intf_dl: np.ndarray
    sin2_global: np.ndarray
    eff_norm2: np.ndarray
    sin2_local: np.ndarray
    hvirt_norm2: np.ndarray
    local_intf: np.ndarray


@dataclass
class TrialWorkspace:
    """SNR-independent per-trial quantities for every user."""

    cfg: SystemConfig
    trial: int
    resamples: int
    codebook: GlobalCodebook
    conv: Optional[_ConvArrays]
    coop: Optional[_CoopArrays]


def _beam_correlations(heff_cols: np.ndarray, cb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signal and interference powers for effective channels stacked as
    columns ``(k, m_dim, beams)`` against codebook columns ``cb``."""
    corr = np.matmul(heff_cols.conj().transpose(0, 2, 1), cb)  # (k, beams, m)
    powers = corr.real**2 + corr.imag**2
    beams = np.arange(cb.shape[1])
    sig = powers[:, beams, beams]
    return sig, powers.sum(axis=-1) - sig


def _check_rank(gram: np.ndarray) -> None:
    if np.any(np.abs(np.linalg.det(gram)) < numerics.RANK_TOL):
        raise numerics.RankDeficient("Gram determinant below tolerance")


def _qbc_stage(h: np.ndarray, gram: np.ndarray, basis: np.ndarray, cb: np.ndarray):
    """Batched QBC of stacked channels against every codebook column.

    Returns per-(user, beam): cos^2 of the projection, squared effective
    norm, unit combiners as columns, and unit effective channels as columns.
    """
    corr = np.matmul(basis.conj().transpose(0, 2, 1), cb)  # (k, rank, beams)
    cos2 = np.sum(corr.real**2 + corr.imag**2, axis=1)  # (k, beams)
    norms = np.sqrt(cos2)
    if np.any(norms <= numerics.PROJECTION_TOL):
        raise numerics.DegenerateProjection("codeword orthogonal to a channel subspace")
    projected = np.matmul(basis, corr) / norms[:, None, :]  # unit columns
    u = np.linalg.solve(gram, np.matmul(h, projected))  # (k, rank, beams)
    u_norm2 = np.sum(u.real**2 + u.imag**2, axis=1)
    combiners = u / np.sqrt(u_norm2)[:, None, :]
    heff_cols = projected / np.sqrt(u_norm2)[:, None, :]
    return cos2, 1.0 / u_norm2, combiners, heff_cols


def build_workspace(
    cfg: SystemConfig, trial: int, *, coop: bool = True, conv: bool = False
) -> TrialWorkspace:
    """Draw one trial and precompute every SNR-independent quantity.

    Redraws the whole trial (counted) if any channel or stacked matrix is
    numerically rank deficient, which for Gaussian draws is a measure-zero
    event.
    """
    base = derive_trial_rng(cfg.seed, trial)
    for attempt in range(MAX_RESAMPLE_ATTEMPTS):
        rng = base if attempt == 0 else base.child("resample", attempt)
        try:
            return _build_workspace_once(cfg, trial, rng, attempt, coop, conv)
        except _DEGENERATE:
            continue
    raise numerics.RankDeficient(
        f"trial {trial} failed to produce full-rank draws after {MAX_RESAMPLE_ATTEMPTS} attempts"
    )


def _build_workspace_once(
    cfg: SystemConfig, trial: int, rng: RandomStream, attempt: int, coop: bool, conv: bool
) -> TrialWorkspace:
    k, n, m = cfg.k, cfg.n, cfg.m
    h = complex_gaussian(rng.child("channels").generator(), (k, n, m))
    codebook = gen_global_codebook(cfg, rng)
    cb = codebook.matrix

    gram = numerics.gram_matrix(h)
    _check_rank(gram)
    basis = numerics.mgs_columns(h.conj().transpose(0, 2, 1))  # (k, m, n)

    conv_arrays = None
    if conv:
        cos2, eff_norm2, _, heff = _qbc_stage(h, gram, basis, cb)
        sig, intf = _beam_correlations(heff, cb)
        conv_arrays = _ConvArrays(
            sig=sig,
            intf=intf,
            sin2_global=np.clip(1.0 - cos2, 0.0, 1.0),
            eff_norm2=eff_norm2,
        )

    coop_arrays = None
    if coop:
        local_cb = gen_local_codebook(cfg, rng).vectors
        # Local acquisition: the best QBC alignment per codeword is the
        # squared norm of its projection onto the channel subspace, so the
        # argmax only needs one correlation pass.
        corr = np.matmul(local_cb.conj(), basis)  # (k, qcl, n) via broadcasting
        cos2_all = np.sum(corr.real**2 + corr.imag**2, axis=2)
        chosen = np.argmax(cos2_all, axis=1)  # (k,)
        v = local_cb[chosen]  # (k, m)
        w = np.matmul(basis.conj().transpose(0, 2, 1), v[:, :, None])
        proj = np.matmul(basis, w)[:, :, 0]
        pnorm = np.linalg.norm(proj, axis=1)
        if np.any(pnorm <= numerics.PROJECTION_TOL):
            raise numerics.DegenerateProjection("local codeword orthogonal to a channel")
        proj /= pnorm[:, None]
        u = np.linalg.solve(gram, np.matmul(h, proj[:, :, None]))  # (k, n, 1)
        z_local = (u / np.linalg.norm(u, axis=1, keepdims=True))[:, :, 0]
        h_virt = np.matmul(h.conj().transpose(0, 2, 1), z_local[:, :, None])[:, :, 0]
        tau = np.abs(np.sum(v.conj() * h_virt, axis=1))
        hv_norm2 = np.sum(h_virt.real**2 + h_virt.imag**2, axis=1)
        sin2_local = np.clip(1.0 - tau * tau / hv_norm2, 0.0, 1.0)

        # Global acquisition over the partner-stacked (n+1)-row matrices.
        partner = np.arange(k) ^ 1
        quant_row = (tau[:, None] * v).conj()[partner][:, None, :]
        downlink_row = h_virt.conj()[partner][:, None, :]
        h_qu = np.concatenate([h, quant_row], axis=1)  # (k, n+1, m)
        h_dl = np.concatenate([h, downlink_row], axis=1)
        gram_g = numerics.gram_matrix(h_qu)
        _check_rank(gram_g)
        basis_g = numerics.mgs_columns(h_qu.conj().transpose(0, 2, 1))
        cos2_g, eff_norm2, combiners, heff_qu = _qbc_stage(h_qu, gram_g, basis_g, cb)
        sig_qu, intf_qu = _beam_correlations(heff_qu, cb)
        heff_dl = np.matmul(h_dl.conj().transpose(0, 2, 1), combiners)  # (k, m, beams)
        sig_dl, intf_dl = _beam_correlations(heff_dl, cb)
        last_row_power = combiners[:, n, :].real ** 2 + combiners[:, n, :].imag ** 2
        coop_arrays = _CoopArrays(
            sig_qu=sig_qu,
            intf_qu=intf_qu,
            sig_dl=sig_dl,
            intf_dl=intf_dl,
            sin2_global=np.clip(1.0 - cos2_g, 0.0, 1.0),
            eff_norm2=eff_norm2,
            sin2_local=sin2_local,
            hvirt_norm2=hv_norm2,
            local_intf=last_row_power * (hv_norm2 * sin2_local)[partner][:, None],
        )

    return TrialWorkspace(
        cfg=cfg, trial=trial, resamples=attempt, codebook=codebook, conv=conv_arrays, coop=coop_arrays
    )


@dataclass
class _ModeEval:
    """Per-SNR outcome of one trial under one mode (axis 0 indexes SNR)."""

    users: np.ndarray  # (r, m) scheduled user per beam, -1 when unassigned
    reported: np.ndarray  # (r, m) reported CQI of the scheduled user
    gamma_num: np.ndarray  # (r, m) numerical downlink SINR
    sum_rate: np.ndarray  # (r,)
    unassigned: np.ndarray  # (r,) count of beams with no reporter


def evaluate_mode(ws: TrialWorkspace, mode: str, rho_lin: np.ndarray) -> _ModeEval:
    """Selection, role assignment, scheduling, and rates at each SNR."""
    cfg = ws.cfg
    m = cfg.m
    rho_lin = np.atleast_1d(np.asarray(rho_lin, dtype=float))
    noise = m / rho_lin  # (r,)

    if mode == analysis.COOPERATIVE:
        if ws.coop is None:
            raise ValueError("workspace was built without the cooperative stage")
        sel_sig, sel_intf = ws.coop.sig_qu, ws.coop.intf_qu
        dl_sig, dl_intf = ws.coop.sig_dl, ws.coop.intf_dl
    elif mode == analysis.CONVENTIONAL:
        if ws.conv is None:
            raise ValueError("workspace was built without the conventional stage")
        sel_sig, sel_intf = ws.conv.sig, ws.conv.intf
        dl_sig, dl_intf = ws.conv.sig, ws.conv.intf
    else:
        raise ValueError(f"unknown mode {mode!r}")

    cqi = sel_sig[None, :, :] / (noise[:, None, None] + sel_intf[None, :, :])  # (r, k, m)
    beam = np.argmax(cqi, axis=2)  # (r, k); ties resolve to the lowest beam
    cqi_sel = np.take_along_axis(cqi, beam[:, :, None], axis=2)[:, :, 0]

    if mode == analysis.COOPERATIVE:
        evens = np.arange(0, cfg.k, 2)
        odds = evens + 1
        # Larger global CQI wins the main-user role; ties to the lower index.
        reporters = np.where(cqi_sel[:, evens] >= cqi_sel[:, odds], evens, odds)  # (r, k/2)
        rep_beam = np.take_along_axis(beam, reporters, axis=1)
        rep_cqi = np.take_along_axis(cqi_sel, reporters, axis=1)
    else:
        reporters = np.broadcast_to(np.arange(cfg.k), beam.shape)
        rep_beam = beam
        rep_cqi = cqi_sel

    r_axis = np.arange(rho_lin.size)
    users = np.full((rho_lin.size, m), -1, dtype=np.int64)
    reported = np.full((rho_lin.size, m), np.nan)
    gamma_num = np.zeros((rho_lin.size, m))
    for target in range(m):
        mask = rep_beam == target
        has = mask.any(axis=1)
        masked = np.where(mask, rep_cqi, -np.inf)
        pick = np.argmax(masked, axis=1)  # first max -> lowest user index
        chosen = reporters[r_axis, pick]
        users[:, target] = np.where(has, chosen, -1)
        reported[:, target] = np.where(has, masked[r_axis, pick], np.nan)
        gamma = dl_sig[chosen, target] / (noise + dl_intf[chosen, target])
        gamma_num[:, target] = np.where(has, gamma, 0.0)
    return _ModeEval(
        users=users,
        reported=reported,
        gamma_num=gamma_num,
        sum_rate=np.log2(1.0 + gamma_num).sum(axis=1),
        unassigned=(users < 0).sum(axis=1),
    )


# ---------------------------------------------------------------------------
# Trial records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    """Everything observable from one trial at one SNR."""

    trial: int
    requested_mode: str
    mode: str  # pipeline actually executed (adaptive resolves to one of the two)
    rho: float
    scheduled: tuple[Optional[int], ...]
    reported_cqi: tuple[Optional[float], ...]
    numerical_sinr: tuple[Optional[float], ...]
    sum_rate: float
    local_error: tuple[Optional[float], ...]
    global_error: tuple[Optional[float], ...]
    global_interference: tuple[Optional[float], ...]
    local_interference: tuple[Optional[float], ...]
    effective_norm2: tuple[Optional[float], ...]
    resamples: int


def run_trial(cfg: SystemConfig, mode: str, trial: int) -> TrialRecord:
    """One full trial: draws, acquisition, scheduling, and numerical rates.

    ``adaptive`` consults the closed-form switching rule first and then runs
    the chosen pipeline.
    """
    requested = mode
    if mode == "adaptive":
        mode = analysis.mode_switch(cfg.k, cfg.m, cfg.n, cfg.rho, cfg.bcl).mode
    if mode not in (analysis.COOPERATIVE, analysis.CONVENTIONAL):
        raise ValueError(f"unknown mode {requested!r}")

    is_coop = mode == analysis.COOPERATIVE
    ws = build_workspace(cfg, trial, coop=is_coop, conv=not is_coop)
    ev = evaluate_mode(ws, mode, np.array([cfg.rho]))

    scheduled, rep, gnum = [], [], []
    local_err, global_err, global_int, local_int, eff_n2 = [], [], [], [], []
    for target in range(cfg.m):
        user = int(ev.users[0, target])
        if user < 0:
            scheduled.append(None)
            for acc in (rep, gnum, local_err, global_err, global_int, local_int, eff_n2):
                acc.append(None)
            continue
        scheduled.append(user)
        rep.append(float(ev.reported[0, target]))
        gnum.append(float(ev.gamma_num[0, target]))
        if is_coop:
            arrays = ws.coop
            partner = user ^ 1
            local_err.append(float(arrays.sin2_local[partner]))
            local_int.append(float(arrays.local_intf[user, target]))
        else:
            arrays = ws.conv
            local_err.append(None)
            local_int.append(None)
        global_err.append(float(arrays.sin2_global[user, target]))
        global_int.append(
            float(arrays.eff_norm2[user, target] * arrays.sin2_global[user, target])
        )
        eff_n2.append(float(arrays.eff_norm2[user, target]))

    return TrialRecord(
        trial=trial,
        requested_mode=requested,
        mode=mode,
        rho=cfg.rho,
        scheduled=tuple(scheduled),
        reported_cqi=tuple(rep),
        numerical_sinr=tuple(gnum),
        sum_rate=float(ev.sum_rate[0]),
        local_error=tuple(local_err),
        global_error=tuple(global_err),
        global_interference=tuple(global_int),
        local_interference=tuple(local_int),
        effective_norm2=tuple(eff_n2),
        resamples=ws.resamples,
    )


# ---------------------------------------------------------------------------
# Single-pair samplers used by the distribution experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _PairSample:
    sin2_local: float
    sin2_global: float
    eff_norm2: float
    local_intf: float


def _sample_pair(cfg: SystemConfig, trial: int, beam: int = 0) -> tuple[_PairSample, int]:
    """One cooperation-pair draw evaluated at a fixed beam.

    No role swap and no scheduling: this samples the per-candidate
    distributions the closed-form chain models (user 0 stacks user 1's
    shared local CSI).
    """
    base = derive_trial_rng(cfg.seed, trial)
    for attempt in range(MAX_RESAMPLE_ATTEMPTS):
        rng = base if attempt == 0 else base.child("resample", attempt)
        try:
            pair = complex_gaussian(rng.child("channels").generator(), (2, cfg.n, cfg.m))
            codebook = gen_global_codebook(cfg, rng)
            local_cb = gen_local_codebook(cfg, rng)
            local = cooperation.acquire_local_csi(pair[1], local_cb)
            glob = cooperation.build_global_matrix(pair[0], local)
            combined = qbc.combine_for_codeword(glob.h_qu, codebook.codeword(beam))
            h_eff = combined.h_eff
            norm2 = float(np.vdot(h_eff, h_eff).real)
            cos2 = float(np.abs(np.vdot(h_eff, codebook.codeword(beam))) ** 2 / norm2)
            sin2 = min(max(1.0 - cos2, 0.0), 1.0)
            local_intf = float(
                np.abs(combined.combiner[cfg.n]) ** 2
                * np.vdot(local.h_virt, local.h_virt).real
                * local.sin2_error
            )
            return (
                _PairSample(
                    sin2_local=local.sin2_error,
                    sin2_global=sin2,
                    eff_norm2=norm2,
                    local_intf=local_intf,
                ),
                attempt,
            )
        except _DEGENERATE:
            continue
    raise numerics.RankDeficient(f"pair sample {trial} failed after {MAX_RESAMPLE_ATTEMPTS} attempts")


def _surrogate_norm_sample(cfg: SystemConfig, trial: int, omega: float) -> float:
    """Stacked-norm surrogate: covariance-modelled channel plus a
    unit-modulus combining direction (quadratic-form sampling)."""
    gen = derive_trial_rng(cfg.seed, trial, "surrogate").generator()
    n, m = cfg.n, cfg.m
    hw = complex_gaussian(gen, (n + 1, m))
    hw[n] *= math.sqrt((1.0 - omega) * (m - n + 1.0) / m)
    psi = gen.uniform(0.0, 2.0 * np.pi, n + 1)
    w = np.exp(1j * psi) / math.sqrt(n + 1.0)
    solved = np.linalg.solve(hw @ hw.conj().T, w)
    return float(1.0 / np.vdot(w, solved).real)


# ---------------------------------------------------------------------------
# Parallel map over trial chunks
# ---------------------------------------------------------------------------


def _parallel_chunks(fn, n_trials: int, workers: int) -> list:
    """Run ``fn(lo, hi)`` over a partition of the trial range.

    Results come back in chunk order; per-trial outputs depend only on the
    trial index, so the assembled output is identical for any worker count.
    """
    workers = max(1, int(workers))
    if workers == 1 or n_trials == 1:
        return [fn(0, n_trials)]
    chunks = min(workers * 4, n_trials)
    bounds = np.linspace(0, n_trials, chunks + 1).astype(int)
    spans = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:
        ctx = multiprocessing.get_context()
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in spans]
        return [f.result() for f in futures]


def _pair_chunk(cfg: SystemConfig, beam: int, lo: int, hi: int):
    out = np.empty((hi - lo, 4))
    resamples = 0
    for i, trial in enumerate(range(lo, hi)):
        sample, attempts = _sample_pair(cfg, trial, beam)
        out[i] = (sample.sin2_local, sample.sin2_global, sample.eff_norm2, sample.local_intf)
        resamples += attempts
    return out, resamples


def _local_error_chunk(cfg: SystemConfig, lo: int, hi: int):
    """Selected local quantization error of a single fresh user per trial."""
    out = np.empty(hi - lo)
    resamples = 0
    for i, trial in enumerate(range(lo, hi)):
        base = derive_trial_rng(cfg.seed, trial)
        for attempt in range(MAX_RESAMPLE_ATTEMPTS):
            rng = base if attempt == 0 else base.child("resample", attempt)
            try:
                h = complex_gaussian(rng.child("channels").generator(), (cfg.n, cfg.m))
                local_cb = gen_local_codebook(cfg, rng)
                out[i] = cooperation.acquire_local_csi(h, local_cb).sin2_error
                resamples += attempt
                break
            except _DEGENERATE:
                continue
        else:
            raise numerics.RankDeficient(f"trial {trial} failed to draw a full-rank channel")
    return out, resamples


def _surrogate_chunk(cfg: SystemConfig, omega: float, lo: int, hi: int):
    return np.array([_surrogate_norm_sample(cfg, t, omega) for t in range(lo, hi)])


def _rate_chunk(cfg: SystemConfig, rho_lin: np.ndarray, want_coop: bool, want_conv: bool, lo: int, hi: int):
    n_rho = rho_lin.size
    coop_rates = np.empty((hi - lo, n_rho)) if want_coop else None
    conv_rates = np.empty((hi - lo, n_rho)) if want_conv else None
    resamples = 0
    unassigned = 0
    for i, trial in enumerate(range(lo, hi)):
        ws = build_workspace(cfg, trial, coop=want_coop, conv=want_conv)
        resamples += ws.resamples
        if want_coop:
            ev = evaluate_mode(ws, analysis.COOPERATIVE, rho_lin)
            coop_rates[i] = ev.sum_rate
            unassigned += int(ev.unassigned.sum())
        if want_conv:
            ev = evaluate_mode(ws, analysis.CONVENTIONAL, rho_lin)
            conv_rates[i] = ev.sum_rate
            unassigned += int(ev.unassigned.sum())
    return coop_rates, conv_rates, resamples, unassigned


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    """Table plus aggregates for one experiment run; reproducible per seed."""

    experiment: str
    config: dict
    columns: list
    rows: list
    aggregates: dict
    seed: int
    trials: int
    resample_count: int


_CDF_PROBS = np.arange(1, 200) / 200.0  # quantile grid for cdf-style figures


def _experiment_defaults(experiment: str) -> dict:
    rho_grid = [float(d) for d in range(-5, 26)]
    common = dict(m=4, trials=10000, seed=0, codebook_mode="haar")
    per_id = {
        "fig3": dict(n=2, bcl_grid=list(range(2, 11))),
        "fig5": dict(n=2, bcl=8, beam=0),
        "fig6": dict(n=2, bcl=8, beam=0, rho_db=[0.0, 10.0, 20.0]),
        "fig7": dict(configs=[(3, 4), (2, 8)], k_grid=[50, 100, 200, 400], rho_db=rho_grid),
        "fig8": dict(n=3, bcl=6, k=200, rho_db=rho_grid),
        "fig9": dict(n_grid=[2, 3], bcl=8, beam=0),
    }
    if experiment not in per_id:
        raise ValueError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    return {**common, **per_id[experiment]}


def _resolve(experiment: str, overrides: Optional[dict]) -> dict:
    params = _experiment_defaults(experiment)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in params and key not in ("k", "n", "bcl", "rho_db"):
            raise ValueError(f"{experiment} does not accept override {key!r}")
        params[key] = value
    return params


def _base_config(params: dict, **extra) -> SystemConfig:
    fields = dict(
        m=params["m"],
        n=params.get("n", 2),
        k=params.get("k", 2 * params["m"]),
        bcl=params.get("bcl", 8),
        trials=params["trials"],
        seed=params["seed"],
        codebook_mode=params["codebook_mode"],
    )
    fields.update(extra)
    return SystemConfig(**fields)


def run_experiment(experiment: str, overrides: Optional[dict] = None, workers: int = 1) -> ExperimentResult:
    """Run one figure-class experiment and return its table and aggregates."""
    params = _resolve(experiment, overrides)
    runner = {
        "fig3": _run_fig3,
        "fig5": _run_fig5,
        "fig6": _run_fig6,
        "fig7": _run_fig7,
        "fig8": _run_fig8,
        "fig9": _run_fig9,
    }[experiment]
    return runner(params, workers)


def _run_fig3(params: dict, workers: int) -> ExperimentResult:
    """Mean selected local quantization error vs cooperation-link bits."""
    rows = []
    aggregates = {"rel_err_closed_form": {}, "rel_err_reference": {}}
    resamples = 0
    for bcl in params["bcl_grid"]:
        cfg = _base_config(params, bcl=int(bcl))
        chunks = _parallel_chunks(partial(_local_error_chunk, cfg), cfg.trials, workers)
        samples = np.concatenate([c[0] for c in chunks])
        resamples += sum(c[1] for c in chunks)
        mc_mean = float(samples.mean())
        closed = analysis.expected_local_error(cfg.m, cfg.n, cfg.qcl)
        reference = analysis.reference_local_error(cfg.m, cfg.n, cfg.qcl)
        rows.append((int(bcl), mc_mean, closed, reference))
        aggregates["rel_err_closed_form"][str(bcl)] = abs(mc_mean - closed) / mc_mean
        aggregates["rel_err_reference"][str(bcl)] = abs(mc_mean - reference) / mc_mean
    return ExperimentResult(
        experiment="fig3",
        config=params,
        columns=["bcl", "mc_mean", "closed_form", "reference_formula"],
        rows=rows,
        aggregates=aggregates,
        seed=params["seed"],
        trials=params["trials"],
        resample_count=resamples,
    )


def _collect_pair_samples(params: dict, workers: int) -> tuple[SystemConfig, np.ndarray, int]:
    cfg = _base_config(params)
    chunks = _parallel_chunks(partial(_pair_chunk, cfg, params.get("beam", 0)), cfg.trials, workers)
    data = np.concatenate([c[0] for c in chunks], axis=0)  # columns: sin2_local, sin2_global, u2, li
    return cfg, data, sum(c[1] for c in chunks)


def _run_fig5(params: dict, workers: int) -> ExperimentResult:
    """Cdfs of local/global quantization errors and interference powers."""
    cfg, data, resamples = _collect_pair_samples(params, workers)
    sin2_local, sin2_global, norm2, local_intf = data.T
    global_intf = norm2 * sin2_global
    rows = []
    series = [
        ("local_error", sin2_local),
        ("global_error", sin2_global),
        ("local_interference", local_intf),
        ("global_interference", global_intf),
    ]
    for name, samples in series:
        quantiles = np.quantile(samples, _CDF_PROBS)
        rows.extend((name, float(p), float(q)) for p, q in zip(_CDF_PROBS, quantiles))
    aggregates = {
        "median_local_error": float(np.median(sin2_local)),
        "median_global_error": float(np.median(sin2_global)),
        "median_local_interference": float(np.median(local_intf)),
        "median_global_interference": float(np.median(global_intf)),
    }
    aggregates["local_interference_dominated"] = bool(
        aggregates["median_local_interference"] < aggregates["median_global_interference"]
    )
    return ExperimentResult(
        experiment="fig5",
        config=params,
        columns=["variable", "probability", "quantile"],
        rows=rows,
        aggregates=aggregates,
        seed=params["seed"],
        trials=params["trials"],
        resample_count=resamples,
    )


def _run_fig6(params: dict, workers: int) -> ExperimentResult:
    """Empirical SINR cdfs (exact lower bound and approximation) vs the model."""
    cfg, data, resamples = _collect_pair_samples(params, workers)
    sin2_local, sin2_global, norm2, local_intf = data.T
    cos2_global = 1.0 - sin2_global
    rows = []
    aggregates = {"ks_full": {}, "ks_upper_tail": {}}
    for rho_db in params["rho_db"]:
        rho = db_to_linear(rho_db)
        pars = analysis.derive_params(cfg.m, cfg.n, cfg.qcl, rho)
        c_exact = rho / cfg.m
        c_approx = rho / (cfg.m * pars.alpha)
        sinr_exact = (c_exact * norm2 * cos2_global) / (
            1.0 + c_exact * norm2 * sin2_global + c_exact * local_intf
        )
        sinr_approx = (c_approx * norm2 * cos2_global) / (1.0 + c_approx * norm2 * sin2_global)
        model = lambda x, _p=pars, _r=rho: analysis.sinr_cdf(
            x, cfg.m, cfg.n, _r, _p.alpha, _p.varrho_sq
        )
        grid = np.quantile(sinr_approx, _CDF_PROBS)
        cdf_exact = empirical_cdf(sinr_exact, grid)
        cdf_approx = empirical_cdf(sinr_approx, grid)
        cdf_model = model(grid)
        rows.extend(
            (float(rho_db), float(x), float(a), float(b), float(c))
            for x, a, b, c in zip(grid, cdf_exact, cdf_approx, cdf_model)
        )
        key = f"{rho_db:g}"
        aggregates["ks_full"][key] = ks_distance(sinr_approx, model)
        aggregates["ks_upper_tail"][key] = ks_distance(sinr_approx, model, region=0.5)
    return ExperimentResult(
        experiment="fig6",
        config=params,
        columns=["rho_db", "sinr", "cdf_exact_bound", "cdf_approx", "cdf_model"],
        rows=rows,
        aggregates=aggregates,
        seed=params["seed"],
        trials=params["trials"],
        resample_count=resamples,
    )


def _run_fig7(params: dict, workers: int) -> ExperimentResult:
    """Cooperative sum-rate: Monte Carlo vs closed-form estimate over K and SNR."""
    rho_db = np.asarray(params["rho_db"], dtype=float)
    rho_lin = db_to_linear(rho_db)
    configs = [tuple(c) for c in params["configs"]]
    rows = []
    aggregates = {"mean_rel_gap": {}, "max_rel_gap": {}}
    resamples = 0
    unassigned = 0
    for n_rx, bcl in configs:
        for k_users in params["k_grid"]:
            cfg = _base_config(params, n=int(n_rx), bcl=int(bcl), k=int(k_users))
            chunks = _parallel_chunks(
                partial(_rate_chunk, cfg, rho_lin, True, False), cfg.trials, workers
            )
            rates = np.concatenate([c[0] for c in chunks], axis=0).mean(axis=0)
            resamples += sum(c[2] for c in chunks)
            unassigned += sum(c[3] for c in chunks)
            estimates = np.array(
                [
                    analysis.estimate_sum_rate(cfg.k, cfg.m, cfg.n, rho, cfg.bcl, analysis.COOPERATIVE)
                    for rho in rho_lin
                ]
            )
            rel_gap = np.abs(rates - estimates) / rates
            key = f"n{n_rx}_bcl{bcl}_k{k_users}"
            aggregates["mean_rel_gap"][key] = float(rel_gap.mean())
            aggregates["max_rel_gap"][key] = float(rel_gap.max())
            rows.extend(
                (int(n_rx), int(bcl), int(k_users), float(db), float(mc), float(est))
                for db, mc, est in zip(rho_db, rates, estimates)
            )
    aggregates["unassigned_beams"] = unassigned
    return ExperimentResult(
        experiment="fig7",
        config=params,
        columns=["n", "bcl", "k", "rho_db", "rate_num", "rate_estimate"],
        rows=rows,
        aggregates=aggregates,
        seed=params["seed"],
        trials=params["trials"],
        resample_count=resamples,
    )


def _crossing_db(rho_db: np.ndarray, delta: np.ndarray) -> Optional[float]:
    """First sign change of ``delta`` along the dB axis, linearly interpolated."""
    for i in range(len(rho_db) - 1):
        d0, d1 = delta[i], delta[i + 1]
        if math.isnan(d0) or math.isnan(d1):
            continue
        if d0 == 0.0:
            return float(rho_db[i])
        if (d0 < 0.0 <= d1) or (d0 > 0.0 >= d1):
            return float(rho_db[i] - d0 * (rho_db[i + 1] - rho_db[i]) / (d1 - d0))
    return None


def _run_fig8(params: dict, workers: int) -> ExperimentResult:
    """Sum-rates of conventional, cooperative, and adaptive modes vs SNR."""
    rho_db = np.asarray(params["rho_db"], dtype=float)
    rho_lin = db_to_linear(rho_db)
    cfg = _base_config(params)
    chunks = _parallel_chunks(partial(_rate_chunk, cfg, rho_lin, True, True), cfg.trials, workers)
    coop = np.concatenate([c[0] for c in chunks], axis=0).mean(axis=0)
    conv = np.concatenate([c[1] for c in chunks], axis=0).mean(axis=0)
    resamples = sum(c[2] for c in chunks)
    unassigned = sum(c[3] for c in chunks)

    est_coop = np.full(rho_db.size, np.nan)
    est_conv = np.full(rho_db.size, np.nan)
    decisions = []
    for i, rho in enumerate(rho_lin):
        decision = analysis.mode_switch(cfg.k, cfg.m, cfg.n, rho, cfg.bcl)
        est_coop[i] = decision.rate_cooperative
        est_conv[i] = decision.rate_conventional
        decisions.append(decision.mode)
    adaptive = np.where([d == analysis.COOPERATIVE for d in decisions], coop, conv)

    rows = [
        (float(db), float(cv), float(cp), float(ad), float(ec), float(eo))
        for db, cv, cp, ad, ec, eo in zip(rho_db, conv, coop, adaptive, est_conv, est_coop)
    ]
    aggregates = {
        "mc_crossing_db": _crossing_db(rho_db, coop - conv),
        "analytic_crossing_db": _crossing_db(rho_db, est_coop - est_conv),
        "decisions": {f"{db:g}": mode for db, mode in zip(rho_db, decisions)},
        "unassigned_beams": unassigned,
    }
    return ExperimentResult(
        experiment="fig8",
        config=params,
        columns=[
            "rho_db",
            "rate_conv",
            "rate_coop",
            "rate_adaptive",
            "rate_analytic_conv",
            "rate_analytic_coop",
        ],
        rows=rows,
        aggregates=aggregates,
        seed=params["seed"],
        trials=params["trials"],
        resample_count=resamples,
    )


def _run_fig9(params: dict, workers: int) -> ExperimentResult:
    """Squared stacked-effective-norm distribution vs surrogate and model."""
    rows = []
    aggregates = {"ks_direct_vs_model": {}, "ks_surrogate_vs_model": {}, "ks_surrogate_vs_direct": {}}
    resamples = 0
    for n_rx in params["n_grid"]:
        cfg = _base_config(params, n=int(n_rx))
        chunks = _parallel_chunks(partial(_pair_chunk, cfg, params.get("beam", 0)), cfg.trials, workers)
        direct = np.concatenate([c[0] for c in chunks], axis=0)[:, 2]
        resamples += sum(c[1] for c in chunks)
        omega = analysis.expected_local_error(cfg.m, cfg.n, cfg.qcl)
        varrho_sq = analysis.effective_norm_params(cfg.m, cfg.n, omega)
        surrogate_chunks = _parallel_chunks(
            partial(_surrogate_chunk, cfg, omega), cfg.trials, workers
        )
        surrogate = np.concatenate(surrogate_chunks)
        model = lambda u, _v=varrho_sq, _n=int(n_rx): analysis.effective_norm_cdf(
            u, cfg.m, _n, _v
        )
        grid = np.quantile(direct, _CDF_PROBS)
        cdf_direct = empirical_cdf(direct, grid)
        cdf_surrogate = empirical_cdf(surrogate, grid)
        cdf_model = model(grid)
        rows.extend(
            (int(n_rx), float(x), float(a), float(b), float(c))
            for x, a, b, c in zip(grid, cdf_direct, cdf_surrogate, cdf_model)
        )
        key = str(n_rx)
        aggregates["ks_direct_vs_model"][key] = ks_distance(direct, model)
        aggregates["ks_surrogate_vs_model"][key] = ks_distance(surrogate, model)
        aggregates["ks_surrogate_vs_direct"][key] = ks_distance(
            surrogate, lambda x, _d=direct: empirical_cdf(_d, x)
        )
    return ExperimentResult(
        experiment="fig9",
        config=params,
        columns=["n", "norm_sq", "cdf_direct", "cdf_surrogate", "cdf_model"],
        rows=rows,
        aggregates=aggregates,
        seed=params["seed"],
        trials=params["trials"],
        resample_count=resamples,
    )


def run_sweep(
    cfg: SystemConfig, modes: Sequence[str], rho_db: Sequence[float], workers: int = 1
) -> ExperimentResult:
    """Mean sum-rate of the requested modes over an SNR grid."""
    rho_db = np.asarray(rho_db, dtype=float)
    rho_lin = db_to_linear(rho_db)
    want_coop = any(m in ("cooperative", "adaptive") for m in modes)
    want_conv = any(m in ("conventional", "adaptive") for m in modes)
    chunks = _parallel_chunks(
        partial(_rate_chunk, cfg, rho_lin, want_coop, want_conv), cfg.trials, workers
    )
    coop = np.concatenate([c[0] for c in chunks], axis=0).mean(axis=0) if want_coop else None
    conv = np.concatenate([c[1] for c in chunks], axis=0).mean(axis=0) if want_conv else None
    rows = []
    for mode in modes:
        if mode == "cooperative":
            rates = coop
        elif mode == "conventional":
            rates = conv
        else:
            rates = np.array(
                [
                    coop[i]
                    if analysis.mode_switch(cfg.k, cfg.m, cfg.n, rho, cfg.bcl).mode
                    == analysis.COOPERATIVE
                    else conv[i]
                    for i, rho in enumerate(rho_lin)
                ]
            )
        rows.extend((float(db), mode, float(r)) for db, r in zip(rho_db, rates))
    config = dict(
        m=cfg.m, n=cfg.n, k=cfg.k, bcl=cfg.bcl, trials=cfg.trials, seed=cfg.seed,
        codebook_mode=cfg.codebook_mode, rho_db=[float(d) for d in rho_db], modes=list(modes),
    )
    return ExperimentResult(
        experiment="sweep",
        config=config,
        columns=["rho_db", "mode", "sum_rate"],
        rows=rows,
        aggregates={},
        seed=cfg.seed,
        trials=cfg.trials,
        resample_count=sum(c[2] for c in chunks),
    )
