"""Cooperative D2D link pipeline: semi-orthogonal CR scheduling and sum-rate
power allocation under per-transmitter peak power and per-receiver QoS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .numerics import TOL, PrecoderSingularError, ZfPrecoder
from .topology import Topology, dbm_to_watt

LN2 = math.log(2.0)


@dataclass
class CdlConfig:
    bandwidth_hz: float = 10e6
    epsilon: float = 0.75               # semi-orthogonality admission threshold
    rmin_bps_per_hz: float = 3.0        # QoS floor as spectral efficiency
    pmax_dbm: float = 23.0              # per-transmitter peak power
    noise_dbm: float = -90.0
    step_coef: float = 0.1              # dual steps step_coef / sqrt(t)
    max_dual_iters: int = 2000
    dual_tol: float = TOL.dual_move_rel
    allow_full_rank: bool = True        # admit as many CRs as CTs, not CTs-1

    @property
    def pmax_w(self) -> float:
        return dbm_to_watt(self.pmax_dbm)

    @property
    def noise_w(self) -> float:
        return dbm_to_watt(self.noise_dbm)

    @property
    def sinr_target(self) -> float:
        return 2.0 ** self.rmin_bps_per_hz - 1.0

    def validate(self) -> None:
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.pmax_w <= 0 or self.noise_w <= 0:
            raise ValueError("powers must be positive")
        if self.rmin_bps_per_hz < 0:
            raise ValueError("rmin_bps_per_hz must be >= 0")


def effective_gains(channel_matrix: np.ndarray, w_bar: np.ndarray) -> np.ndarray:
    """Per-receiver effective power gain sum_m |w_bar[m,n]|^2 |h[m,n]|^2."""
    return np.sum(np.abs(w_bar) ** 2 * np.abs(channel_matrix) ** 2, axis=0)


def cdl_sinrs(powers_w, channel_matrix, w_bar, noise_w) -> np.ndarray:
    gains = effective_gains(channel_matrix, w_bar)
    return np.asarray(powers_w) * gains / noise_w


def cdl_rates(powers_w, channel_matrix, w_bar, noise_w, bandwidth_hz) -> np.ndarray:
    """Per-CR rate in bits/s under the interference-free precoded form."""
    return bandwidth_hz * np.log2(1.0 + cdl_sinrs(powers_w, channel_matrix, w_bar, noise_w))


def cdl_rate_general(
    n: int, powers_w, channel_matrix, w_bar, noise_w, bandwidth_hz
) -> float:
    """Rate of CR ``n`` keeping the explicit inter-CDL interference sum.

    With a zero-forcing precoder the cross terms vanish and this matches
    :func:`cdl_rates`; it exists so tests can verify exactly that.
    """
    powers_w = np.asarray(powers_w, dtype=float)
    gains = effective_gains(channel_matrix, w_bar)
    signal = powers_w[n] * gains[n]
    h_n = channel_matrix[:, n]
    cross = np.abs(h_n.conj() @ w_bar) ** 2
    interference = float(np.sum(np.delete(powers_w * cross, n)))
    return bandwidth_hz * math.log2(1.0 + signal / (interference + noise_w))


@dataclass
class CdlPowerResult:
    powers_w: np.ndarray
    lambda_tx: np.ndarray   # per-CT peak-power multipliers
    mu_rx: np.ndarray       # per-CR QoS multipliers
    iterations: int
    converged: bool


def allocate_cdl_power(
    channel_matrix: np.ndarray,
    w_bar: np.ndarray,
    *,
    pmax_w,
    noise_w,
    sinr_targets,
    step_coef: float = 0.1,
    max_iters: int = 2000,
    tol: float = TOL.dual_move_rel,
) -> CdlPowerResult | None:
    """Sum-rate maximizing stream powers, or None when the QoS is infeasible.

    Dual ascent on the per-CT power multipliers and per-CR QoS multipliers
    with the closed-form waterfilling primal; a deterministic minimum-power
    pre-check decides feasibility before iterating.  The returned point
    satisfies every constraint within ``TOL.power_feasibility_rel``.
    """
    num_tx, num_rx = channel_matrix.shape
    pmax_w = np.broadcast_to(np.asarray(pmax_w, dtype=float), (num_tx,)).copy()
    noise_w = np.broadcast_to(np.asarray(noise_w, dtype=float), (num_rx,)).copy()
    targets = np.broadcast_to(np.asarray(sinr_targets, dtype=float), (num_rx,)).copy()
    if num_rx == 0:
        return CdlPowerResult(np.zeros(0), np.zeros(num_tx), np.zeros(0), 0, True)

    wsq = np.abs(w_bar) ** 2                      # (M, N)
    gains = effective_gains(channel_matrix, w_bar)  # (N,)
    if np.any(gains <= 0):
        return None

    # QoS met with equality decouples per CR; test the per-CT budgets there.
    p_min = targets * noise_w / gains
    if np.any(wsq @ p_min > pmax_w * (1.0 + TOL.power_feasibility_rel)):
        return None

    # Any feasible stream power is bounded by the tightest single-CT budget;
    # unit-norm precoder columns keep these caps finite.
    with np.errstate(divide="ignore"):
        caps = np.min(np.where(wsq > 0, pmax_w[:, None] / wsq, np.inf), axis=0)

    def primal(lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
        weighted = wsq.T @ lam
        with np.errstate(divide="ignore"):
            p0 = np.where(
                weighted > 0,
                (1.0 + mu) / (LN2 * np.maximum(weighted, 1e-300)) - noise_w / gains,
                np.inf,
            )
        return np.minimum(np.maximum(p0, 0.0), caps)

    rmin = np.log2(1.0 + targets)
    qos_scale = np.maximum(rmin, 1.0)

    # The ascent runs on multipliers normalized by their natural magnitude
    # (peak-power duals live near num_rx / (ln2 * pmax)); in raw units the
    # diminishing steps cannot cover that distance within the iteration cap.
    lam_scale = np.maximum(num_rx, 1) / (LN2 * pmax_w)
    unit_scale = np.concatenate([lam_scale, np.ones(num_rx)])

    def gradient(stacked: np.ndarray) -> np.ndarray:
        raw = stacked * unit_scale
        powers = primal(raw[:num_tx], raw[num_tx:])
        slack_tx = (pmax_w - wsq @ powers) / pmax_w
        slack_qos = (np.log2(1.0 + powers * gains / noise_w) - rmin) / qos_scale
        return np.concatenate([slack_tx, slack_qos])

    start = np.concatenate([np.ones(num_tx), np.zeros(num_rx)])
    ascent = numerics.projected_dual_ascent(
        gradient,
        start,
        step_schedule=lambda t: step_coef / math.sqrt(t),
        max_iters=max_iters,
        rel_tol=tol,
    )
    raw = ascent.multipliers * unit_scale
    lam, mu = raw[:num_tx], raw[num_tx:]
    powers = np.maximum(primal(lam, mu), p_min)

    # Primal recovery: pull back toward the (feasible) minimum-power point if
    # any CT overshoots, then scale up until the tightest budget is exact.
    used = wsq @ powers
    if np.any(used > pmax_w):
        base = wsq @ p_min
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = (pmax_w - base) / (used - base)
        scale = float(np.clip(np.min(ratios[used > pmax_w]), 0.0, 1.0))
        powers = p_min + scale * (powers - p_min)
    used = wsq @ powers
    if np.all(used > 0):
        powers = np.minimum(powers * np.min(pmax_w / used), caps)

    # Multipliers of constraints left distinctly slack are inactive duals.
    slack = pmax_w - wsq @ powers
    lam = np.where(slack > 1e-3 * pmax_w, 0.0, lam)

    return CdlPowerResult(powers, lam, mu, ascent.iterations, ascent.converged)


@dataclass
class CdlSchedule:
    """Outcome of the cooperative pipeline for one drop."""

    transmitters: np.ndarray          # CT user ids
    receivers: np.ndarray             # CR user ids in selection order
    channel_matrix: np.ndarray        # (|CT|, |CR|) complex
    precoder: ZfPrecoder | None
    powers_w: np.ndarray
    rates_bps: np.ndarray
    dual_iterations: int = 0
    dual_converged: bool = True

    @classmethod
    def empty(cls, transmitters=()) -> "CdlSchedule":
        tx = np.asarray(sorted(transmitters), dtype=int)
        return cls(
            transmitters=tx,
            receivers=np.zeros(0, dtype=int),
            channel_matrix=np.zeros((len(tx), 0), dtype=complex),
            precoder=None,
            powers_w=np.zeros(0),
            rates_bps=np.zeros(0),
        )

    @property
    def num_served(self) -> int:
        return int(self.receivers.size)

    @property
    def sum_rate_bps(self) -> float:
        return float(np.sum(self.rates_bps))


def schedule_cdl(
    transmitters,
    candidates,
    topology: Topology,
    config: CdlConfig,
) -> CdlSchedule:
    """Greedy semi-orthogonal CR selection with per-step power allocation.

    Each round orthogonalizes the remaining candidate channels against the
    already selected ones, admits the strongest residual, re-solves the power
    allocation, and rolls the admission back (stopping) if it turns
    infeasible.  Survivors of each round must keep their normalized channel
    correlation to the newly admitted direction below ``config.epsilon``.
    """
    tx = np.asarray(sorted(transmitters), dtype=int)
    pool = sorted(int(c) for c in candidates)
    limit = tx.size if config.allow_full_rank else tx.size - 1
    if tx.size == 0 or limit <= 0 or not pool:
        return CdlSchedule.empty(tx)

    channel_of = {c: topology.channels[tx, c] for c in pool}
    selected: list[int] = []
    basis: list[np.ndarray] = []
    committed: tuple[ZfPrecoder, CdlPowerResult] | None = None

    round_index = 1
    while round_index <= limit and pool:
        residuals = {t: numerics.gs_residual(channel_of[t], basis) for t in pool}
        pick = max(pool, key=lambda t: (np.linalg.norm(residuals[t]) ** 2, -t))
        trial = selected + [pick]
        h_sel = topology.channels[np.ix_(tx, np.asarray(trial))]
        try:
            precoder = numerics.zf_precoder(h_sel)
        except PrecoderSingularError:
            break
        result = allocate_cdl_power(
            h_sel,
            precoder.normalized,
            pmax_w=config.pmax_w,
            noise_w=config.noise_w,
            sinr_targets=config.sinr_target,
            step_coef=config.step_coef,
            max_iters=config.max_dual_iters,
            tol=config.dual_tol,
        )
        if result is None:
            break
        selected = trial
        committed = (precoder, result)
        direction = residuals[pick]
        norm_dir = np.linalg.norm(direction)
        if norm_dir == 0.0:
            break
        basis.append(direction)
        pool = [
            t
            for t in pool
            if t != pick
            and abs(np.vdot(channel_of[t], direction))
            / (np.linalg.norm(channel_of[t]) * norm_dir)
            < config.epsilon
        ]
        round_index += 1

    if not selected or committed is None:
        return CdlSchedule.empty(tx)
    precoder, result = committed
    h_sel = topology.channels[np.ix_(tx, np.asarray(selected))]
    rates = cdl_rates(
        result.powers_w, h_sel, precoder.normalized, config.noise_w, config.bandwidth_hz
    )
    return CdlSchedule(
        transmitters=tx,
        receivers=np.asarray(selected, dtype=int),
        channel_matrix=h_sel,
        precoder=precoder,
        powers_w=result.powers_w,
        rates_bps=rates,
        dual_iterations=result.iterations,
        dual_converged=result.converged,
    )
