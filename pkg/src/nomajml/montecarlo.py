"""Reproducible Monte Carlo BER estimation over the fading channel.

Every trial draws a fresh channel, uniform data symbols, and receiver
noise; each requested detector then decides all devices and per-device
bit errors are counted through the Gray labels.

Reproducibility contract: a point's randomness comes from one Philox
counter stream keyed by (master_seed, point_index). Each trial owns a
fixed, 4-aligned budget of 64-bit words inside that stream (normals are
produced by inverse-CDF so consumption never varies), so trial t's draws
depend only on (master_seed, point_index, t). Results are therefore
byte-identical for any worker count or batch partition.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from . import __version__
from .analysis import approx_upper_bound, build_distance_table, upper_bound
from .channel import ScenarioConfig
from .constellation import Constellation, bit_error_table, build_psk
from .detectors import JmlWorkspace, detect_jml_batch, detect_sic_batch

DETECTOR_NAMES = ("jml", "sic")

# keeps uniforms strictly inside (0, 1) before the inverse normal CDF
_U_EPS = 2.0**-54


@dataclass(frozen=True)
class StoppingRule:
    """Stop once every tracked cell holds min_errors, or at max_trials."""

    min_errors: int = 400
    max_trials: int = 10_000_000

    def __post_init__(self):
        if self.min_errors < 1:
            raise ValueError(f"min_errors must be >= 1, got {self.min_errors!r}")
        if self.max_trials < 1:
            raise ValueError(f"max_trials must be >= 1, got {self.max_trials!r}")


@dataclass(frozen=True)
class CellStats:
    """BER bookkeeping for one (device, detector) cell."""

    bits_sent: int
    bit_errors: int
    ber: float
    stderr: float


@dataclass(frozen=True)
class SimPoint:
    """Simulation outcome at one transmit SNR."""

    transmit_snr_db: float
    trials_run: int
    cells: Mapping[str, tuple[CellStats, ...]]  # detector -> per-device stats


@dataclass(frozen=True)
class BerCurve:
    """A swept BER curve with attached analytical bounds.

    ``bounds_upper[p, k]`` is the closed-form bound for device k+1 at
    grid point p; ``bounds_approx`` carries the high-SNR approximation
    and is NaN for devices with modulation order <= 4.
    """

    scenario: ScenarioConfig
    points: tuple[SimPoint, ...]
    bounds_upper: np.ndarray = field(repr=False)
    bounds_approx: np.ndarray = field(repr=False)
    seed: int
    engine_version: str


class _ScenarioTables:
    """Per-process cache of alphabets and detector workspaces."""

    def __init__(self, orders: tuple[int, ...]):
        self.alphabets: tuple[Constellation, ...] = tuple(
            build_psk(m, 1.0) for m in orders
        )
        self.error_tables = [bit_error_table(a) for a in self.alphabets]
        self.jml: JmlWorkspace | None = None

    def jml_workspace(self) -> JmlWorkspace:
        if self.jml is None:
            self.jml = JmlWorkspace(self.alphabets)
        return self.jml


_TABLES_CACHE: dict[tuple[int, ...], _ScenarioTables] = {}


def _tables(orders: tuple[int, ...]) -> _ScenarioTables:
    tab = _TABLES_CACHE.get(orders)
    if tab is None:
        tab = _TABLES_CACHE[orders] = _ScenarioTables(orders)
    return tab


def _trial_words(num_devices: int, antennas: int) -> int:
    """Uniform words consumed per trial, rounded to a 4-word boundary."""
    raw = 2 * num_devices * antennas + num_devices + 2 * antennas
    return (raw + 3) // 4 * 4


def _point_key(master_seed: int, point_index: int) -> tuple[int, int]:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(point_index,))
    words = ss.generate_state(2, np.uint64)
    return int(words[0]), int(words[1])


def _uniform_block(key: tuple[int, int], start_trial: int, n_trials: int, words: int) -> np.ndarray:
    """Uniforms for trials [start, start+n), shape (n_trials, words)."""
    bg = np.random.Philox(key=np.array(key, dtype=np.uint64))
    bg.advance(start_trial * words // 4)
    return np.random.Generator(bg).random((n_trials, words))


def _compute_batch(
    powers: tuple[float, ...],
    sigmas: tuple[float, ...],
    orders: tuple[int, ...],
    antennas: int,
    noise_density: float,
    key: tuple[int, int],
    start_trial: int,
    n_trials: int,
    detectors: tuple[str, ...],
) -> dict[str, np.ndarray]:
    """Per-trial bit error counts for one block of trials.

    Returns, per detector, an (n_trials, K) array of bit errors.
    """
    k, l = len(orders), antennas
    tab = _tables(orders)
    words = _trial_words(k, l)
    u = _uniform_block(key, start_trial, n_trials, words)

    pos = 0
    z = ndtri(u[:, pos : pos + 2 * k * l] + _U_EPS).reshape(n_trials, k, l, 2)
    pos += 2 * k * l
    c = np.sqrt(np.asarray(sigmas) / 2.0)[None, :, None] * (z[..., 0] + 1j * z[..., 1])
    h = np.sqrt(np.asarray(powers))[None, :, None] * c  # (T, K, L)

    m_arr = np.asarray(orders)
    sent = np.minimum((u[:, pos : pos + k] * m_arr).astype(np.int64), m_arr - 1)
    pos += k

    x = np.empty((n_trials, k), dtype=complex)
    for i, a in enumerate(tab.alphabets):
        x[:, i] = a.points[sent[:, i]]
    y = np.einsum("tkl,tk->tl", h, x)
    if noise_density > 0:
        w = ndtri(u[:, pos : pos + 2 * l] + _U_EPS).reshape(n_trials, l, 2)
        y = y + np.sqrt(noise_density / 2.0) * (w[..., 0] + 1j * w[..., 1])

    out: dict[str, np.ndarray] = {}
    for det in detectors:
        if det == "jml":
            decided = detect_jml_batch(y, h, tab.jml_workspace())
        elif det == "sic":
            decided = detect_sic_batch(y, h, tab.alphabets)
        else:
            raise ValueError(f"unknown detector {det!r}")
        errors = np.empty((n_trials, k), dtype=np.uint8)
        for i in range(k):
            errors[:, i] = tab.error_tables[i][sent[:, i], decided[:, i]]
        out[det] = errors
    return out


def _batch_size(orders: Sequence[int], detectors: Sequence[str]) -> int:
    if "jml" in detectors:
        c = math.prod(orders)
        return int(max(64, min(8192, 2**22 // c)))
    return 8192


def transmit_snr_to_noise(cfg: ScenarioConfig, snr_db: float) -> float:
    """Noise density realizing a transmit SNR of P_1 eps_1 / N0.

    Symbol energies are fixed at 1 in the engine, so under equal-power
    defaults the transmit SNR is common to all devices. ``snr_db`` of
    +inf maps to exactly zero noise.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return cfg.devices[0].power * 10.0 ** (-snr_db / 10.0)


def _normalize_detectors(detectors: Sequence[str]) -> tuple[str, ...]:
    dets = tuple(d.lower() for d in detectors)
    if not dets:
        raise ValueError("at least one detector required")
    for d in dets:
        if d not in DETECTOR_NAMES:
            raise ValueError(f"unknown detector {d!r}; expected subset of {DETECTOR_NAMES}")
    if len(set(dets)) != len(dets):
        raise ValueError(f"duplicate detector in {detectors!r}")
    return dets


def run_point(
    cfg: ScenarioConfig,
    snr_db: float,
    stop: StoppingRule,
    master_seed: int,
    detectors: Sequence[str] = DETECTOR_NAMES,
    workers: int = 1,
    point_index: int = 0,
) -> SimPoint:
    """Estimate per-device BER for every detector at one transmit SNR.

    Trials run in fixed-size blocks until every (device, detector) cell
    has accumulated ``stop.min_errors`` bit errors or ``stop.max_trials``
    trials have been spent; the stop trial is exact (block interiors are
    truncated), so the outcome does not depend on blocking or workers.
    """
    dets = _normalize_detectors(detectors)
    orders = tuple(d.modulation_order for d in cfg.devices)
    k = cfg.num_devices
    n0 = transmit_snr_to_noise(cfg, snr_db)
    key = _point_key(master_seed, point_index)
    batch = _batch_size(orders, dets)
    args = (
        tuple(d.power for d in cfg.devices),
        tuple(d.channel_variance for d in cfg.devices),
        orders,
        cfg.antennas,
        n0,
    )

    totals = {d: np.zeros(k, dtype=np.int64) for d in dets}
    totals_sq = {d: np.zeros(k, dtype=np.int64) for d in dets}
    trials_done = 0
    stopped = False

    def consume(block: dict[str, np.ndarray], n_valid: int) -> None:
        """Fold one batch into the running totals, truncating exactly."""
        nonlocal trials_done, stopped
        if stopped or n_valid <= 0:
            return
        # earliest in-block trial index after which every cell is full
        reached = np.ones(n_valid, dtype=bool)
        for d in dets:
            cum = np.cumsum(block[d][:n_valid].astype(np.int64), axis=0)
            cum += totals[d][None, :]
            reached &= (cum >= stop.min_errors).all(axis=1)
        n_keep = int(np.argmax(reached)) + 1 if reached.any() else n_valid
        for d in dets:
            kept = block[d][:n_keep].astype(np.int64)
            totals[d] += kept.sum(axis=0)
            totals_sq[d] += (kept * kept).sum(axis=0)
        trials_done += n_keep
        if reached.any() or trials_done >= stop.max_trials:
            stopped = True

    def batch_args(index: int):
        start = index * batch
        n = min(batch, stop.max_trials - start)
        return (*args, key, start, n, dets)

    n_batches = (stop.max_trials + batch - 1) // batch
    if workers <= 1:
        for b in range(n_batches):
            start = b * batch
            block = _compute_batch(*batch_args(b))
            consume(block, min(batch, stop.max_trials - start))
            if stopped:
                break
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            b = 0
            while b < n_batches and not stopped:
                wave = list(range(b, min(b + workers, n_batches)))
                futures = [pool.submit(_compute_batch, *batch_args(i)) for i in wave]
                for i, fut in zip(wave, futures):
                    consume(fut.result(), min(batch, stop.max_trials - i * batch))
                b = wave[-1] + 1

    cells: dict[str, tuple[CellStats, ...]] = {}
    n = trials_done
    for d in dets:
        stats = []
        for i in range(k):
            bits_per_trial = orders[i].bit_length() - 1
            bits = n * bits_per_trial
            errs = int(totals[d][i])
            ber = errs / bits if bits else 0.0
            if n > 1:
                var = (totals_sq[d][i] - totals[d][i] ** 2 / n) / (n - 1)
                stderr = math.sqrt(max(var, 0.0) / n) / bits_per_trial
            else:
                stderr = 0.0
            stats.append(CellStats(bits_sent=bits, bit_errors=errs, ber=ber, stderr=stderr))
        cells[d] = tuple(stats)
    return SimPoint(transmit_snr_db=snr_db, trials_run=n, cells=cells)


def run_curve(
    cfg: ScenarioConfig,
    snr_grid_db: Sequence[float],
    stop: StoppingRule,
    master_seed: int,
    detectors: Sequence[str] = DETECTOR_NAMES,
    workers: int = 1,
) -> BerCurve:
    """Sweep `run_point` over an SNR grid and attach analytical bounds."""
    grid = [float(s) for s in snr_grid_db]
    if not grid:
        raise ValueError("SNR grid must not be empty")
    if sorted(grid) != grid:
        raise ValueError("SNR grid must be sorted ascending")
    dets = _normalize_detectors(detectors)
    orders = tuple(d.modulation_order for d in cfg.devices)
    alphabets = tuple(build_psk(m, 1.0) for m in orders)
    tables = [build_distance_table(i + 1, alphabets) for i in range(len(orders))]

    points = []
    upper = np.empty((len(grid), cfg.num_devices))
    approx = np.full((len(grid), cfg.num_devices), np.nan)
    for p, snr in enumerate(grid):
        points.append(
            run_point(cfg, snr, stop, master_seed, dets, workers=workers, point_index=p)
        )
        n0 = transmit_snr_to_noise(cfg, snr)
        zetas = cfg.with_noise(n0).received_snrs() if n0 > 0 else np.full(cfg.num_devices, np.inf)
        for i in range(cfg.num_devices):
            upper[p, i] = upper_bound(i + 1, tables[i], zetas, cfg.antennas, alphabets)
            if orders[i] > 4:
                approx[p, i] = approx_upper_bound(
                    i + 1, tables[i], zetas, cfg.antennas, alphabets
                )
    return BerCurve(
        scenario=cfg,
        points=tuple(points),
        bounds_upper=upper,
        bounds_approx=approx,
        seed=master_seed,
        engine_version=__version__,
    )
