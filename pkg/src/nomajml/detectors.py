"""Multi-user detectors: exhaustive joint-ML and MRC-SIC.

Both detectors minimize squared Euclidean metrics over PSK alphabets.
The joint detector searches all prod(M_k) symbol combinations of
``|| y - sum_k h_k s_k ||^2`` at once; SIC detects devices serially in
decreasing instantaneous channel-norm order, subtracting each decision.

Hypothesis enumeration is odometer-ordered with the last device fastest,
so ties resolve to the lexicographically smallest index tuple. Batch
variants (`detect_jml_batch`, `detect_sic_batch`) process many channel
uses at once and are what the Monte Carlo engine calls; they produce the
same decisions as the single-shot functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Literal, Sequence

import numpy as np

from .channel import ChannelRealization, ReceivedSignal
from .constellation import Constellation, symbol_index_to_bits


@dataclass(frozen=True)
class DetectionResult:
    """Joint decision for one channel use.

    ``symbol_indices`` are 1-based per-device point indices;
    ``detected_bits`` concatenates the Gray labels, device 1 first.
    """

    symbol_indices: tuple[int, ...]
    detected_bits: str


@dataclass(frozen=True)
class ComplexityCount:
    """Real-operation counts of a detector front end."""

    multipliers: int
    adders: int
    comparators: int


def _check_dims(y: np.ndarray, h: np.ndarray, alphabets: Sequence[Constellation]) -> None:
    if h.shape[0] != len(alphabets):
        raise ValueError(
            f"channel rows ({h.shape[0]}) and alphabet count ({len(alphabets)}) disagree"
        )
    if y.shape != (h.shape[1],):
        raise ValueError(
            f"received vector shape {y.shape} does not match antenna count {h.shape[1]}"
        )


def _result_from_indices(idx0: Sequence[int], alphabets: Sequence[Constellation]) -> DetectionResult:
    indices = tuple(int(i) + 1 for i in idx0)
    bits = "".join(symbol_index_to_bits(a, n) for a, n in zip(alphabets, indices))
    return DetectionResult(symbol_indices=indices, detected_bits=bits)


class JmlWorkspace:
    """Precomputed hypothesis tables for the batch joint-ML search.

    The per-hypothesis metric is reduced to an affine form in per-trial
    channel statistics: with z_k = y^H h_k and G_ij = h_i^H h_j,

        ||y - u_c||^2 - ||y||^2 - sum_k eps_k ||h_k||^2
            = 2 Re( sum_k (-z_k) s_kc + sum_{i<j} G_ij conj(s_ic) s_jc )

    because |s_kc| is constant over each PSK alphabet. The right side is
    a single real matrix product between per-trial coefficients and a
    fixed feature matrix over all hypotheses, evaluated with one GEMM.
    """

    def __init__(self, alphabets: Sequence[Constellation]):
        self.alphabets = tuple(alphabets)
        orders = [a.order for a in alphabets]
        k = len(orders)
        grids = np.meshgrid(*[np.arange(m) for m in orders], indexing="ij")
        self.combos = np.stack([g.reshape(-1) for g in grids], axis=1)  # (C, K), 0-based
        symbols = np.stack(
            [a.points[self.combos[:, i]] for i, a in enumerate(alphabets)], axis=1
        )  # (C, K)
        self.pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
        pair_feats = np.stack(
            [np.conj(symbols[:, i]) * symbols[:, j] for i, j in self.pairs], axis=1
        ) if self.pairs else np.zeros((symbols.shape[0], 0), dtype=complex)
        phi = np.concatenate([symbols, pair_feats], axis=1)  # (C, F)
        # real GEMM operand: 2 Re(psi @ phi^T) = [Re psi, Im psi] @ [Re phi; -Im phi]^T
        self.features = np.concatenate([phi.real, -phi.imag], axis=1).T.copy()  # (2F, C)

    @property
    def num_hypotheses(self) -> int:
        return self.combos.shape[0]

    def coefficients(self, y: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Per-trial real coefficient rows for the feature GEMM.

        ``y``: (T, L) received blocks, ``h``: (T, K, L) channels.
        """
        z = np.einsum("tl,tkl->tk", np.conj(y), h)
        psi = [-2.0 * z]
        if self.pairs:
            gram = np.einsum("til,tjl->tij", np.conj(h), h)
            ii = [i for i, _ in self.pairs]
            jj = [j for _, j in self.pairs]
            psi.append(2.0 * gram[:, ii, jj])
        psi_c = np.concatenate(psi, axis=1)
        return np.concatenate([psi_c.real, psi_c.imag], axis=1)


def detect_jml_batch(
    y: np.ndarray, h: np.ndarray, workspace: JmlWorkspace
) -> np.ndarray:
    """Joint-ML decisions for a batch of channel uses.

    ``y``: (T, L), ``h``: (T, K, L). Returns (T, K) 0-based symbol
    indices, ties broken toward the lexicographically smallest tuple.
    """
    coeff = workspace.coefficients(y, h)
    metrics = coeff @ workspace.features  # (T, C)
    best = np.argmin(metrics, axis=1)
    return workspace.combos[best]


def detect_jml(
    y: ReceivedSignal,
    ch: ChannelRealization,
    alphabets: Sequence[Constellation],
) -> DetectionResult:
    """Jointly detect all devices by exhaustive metric minimization.

    Returns the symbol tuple minimizing ``|| y - sum_k h_k s_k ||^2``
    over every combination of constellation points.
    """
    _check_dims(y.y, ch.h, alphabets)
    grids = np.meshgrid(*[a.points for a in alphabets], indexing="ij")
    k = len(alphabets)
    superposed = sum(ch.h[i] * grids[i].reshape(-1)[:, None] for i in range(k))
    metrics = np.sum(np.abs(y.y[None, :] - superposed) ** 2, axis=1)
    best = int(np.argmin(metrics))
    idx0 = np.unravel_index(best, [a.order for a in alphabets])
    return _result_from_indices(idx0, alphabets)


def detect_sic_batch(
    y: np.ndarray,
    h: np.ndarray,
    alphabets: Sequence[Constellation],
    ordering: Literal["instantaneous", "average"] = "instantaneous",
) -> np.ndarray:
    """MRC-SIC decisions for a batch of channel uses.

    Devices are processed strongest-first: by per-trial channel norm for
    ``"instantaneous"`` (ties keep the lower device index), or in the
    configured device order (descending average SNR) for ``"average"``.
    Returns (T, K) 0-based symbol indices in original device order.
    """
    t, k, _ = h.shape
    m_max = max(a.order for a in alphabets)
    points = np.full((k, m_max), np.nan + 0j, dtype=complex)
    for i, a in enumerate(alphabets):
        points[i, : a.order] = a.points
    valid = ~np.isnan(points.real)

    if ordering == "instantaneous":
        norms = np.sum(np.abs(h) ** 2, axis=2)
        order = np.argsort(-norms, axis=1, kind="stable")
    elif ordering == "average":
        order = np.broadcast_to(np.arange(k), (t, k))
    else:
        raise ValueError(f"unknown ordering {ordering!r}")

    rows = np.arange(t)
    y_sic = y.astype(complex, copy=True)
    out = np.empty((t, k), dtype=np.int64)
    for stage in range(k):
        dev = order[:, stage]
        h_stage = h[rows, dev]  # (T, L)
        # argmin_s ||y - h s||^2 = argmax_s Re(conj(s) h^H y) for constant |s|
        z = np.einsum("tl,tl->t", np.conj(h_stage), y_sic)
        scores = np.real(np.conj(points[dev]) * z[:, None])
        scores[~valid[dev]] = -np.inf
        decided = np.argmax(scores, axis=1)
        out[rows, dev] = decided
        y_sic -= h_stage * points[dev, decided][:, None]
    return out


def detect_sic(
    y: ReceivedSignal,
    ch: ChannelRealization,
    alphabets: Sequence[Constellation],
    ordering: Literal["instantaneous", "average"] = "instantaneous",
) -> DetectionResult:
    """Detect devices serially with interference cancellation.

    Each stage decides the strongest remaining device by single-user
    metric minimization on the running residual, then subtracts its
    reconstructed contribution. Results are reported in original device
    order.
    """
    _check_dims(y.y, ch.h, alphabets)
    idx0 = detect_sic_batch(y.y[None, :], ch.h[None, :, :], alphabets, ordering)[0]
    return _result_from_indices(idx0, alphabets)


def complexity_counts(
    detector: Literal["sic", "jml"],
    orders: Sequence[int],
    antennas: int,
) -> ComplexityCount:
    """Real-operation counts of each detector front end.

    For K devices with alphabet sizes M_i and L antennas:

        SIC: mult = 6 L sum(M_i) + 4 L (K - 1)
             add  = (6 L - 1) sum(M_i) + 4 L (K - 1)
             cmp  = sum(M_i - 1)
        JML: mult = (4 L K + 2 L) prod(M_i)
             add  = (4 L K + 2 L - 1) prod(M_i)
             cmp  = prod(M_i) - 1
    """
    k = len(orders)
    if k < 1 or antennas < 1:
        raise ValueError("need at least one device and one antenna")
    for m in orders:
        if m < 2:
            raise ValueError(f"invalid modulation order {m}")
    l = antennas
    if detector == "sic":
        s = sum(orders)
        return ComplexityCount(
            multipliers=6 * l * s + 4 * l * (k - 1),
            adders=(6 * l - 1) * s + 4 * l * (k - 1),
            comparators=sum(m - 1 for m in orders),
        )
    if detector == "jml":
        p = prod(orders)
        return ComplexityCount(
            multipliers=(4 * l * k + 2 * l) * p,
            adders=(4 * l * k + 2 * l - 1) * p,
            comparators=p - 1,
        )
    raise ValueError(f"unknown detector {detector!r}")
