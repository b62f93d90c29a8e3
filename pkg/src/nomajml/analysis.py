"""Closed-form BER upper bounds for the joint-ML receiver.

The chain goes: enumerate the erroneous joint hypotheses for a device's
first bit as normalized distance vectors (`build_distance_table`), form
the conditional pairwise error probabilities Q(||.|| / sqrt(2 N0)) and
their union bound, then average over Rayleigh fading where the combined
statistic is Erlang-distributed, yielding a closed form per term:

    bracket(ups, L) = 1 - sum_{l=0}^{L-1} C(2l, l)
                          * (1 + 2/ups)^(-1/2) * (2 ups + 4)^(-l)

`upper_bound` sums brackets over the distance table with prefactor
1 / max(2, log2 M_k); `bound_by_quadrature` computes the same quantity
by adaptive numerical integration of Q(sqrt(g)) against the Erlang
density and serves as the independence check of the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial, prod
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

from .channel import ChannelRealization
from .constellation import Constellation

# Q(sqrt(g)) underflows to exactly 0.0 in float64 just past g ~ 1490;
# integrand mass beyond this point is below 1e-300 relative.
_Q_SUPPORT = 1500.0


class NumericError(RuntimeError):
    """Raised when a quadrature fails to reach its tolerance."""


def q_function(x):
    """Gaussian tail probability Q(x) = 0.5 * erfc(x / sqrt(2)).

    Evaluated through the C library's erfc, which is accurate to a few
    ulp; relative error stays below 1e-12 until the result underflows
    float64 (around x ~ 38.5, Q ~ 1e-324).
    """
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


@dataclass(frozen=True)
class ErlangSpec:
    """Shape/scale parameters of the combined fading statistic."""

    stages: int
    scale: float

    def __post_init__(self):
        if self.stages < 1:
            raise ValueError(f"stage count must be >= 1, got {self.stages!r}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale!r}")


def erlang_pdf(spec: ErlangSpec, gamma):
    """Density g^(L-1) e^(-g/scale) / ((L-1)! scale^L) for g >= 0."""
    g = np.asarray(gamma, dtype=float)
    l, u = spec.stages, spec.scale
    with np.errstate(divide="ignore", invalid="ignore"):
        out = g ** (l - 1) * np.exp(-g / u) / (factorial(l - 1) * u**l)
    return np.where(g < 0, 0.0, out)


@dataclass(frozen=True)
class DistanceTable:
    """Normalized distances to the erroneous joint hypotheses of a device.

    For device ``k`` (1-based) among K devices:

    * ``E[n]`` (n = 0 .. n_vectors-1): distances from point n+1 of
      device k's alphabet to its lower-half-circle points, length M_k/2.
    * ``frak_d[i]``: distances from point 1 of device i+1's alphabet to
      all of its points, length M_i (contains exactly one zero).
    * ``d[n][i]``: the expanded per-device distance vector over all
      (1/2) prod(M_i) erroneous joint hypotheses, enumerated odometer
      style with the last device fastest. Device k's slot uses ``E[n]``,
      every other slot uses its ``frak_d``.
    """

    device: int
    E: tuple[np.ndarray, ...]
    frak_d: tuple[np.ndarray, ...]
    d: tuple[tuple[np.ndarray, ...], ...]

    @property
    def n_vectors(self) -> int:
        return len(self.E)

    @property
    def num_hypotheses(self) -> int:
        return len(self.d[0][0])


def build_distance_table(k: int, alphabets: Sequence[Constellation]) -> DistanceTable:
    """Assemble the distance vectors for device ``k`` (1-based).

    The joint vectors are Kronecker products of per-device distance
    vectors against all-ones vectors, which is exactly the odometer
    enumeration of the erroneous superposed hypotheses. With M_k <= 4
    a single reference vector covers the right quadrant (n_vectors = 1);
    larger alphabets contribute M_k / 4 of them.
    """
    kk = len(alphabets)
    if not 1 <= k <= kk:
        raise ValueError(f"device index {k} outside 1..{kk}")
    mk = alphabets[k - 1].order
    n_vectors = max(1, mk // 4)

    e_vecs = []
    pts_k = alphabets[k - 1].points
    scale_k = 1.0 / np.sqrt(alphabets[k - 1].symbol_energy)
    lower_half = pts_k[mk // 2 :]
    for n in range(n_vectors):
        e_vecs.append(scale_k * (pts_k[n] - lower_half))

    frak = []
    for a in alphabets:
        frak.append((a.points[0] - a.points) / np.sqrt(a.symbol_energy))

    d_rows = []
    for n in range(n_vectors):
        slots = [e_vecs[n] if i == k - 1 else frak[i] for i in range(kk)]
        lens = [len(s) for s in slots]
        row = []
        for i in range(kk):
            left = int(np.prod(lens[:i], dtype=np.int64))
            right = int(np.prod(lens[i + 1 :], dtype=np.int64))
            row.append(np.kron(np.kron(np.ones(left), slots[i]), np.ones(right)))
        d_rows.append(tuple(row))

    return DistanceTable(
        device=k, E=tuple(e_vecs), frak_d=tuple(frak), d=tuple(d_rows)
    )


def _delta_norm(
    table: DistanceTable,
    n: int,
    m: int,
    ch: ChannelRealization,
    energies: Sequence[float],
) -> float:
    row = table.d[n - 1]
    delta = np.zeros(ch.h.shape[1], dtype=complex)
    for i, (d_i, eps) in enumerate(zip(row, energies)):
        delta += ch.h[i] * (np.sqrt(eps) * d_i[m - 1])
    return float(np.linalg.norm(delta))


def conditional_pep(
    k: int,
    n: int,
    m: int,
    table: DistanceTable,
    ch: ChannelRealization,
    energies: Sequence[float],
    noise_density: float,
) -> float:
    """Pairwise error probability conditioned on the channel draw.

    Q(|| sum_i h_i sqrt(eps_i) d_i(m) || / sqrt(2 N0)) with device k's
    distance slot taken from reference point ``n``. Indices are 1-based.
    """
    if table.device != k:
        raise ValueError(f"table built for device {table.device}, queried for {k}")
    if not 1 <= n <= table.n_vectors:
        raise ValueError(f"reference index {n} outside 1..{table.n_vectors}")
    if not 1 <= m <= table.num_hypotheses:
        raise ValueError(f"hypothesis index {m} outside 1..{table.num_hypotheses}")
    nrm = _delta_norm(table, n, m, ch, energies)
    if noise_density == 0:
        return 0.0 if nrm > 0 else 0.5
    return float(q_function(nrm / np.sqrt(2.0 * noise_density)))


def conditional_union_bound(
    k: int,
    table: DistanceTable,
    ch: ChannelRealization,
    energies: Sequence[float],
    noise_density: float,
    alphabets: Sequence[Constellation],
) -> float:
    """Union bound on device k's conditional BER for a fixed channel.

    Sums the pairwise terms over every reference point and erroneous
    hypothesis, scaled by 2 / max(2, log2 M_k). The max() keeps the
    BPSK case consistent with the fading-averaged closed form.
    """
    mk = alphabets[k - 1].order
    total = 0.0
    for n in range(1, table.n_vectors + 1):
        row = table.d[n - 1]
        delta = np.zeros((table.num_hypotheses, ch.h.shape[1]), dtype=complex)
        for i, (d_i, eps) in enumerate(zip(row, energies)):
            delta += np.sqrt(eps) * d_i[:, None] * ch.h[i][None, :]
        nrm = np.linalg.norm(delta, axis=1)
        if noise_density == 0:
            total += float(np.sum(np.where(nrm > 0, 0.0, 0.5)))
        else:
            total += float(np.sum(q_function(nrm / np.sqrt(2.0 * noise_density))))
    return 2.0 / max(2.0, np.log2(mk)) * total


def upsilon(
    k: int,
    n: int,
    m: int,
    table: DistanceTable,
    zetas: Sequence[float],
) -> float:
    """Erlang scale of the fading statistic for one hypothesis.

    (1/2) sum_i zeta_i |d_i(m)|^2 with device k's slot from reference
    point ``n``; zeta_i is device i's average received SNR.
    """
    if table.device != k:
        raise ValueError(f"table built for device {table.device}, queried for {k}")
    row = table.d[n - 1]
    z = np.asarray(zetas, dtype=float)
    if z.shape != (len(row),):
        raise ValueError(f"expected {len(row)} SNR values, got shape {z.shape}")
    return 0.5 * float(sum(z[i] * abs(row[i][m - 1]) ** 2 for i in range(len(row))))


def _upsilon_matrix(table: DistanceTable, zetas: Sequence[float]) -> np.ndarray:
    """All Erlang scales at once, shape (n_vectors, num_hypotheses)."""
    z = np.asarray(zetas, dtype=float)
    rows = []
    for row in table.d:
        rows.append(0.5 * sum(z[i] * np.abs(row[i]) ** 2 for i in range(len(row))))
    return np.stack(rows)


def _bracket(ups: np.ndarray, antennas: int) -> np.ndarray:
    """Per-term closed form, evaluated in a cancellation-free form.

    Algebraically equal to
    ``1 - sum_l C(2l,l) (1+2/ups)^(-1/2) (2 ups + 4)^(-l)`` but computed
    as ``2 ((1-mu)/2)^L sum_l C(L-1+l, l) ((1+mu)/2)^l`` with
    mu = sqrt(ups/(ups+2)), which stays accurate when ups is large and
    the direct form would cancel to roundoff. Zero scale gives the limit
    value 1; infinite scale gives 0.
    """
    ups = np.asarray(ups, dtype=float)
    with np.errstate(divide="ignore"):
        ratio = 2.0 / (ups + 2.0)  # 1 - mu^2; 0 when ups = inf
    mu = np.sqrt(1.0 - ratio)
    one_minus_mu = ratio / (1.0 + mu)
    half_plus = (1.0 + mu) / 2.0
    series = np.zeros_like(mu)
    for l in range(antennas - 1, -1, -1):
        series = series * half_plus + comb(antennas - 1 + l, l)
    return 2.0 * (one_minus_mu / 2.0) ** antennas * series


def upper_bound(
    k: int,
    table: DistanceTable,
    zetas: Sequence[float],
    antennas: int,
    alphabets: Sequence[Constellation],
) -> float:
    """Closed-form BER upper bound for device k over Rayleigh fading.

    1/max(2, log2 M_k) times the sum of per-hypothesis brackets over the
    distance table, with Erlang scales from `upsilon`.
    """
    if antennas < 1:
        raise ValueError(f"antenna count must be >= 1, got {antennas!r}")
    mk = alphabets[k - 1].order
    ups = _upsilon_matrix(table, zetas)
    return float(np.sum(_bracket(ups, antennas))) / max(2.0, np.log2(mk))


def approx_upper_bound(
    k: int,
    table: DistanceTable,
    zetas: Sequence[float],
    antennas: int,
    alphabets: Sequence[Constellation],
) -> float:
    """High-SNR approximation using only the minimum-distance vector.

    Collapses the reference-point sum to the first vector, which holds
    the smallest distances and dominates at high SNR. Only defined for
    alphabets larger than 4.
    """
    mk = alphabets[k - 1].order
    if mk <= 4:
        raise ValueError(f"approximation requires modulation order > 4, got {mk}")
    z = np.asarray(zetas, dtype=float)
    row = table.d[0]
    ups = 0.5 * sum(z[i] * np.abs(row[i]) ** 2 for i in range(len(row)))
    return float(np.sum(_bracket(ups, antennas))) / np.log2(mk)


def _term_by_quadrature(ups: float, antennas: int) -> float:
    """Integral of Q(sqrt(g)) against the Erlang density, adaptively.

    Splits the domain at the Erlang bulk edge (L*ups + 40*sqrt(L)*ups)
    and at the point where Q underflows; the remaining tail carries
    less than 1e-17 of the term and is dropped.
    """
    if ups == 0.0:
        return 0.5
    spec = ErlangSpec(stages=antennas, scale=ups)

    def integrand(g):
        return q_function(np.sqrt(g)) * erlang_pdf(spec, g)

    split = antennas * ups + 40.0 * np.sqrt(antennas) * ups
    edges = [0.0, min(split, _Q_SUPPORT), max(split, _Q_SUPPORT)]
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        if hi <= lo:
            continue
        value, err = quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-11, limit=200)
        if err > 1e-10 + 1e-8 * abs(value):
            raise NumericError(
                f"quadrature failed to converge for scale {ups!r} "
                f"(stages={antennas}, error estimate {err:.3g})"
            )
        total += value
    return total


def bound_by_quadrature(
    k: int,
    table: DistanceTable,
    zetas: Sequence[float],
    antennas: int,
    alphabets: Sequence[Constellation],
) -> float:
    """BER upper bound via term-by-term numerical fading average.

    Independent numerical route to `upper_bound`: every bracket is
    2 * integral of Q(sqrt(g)) against its Erlang density. Identical
    Erlang scales share one quadrature.
    """
    if antennas < 1:
        raise ValueError(f"antenna count must be >= 1, got {antennas!r}")
    mk = alphabets[k - 1].order
    ups = _upsilon_matrix(table, zetas)
    unique, counts = np.unique(ups.reshape(-1), return_counts=True)
    total = 0.0
    for u, c in zip(unique, counts):
        total += c * 2.0 * _term_by_quadrature(float(u), antennas)
    return total / max(2.0, np.log2(mk))
