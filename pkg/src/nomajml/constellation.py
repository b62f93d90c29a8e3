"""M-PSK constellations with binary-reflected Gray bit mapping.

Symbol indices are 1-based in the public API: point ``n`` sits at phase
``(2n - 1) * pi / M`` so the constellation is symmetric about the real
axis and no point lies on a decision boundary. The Gray label of point
``n`` is the binary-reflected Gray code of ``n - 1``, MSB first, which
puts label-first-bit 0 on the upper half circle and 1 on the lower half.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _gray_code(i: int) -> int:
    return i ^ (i >> 1)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Constellation:
    """An M-PSK alphabet with Gray-coded bit labels.

    Attributes:
        order: constellation size M (power of two, M >= 2)
        symbol_energy: squared magnitude of every point
        points: the M complex points, counter-clockwise, index 0 holds
            symbol 1 of the 1-based convention
        bits_per_symbol: log2(M)
    """

    order: int
    symbol_energy: float
    points: np.ndarray = field(repr=False)
    bits_per_symbol: int

    def point(self, n: int) -> complex:
        """Return constellation point ``n`` (1-based)."""
        if not 1 <= n <= self.order:
            raise ValueError(f"symbol index {n} outside 1..{self.order}")
        return complex(self.points[n - 1])


def build_psk(order: int, symbol_energy: float) -> Constellation:
    """Construct a Gray-mapped M-PSK constellation.

    Point ``n`` (1-based) has value ``sqrt(symbol_energy) *
    exp(1j * (2n - 1) * pi / order)`` and carries the Gray label of
    ``n - 1``.

    Raises:
        ValueError: if ``order`` is not a power of two >= 2 or the
            energy is not positive.
    """
    if not isinstance(order, (int, np.integer)) or not _is_power_of_two(int(order)) or order < 2:
        raise ValueError(f"modulation order must be a power of two >= 2, got {order!r}")
    if not symbol_energy > 0:
        raise ValueError(f"symbol energy must be positive, got {symbol_energy!r}")
    order = int(order)
    n = np.arange(1, order + 1)
    phases = (2 * n - 1) * np.pi / order
    points = np.sqrt(symbol_energy) * np.exp(1j * phases)
    return Constellation(
        order=order,
        symbol_energy=float(symbol_energy),
        points=points,
        bits_per_symbol=order.bit_length() - 1,
    )


def symbol_index_to_bits(c: Constellation, n: int) -> str:
    """Gray bit label of point ``n`` (1-based), MSB first."""
    if not 1 <= n <= c.order:
        raise ValueError(f"symbol index {n} outside 1..{c.order}")
    return format(_gray_code(n - 1), f"0{c.bits_per_symbol}b")


def bits_to_symbol(c: Constellation, bits: str) -> complex:
    """Map a Gray bit label to its constellation point.

    ``bits`` is a string of '0'/'1' of length log2(M).
    """
    return c.point(bits_to_symbol_index(c, bits))


def bits_to_symbol_index(c: Constellation, bits: str) -> int:
    """Map a Gray bit label to its 1-based point index."""
    if len(bits) != c.bits_per_symbol or any(b not in "01" for b in bits):
        raise ValueError(
            f"expected {c.bits_per_symbol} bits of '0'/'1', got {bits!r}"
        )
    g = int(bits, 2)
    # invert the Gray code: i = g ^ (g>>1) ^ (g>>2) ^ ...
    i = 0
    while g:
        i ^= g
        g >>= 1
    return i + 1


def bit_error_table(c: Constellation) -> np.ndarray:
    """M x M table of Hamming distances between point Gray labels.

    Entry (i, j) is the number of bit errors committed when point j+1 is
    detected while point i+1 was sent. Used by the Monte Carlo engine to
    count bit errors without materializing bit strings.
    """
    labels = np.array([_gray_code(i) for i in range(c.order)], dtype=np.int64)
    xor = labels[:, None] ^ labels[None, :]
    table = np.zeros_like(xor)
    while xor.any():
        table += xor & 1
        xor >>= 1
    return table.astype(np.int64)
