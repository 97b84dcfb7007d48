"""Piecewise power-sum functions used to represent value functions.

Every value function in the model is, on each wealth interval, a finite sum
``sum_k c_k (x / s_k)**p_k``.  Storing the terms instead of a closure lets the
verification code take exact derivatives and apply the generator of the
wealth process piece by piece.  The scale ``s_k`` is usually the boundary the
term is attached to, which keeps coefficients of order of the value itself
even when the power is large.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = ["Piece", "PiecewiseValueFunction"]


Term = tuple[float, float, float]


def _merge(terms: Sequence[tuple]) -> tuple[Term, ...]:
    """Normalise to ``(power, coeff, scale)``, sum like terms, drop zeros."""
    acc: dict[tuple[float, float], float] = {}
    for t in terms:
        p, c = float(t[0]), float(t[1])
        sc = float(t[2]) if len(t) > 2 and p != 0.0 else 1.0
        acc[(p, sc)] = acc.get((p, sc), 0.0) + c
    return tuple((p, c, sc) for (p, sc), c in acc.items() if c != 0.0)


@dataclass(frozen=True)
class Piece:
    """One interval of a piecewise function.

    Attributes:
        terms: ``(power, coefficient, scale)`` triples meaning
            ``coefficient * (x / scale) ** power``; power 0 is a constant.
        stopping: True if the interval belongs to the stopping region, in
            which case the terms are the payoff ``delta * (x - K)``.
    """

    terms: tuple[Term, ...]
    stopping: bool = False

    @classmethod
    def of(cls, terms: Sequence[tuple], stopping: bool = False) -> "Piece":
        """Build from ``(power, coeff)`` or ``(power, coeff, scale)`` tuples."""
        return cls(_merge(terms), stopping)

    def derivative(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for p, c, sc in self.terms:
            if p == 0.0:
                if order == 0:
                    out = out + c
                continue
            k = c
            for j in range(order):
                k *= (p - j) / sc
            if k == 0.0:
                continue
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = out + k * np.power(x / sc, p - order)
        return out

    def __call__(self, x):
        return self.derivative(x, 0)

    def apply_generator(self, x, drift: float, sigma: float, r: float) -> np.ndarray:
        """Exact ``0.5 sigma^2 x^2 f'' + drift x f' - r f`` of this piece.

        Each term is mapped to ``(0.5 sigma^2 p (p-1) + drift p - r)`` times
        itself, so no cancellation between large derivative terms occurs.
        """
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for p, c, sc in self.terms:
            q = 0.5 * sigma * sigma * p * (p - 1.0) + drift * p - r
            out = out + q * c * (np.power(x / sc, p) if p != 0.0 else 1.0)
        return out


@dataclass(frozen=True)
class PiecewiseValueFunction:
    """Function of wealth defined piece by piece on ``[0, inf)``.

    Attributes:
        breakpoints: Strictly increasing interior breakpoints.
        pieces: ``len(breakpoints) + 1`` pieces, left to right.
        left_closed: For each breakpoint, True if the point itself belongs to
            the piece on its left (e.g. a closed stopping region ``[0, b]``).
        labels: Optional names of the breakpoints (``"x2_l"``, ``"x2_h"``...).
    """

    breakpoints: tuple[float, ...]
    pieces: tuple[Piece, ...]
    left_closed: tuple[bool, ...] = ()
    labels: tuple[str, ...] = ()
    _bp: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if len(self.pieces) != len(bp) + 1:
            raise ValueError("need exactly one more piece than breakpoints")
        if np.any(np.diff(bp) <= 0) or np.any(bp <= 0):
            raise ValueError(f"breakpoints must be positive and increasing: {self.breakpoints}")
        if not self.left_closed:
            object.__setattr__(self, "left_closed", tuple(True for _ in self.breakpoints))
        if len(self.left_closed) != len(bp):
            raise ValueError("left_closed must have one flag per breakpoint")
        object.__setattr__(self, "_bp", bp)

    @classmethod
    def single(cls, piece: Piece) -> "PiecewiseValueFunction":
        return cls((), (piece,))

    def piece_index(self, x) -> np.ndarray:
        """Index of the piece that owns each wealth value."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self._bp, x, side="right")
        if len(self._bp):
            closed = np.asarray(self.left_closed, dtype=bool)
            prev = np.clip(idx - 1, 0, None)
            on_left = (idx > 0) & (x == self._bp[prev]) & closed[prev]
            idx = idx - on_left.astype(idx.dtype)
        return idx

    def derivative(self, x, order: int = 0):
        x_arr = np.asarray(x, dtype=float)
        idx = self.piece_index(x_arr)
        out = np.empty_like(x_arr)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = piece.derivative(x_arr[mask], order)
        return out if out.ndim else float(out)

    def __call__(self, x):
        return self.derivative(x, 0)

    def is_stopping(self, x):
        idx = self.piece_index(x)
        flags = np.array([p.stopping for p in self.pieces], dtype=bool)
        out = flags[idx]
        return out if np.ndim(out) else bool(out)

    def one_sided(self, k: int, order: int = 0) -> tuple[float, float]:
        """Values of the ``order``-th derivative at breakpoint ``k`` from the
        left and right pieces."""
        b = self._bp[k]
        return (
            float(self.pieces[k].derivative(b, order)),
            float(self.pieces[k + 1].derivative(b, order)),
        )

    def apply_generator(self, x, drift: float, sigma: float, r: float):
        x_arr = np.asarray(x, dtype=float)
        idx = self.piece_index(x_arr)
        out = np.empty_like(x_arr)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = piece.apply_generator(x_arr[mask], drift, sigma, r)
        return out

    def flat(self):
        """Arrays describing the function for compiled kernels.

        Returns:
            ``(breakpoints, left_closed, offsets, powers, coeffs, scales)``
            where the terms of piece ``i`` are ``offsets[i]:offsets[i+1]``.
        """
        offs = [0]
        pows: list[float] = []
        cfs: list[float] = []
        scs: list[float] = []
        for piece in self.pieces:
            for p, c, sc in piece.terms:
                pows.append(p)
                cfs.append(c)
                scs.append(sc)
            offs.append(len(pows))
        return (
            self._bp.copy(),
            np.asarray(self.left_closed, dtype=np.bool_),
            np.asarray(offs, dtype=np.int64),
            np.asarray(pows, dtype=float),
            np.asarray(cfs, dtype=float),
            np.asarray(scs, dtype=float),
        )
