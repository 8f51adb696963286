"""Grid and line-search building blocks for the numeric attack solvers."""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def simplex_grid(total: float, dims: int, step: float) -> np.ndarray:
    """All points of ``{u >= 0, sum(u) = total}`` on a lattice of spacing ``step``.

    The number of divisions is ``round(total / step)`` (at least one).
    Rows are in lexicographic order of the lattice coordinates.
    """
    n = max(1, int(round(total / step)))
    pts = [c for c in itertools.product(range(n + 1), repeat=dims - 1) if sum(c) <= n]
    grid = np.array([list(c) + [n - sum(c)] for c in pts], dtype=float)
    return grid * (total / n)


def golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Golden-section maximization of ``f`` on ``[lo, hi]``.

    Endpoints are evaluated too, so a function that is monotone or convex
    on the interval still returns its best endpoint.
    """
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    best_f, best_x = max(candidates, key=lambda t: t[0])
    return best_x, best_f


Move = Callable[[np.ndarray], tuple[Callable[[float], np.ndarray], float, float]]


def coordinate_refine(
    objective: Callable[[np.ndarray], float],
    x0: np.ndarray,
    moves: Sequence[Move],
    max_sweeps: int = 200,
    rtol: float = 1e-10,
):
    """Cyclic line searches along ``moves`` until a sweep gains less than ``rtol``.

    A move maps the current point to ``(line, lo, hi)`` where ``line(t)``
    is a feasible point for every ``t`` in ``[lo, hi]``. A line optimum is
    accepted only if it strictly improves the objective, so the result is
    never worse than ``x0``.

    Returns ``(x, value, sweeps)``.
    """
    x = np.array(x0, dtype=float)
    fx = objective(x)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        f_start = fx
        for move in moves:
            line, lo, hi = move(x)
            if not hi > lo:
                continue
            t, ft = golden_max(lambda s: objective(line(s)), lo, hi)
            if ft > fx:
                x, fx = line(t), ft
        if fx - f_start <= rtol * max(abs(fx), 1e-300):
            break
    return x, fx, sweeps


def pair_transfer_moves(indices: Sequence[int]) -> list[Move]:
    """Moves that shift mass between two coordinates, keeping their sum fixed."""
    moves = []
    for i, j in itertools.combinations(indices, 2):
        def move(x, i=i, j=j):
            total = x[i] + x[j]

            def line(t):
                y = x.copy()
                y[i] = t * total
                y[j] = total - y[i]
                return y
            return line, 0.0, (1.0 if total > 0 else 0.0)
        moves.append(move)
    return moves


def box_moves(indices: Sequence[int], lo: float, hi: float) -> list[Move]:
    moves = []
    for i in indices:
        def move(x, i=i):
            def line(t):
                y = x.copy()
                y[i] = t
                return y
            return line, lo, hi
        moves.append(move)
    return moves
