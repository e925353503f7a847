"""Exact linear algebra over the rationals."""

from __future__ import annotations

import math
from collections.abc import Sequence

from gmpy2 import mpq

from .errors import ShapeError


def _row_denominator(row) -> int:
    return math.lcm(*(int(mpq(x).denominator) for x in row)) if row else 1


def _integer_rows(rows):
    out = []
    for row in rows:
        den = _row_denominator(row)
        out.append([int(mpq(x) * den) for x in row])
    return out


def _bareiss(m: list[list[int]]):
    """Fraction-free elimination in place; returns (rank, sign, last pivot)."""
    nrows = len(m)
    ncols = len(m[0]) if m else 0
    prev = 1
    rank = 0
    sign = 1
    for col in range(ncols):
        pivot = next((r for r in range(rank, nrows) if m[r][col]), None)
        if pivot is None:
            continue
        if pivot != rank:
            m[rank], m[pivot] = m[pivot], m[rank]
            sign = -sign
        p = m[rank][col]
        for r in range(rank + 1, nrows):
            a = m[r][col]
            row_r, row_p = m[r], m[rank]
            for c in range(col + 1, ncols):
                row_r[c] = (p * row_r[c] - a * row_p[c]) // prev
            row_r[col] = 0
        prev = p
        rank += 1
        if rank == nrows:
            break
    return rank, sign, prev


def rank(rows: Sequence[Sequence]) -> int:
    """Rank of a rational matrix given as a list of rows."""
    rows = [list(r) for r in rows]
    if not rows or not rows[0]:
        return 0
    return _bareiss(_integer_rows(rows))[0]


def det(matrix: Sequence[Sequence]) -> mpq:
    """Determinant of a square rational matrix."""
    n = len(matrix)
    if any(len(row) != n for row in matrix):
        raise ShapeError("determinant of a non-square matrix")
    if n == 0:
        return mpq(1)
    scaled = _integer_rows(matrix)
    scale = mpq(1)
    for row in matrix:
        scale /= _row_denominator(row)
    r, sign, last = _bareiss(scaled)
    if r < n:
        return mpq(0)
    return sign * last * scale


def inverse(matrix: Sequence[Sequence]) -> list[list[mpq]]:
    """Inverse of a square rational matrix by Gauss-Jordan elimination."""
    n = len(matrix)
    if any(len(row) != n for row in matrix):
        raise ShapeError("inverse of a non-square matrix")
    aug = [[mpq(x) for x in row] + [mpq(int(i == j)) for j in range(n)]
           for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col]), None)
        if pivot is None:
            raise ZeroDivisionError("matrix is singular")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        p = aug[col][col]
        aug[col] = [x / p for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def transpose(matrix):
    return [list(col) for col in zip(*matrix)]


def matvec(matrix, vec):
    return [sum((a * x for a, x in zip(row, vec)), mpq(0)) for row in matrix]


def polynomial_det(matrix):
    """Determinant of a square matrix of commuting ring elements (Laplace expansion)."""
    n = len(matrix)
    if any(len(row) != n for row in matrix):
        raise ShapeError("determinant of a non-square matrix")

    cache = {}

    def minor(rows: int, cols: tuple) -> object:
        # expand along row `rows` over the remaining columns
        if rows == n:
            return 1
        key = cols
        if key in cache:
            return cache[key]
        total = 0
        for k, c in enumerate(cols):
            entry = matrix[rows][c]
            if not entry:
                continue
            sub = minor(rows + 1, cols[:k] + cols[k + 1:])
            term = entry * sub
            total = total + term if k % 2 == 0 else total - term
        cache[key] = total
        return total

    return minor(0, tuple(range(n)))
