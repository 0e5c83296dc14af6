"""Rotated surface-code geometry.

A distance-D code has a D x D grid of data qubits and D^2 - 1 checks
sitting on the vertices of the surrounding (D+1) x (D+1) grid.  Each
check measures the parity of the 2 or 4 data qubits of the plaquette
behind its vertex.  Z-checks detect X errors, X-checks detect Z errors.

Conventions (fixed so every parity in the test-suite is deterministic):
  * interior plaquettes are X-type when (i + j) is even, Z-type otherwise;
  * weight-2 X-checks sit on the left/right boundary columns, weight-2
    Z-checks on the top/bottom boundary rows, same parity rule;
  * data qubits are indexed row-major, q = row * D + col;
  * checks are ordered by vertex (i, j) lexicographically;
  * logical Z support is the leftmost data column, logical X the topmost
    data row (they intersect in qubit 0 only).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Check:
    kind: str  # "X" or "Z"
    vertex: tuple[int, int]  # (i, j) on the (D+1) x (D+1) grid
    support: tuple[int, ...]  # data-qubit indices, weight 2 or 4


@dataclass(frozen=True)
class CodeLayout:
    distance: int
    checks: tuple[Check, ...]
    logical_z_support: tuple[int, ...]
    logical_x_support: tuple[int, ...]

    @property
    def num_qubits(self) -> int:
        return self.distance * self.distance

    @property
    def num_checks(self) -> int:
        return len(self.checks)

    @cached_property
    def x_check_ids(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.checks) if c.kind == "X")

    @cached_property
    def z_check_ids(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.checks) if c.kind == "Z")

    @cached_property
    def parity_matrix(self) -> np.ndarray:
        """(num_checks, D^2) incidence matrix, row c = support of check c."""
        h = np.zeros((self.num_checks, self.num_qubits), dtype=np.uint8)
        for i, c in enumerate(self.checks):
            h[i, list(c.support)] = 1
        return h

    def checks_of_kind(self, kind: str) -> tuple[int, ...]:
        return self.x_check_ids if kind == "X" else self.z_check_ids


def _candidate_support(i: int, j: int, d: int) -> tuple[int, ...]:
    cells = [(i - 1, j - 1), (i - 1, j), (i, j - 1), (i, j)]
    return tuple(r * d + c for r, c in cells if 0 <= r < d and 0 <= c < d)


def build_layout(d: int) -> CodeLayout:
    """Construct the distance-d rotated surface code."""
    if d < 3 or d % 2 == 0:
        raise ValueError(f"distance must be odd and >= 3, got {d}")

    checks = []
    for i in range(d + 1):
        for j in range(d + 1):
            support = _candidate_support(i, j, d)
            kind = "X" if (i + j) % 2 == 0 else "Z"
            if len(support) == 4:
                checks.append(Check(kind, (i, j), support))
            elif len(support) == 2:
                on_vertical = j == 0 or j == d
                on_horizontal = i == 0 or i == d
                if on_vertical and kind == "X":
                    checks.append(Check(kind, (i, j), support))
                elif on_horizontal and kind == "Z":
                    checks.append(Check(kind, (i, j), support))
            # weight-1 corner candidates are never valid stabilizers

    logical_z = tuple(r * d for r in range(d))  # leftmost column
    logical_x = tuple(range(d))  # topmost row
    return CodeLayout(d, tuple(checks), logical_z, logical_x)


def syndrome_of(layout: CodeLayout, x_err: np.ndarray, z_err: np.ndarray) -> np.ndarray:
    """Syndrome bits over all checks, in layout check order.

    Z-check bit = parity of x_err over its support; X-check bit = parity
    of z_err over its support.
    """
    x_err = np.asarray(x_err, dtype=np.uint8)
    z_err = np.asarray(z_err, dtype=np.uint8)
    n = layout.num_qubits
    if x_err.shape != (n,) or z_err.shape != (n,):
        raise ValueError(
            f"error bitsets must have shape ({n},), got {x_err.shape} and {z_err.shape}"
        )
    syn = np.zeros(layout.num_checks, dtype=np.uint8)
    h = layout.parity_matrix
    zc = list(layout.z_check_ids)
    xc = list(layout.x_check_ids)
    syn[zc] = (h[zc] @ x_err) % 2
    syn[xc] = (h[xc] @ z_err) % 2
    return syn


def check_location_grids(layout: CodeLayout) -> tuple[np.ndarray, np.ndarray]:
    """(D+1)^2 binary grids marking X-check and Z-check vertices."""
    d = layout.distance
    xg = np.zeros((d + 1, d + 1), dtype=np.uint8)
    zg = np.zeros((d + 1, d + 1), dtype=np.uint8)
    for c in layout.checks:
        (xg if c.kind == "X" else zg)[c.vertex] = 1
    return xg, zg


def validate_layout(layout: CodeLayout) -> None:
    """Assert every structural invariant; raises AssertionError on failure."""
    d = layout.distance
    assert layout.num_qubits == d * d
    assert layout.num_checks == d * d - 1
    assert len(layout.x_check_ids) == (d * d - 1) // 2
    assert len(layout.z_check_ids) == (d * d - 1) // 2
    for c in layout.checks:
        assert len(c.support) in (2, 4)
    # stabilizer commutation: X and Z supports overlap evenly
    for xi in layout.x_check_ids:
        sx = set(layout.checks[xi].support)
        for zi in layout.z_check_ids:
            assert len(sx & set(layout.checks[zi].support)) % 2 == 0
    # logical operators: size D, single-qubit overlap, commute with stabilizers
    lz, lx = set(layout.logical_z_support), set(layout.logical_x_support)
    assert len(lz) == d and len(lx) == d
    assert len(lz & lx) == 1
    for xi in layout.x_check_ids:
        assert len(set(layout.checks[xi].support) & lz) % 2 == 0
    for zi in layout.z_check_ids:
        assert len(set(layout.checks[zi].support) & lx) % 2 == 0
