"""Phenomenological noise model over repeated syndrome-measurement rounds.

Per round, every data qubit depolarizes independently with probability p
(X, Y, Z each p/3; Y sets both the X- and Z-component bit) and every
check outcome flips independently with probability p.  After `rounds`
noisy rounds one final noise-free readout layer is appended.

Stored volumes are detection events, not raw syndromes: layer r is the
XOR of consecutive raw syndromes, so an isolated measurement flip shows
up at exactly two consecutive layers and a data error at one.

Draw order per sample (one uniform per site, round-major):
  round 0: D^2 depolarization draws (qubits row-major),
           then D^2-1 measurement draws (checks in layout order);
  round 1: ... and so on.  The final readout layer consumes no draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import CodeLayout
from .rng import XoshiroBatch


@dataclass(frozen=True)
class NoiseParams:
    p: float
    rounds: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")


@dataclass
class ErrorSample:
    """One Monte-Carlo shot."""

    x_errors: np.ndarray  # (rounds, D^2) new X-components applied per round
    z_errors: np.ndarray  # (rounds, D^2)
    meas_flips: np.ndarray  # (rounds, D^2 - 1)
    detections: np.ndarray  # (rounds + 1, D^2 - 1)
    z_obs_flip: int
    x_obs_flip: int


@dataclass
class SampleBatch:
    """Column-major view of many shots (leading axis = shot)."""

    x_errors: np.ndarray  # (n, rounds, D^2)
    z_errors: np.ndarray
    meas_flips: np.ndarray  # (n, rounds, C)
    detections: np.ndarray  # (n, rounds + 1, C)
    z_obs_flip: np.ndarray  # (n,)
    x_obs_flip: np.ndarray

    def __len__(self) -> int:
        return self.x_errors.shape[0]

    def sample(self, i: int) -> ErrorSample:
        return ErrorSample(
            self.x_errors[i], self.z_errors[i], self.meas_flips[i],
            self.detections[i], int(self.z_obs_flip[i]), int(self.x_obs_flip[i]),
        )


def compute_detections(layout: CodeLayout, x_errors, z_errors, meas_flips) -> np.ndarray:
    """Detection volume for a batch of error histories.

    Accepts (n, rounds, .) arrays; raw syndrome at round r comes from the
    cumulative error through r XOR the round's measurement flips, layers
    are consecutive raw-syndrome differences and the final layer is the
    noise-free readout differenced against the last noisy round.
    """
    x_errors = np.asarray(x_errors, dtype=np.uint8)
    z_errors = np.asarray(z_errors, dtype=np.uint8)
    meas_flips = np.asarray(meas_flips, dtype=np.uint8)
    n, rounds, _ = x_errors.shape
    h = layout.parity_matrix
    zc = list(layout.z_check_ids)
    xc = list(layout.x_check_ids)

    cum_x = np.cumsum(x_errors, axis=1, dtype=np.int64) % 2
    cum_z = np.cumsum(z_errors, axis=1, dtype=np.int64) % 2
    syn = np.zeros((n, rounds, layout.num_checks), dtype=np.uint8)
    syn[:, :, zc] = (cum_x @ h[zc].T) % 2
    syn[:, :, xc] = (cum_z @ h[xc].T) % 2

    raw = syn ^ meas_flips
    det = np.zeros((n, rounds + 1, layout.num_checks), dtype=np.uint8)
    det[:, 0] = raw[:, 0]
    det[:, 1:rounds] = raw[:, 1:] ^ raw[:, :-1]
    det[:, rounds] = syn[:, rounds - 1] ^ raw[:, rounds - 1]  # = meas_flips of last round
    return det


def _observable_flips(layout: CodeLayout, x_errors, z_errors):
    cum_x = x_errors.sum(axis=1) % 2  # (n, D^2)
    cum_z = z_errors.sum(axis=1) % 2
    z_obs = cum_x[:, list(layout.logical_z_support)].sum(axis=1) % 2
    x_obs = cum_z[:, list(layout.logical_x_support)].sum(axis=1) % 2
    return z_obs.astype(np.uint8), x_obs.astype(np.uint8)


def sample_batch(layout: CodeLayout, params: NoiseParams, seed: int,
                 start_index: int, count: int) -> SampleBatch:
    """Sample shots for indices [start_index, start_index + count).

    Pure function of (seed, index) per shot; any partition of the index
    range into batches yields identical shots.
    """
    d = layout.distance
    nq, nc, rounds = d * d, layout.num_checks, params.rounds
    indices = np.arange(start_index, start_index + count, dtype=np.uint64)
    gen = XoshiroBatch(seed, indices)

    x_errors = np.zeros((count, rounds, nq), dtype=np.uint8)
    z_errors = np.zeros((count, rounds, nq), dtype=np.uint8)
    meas_flips = np.zeros((count, rounds, nc), dtype=np.uint8)
    p = params.p
    for r in range(rounds):
        for q in range(nq):
            u = gen.next_double()
            x_errors[:, r, q] = u < (2 * p / 3)  # X or Y component
            z_errors[:, r, q] = (u >= p / 3) & (u < p)  # Y or Z component
        for c in range(nc):
            u = gen.next_double()
            meas_flips[:, r, c] = u < p

    det = compute_detections(layout, x_errors, z_errors, meas_flips)
    z_obs, x_obs = _observable_flips(layout, x_errors, z_errors)
    return SampleBatch(x_errors, z_errors, meas_flips, det, z_obs, x_obs)


def sample_history(layout: CodeLayout, params: NoiseParams, seed: int,
                   index: int) -> ErrorSample:
    """One shot, pure in (seed, index)."""
    return sample_batch(layout, params, seed, index, 1).sample(0)


def history_from_errors(layout: CodeLayout, rounds: int,
                        injected: list[tuple[int, int, str]],
                        injected_meas: list[tuple[int, int]] = ()) -> ErrorSample:
    """Deterministic sample from explicit error lists.

    injected: (round, qubit, pauli in {"X","Y","Z"}); injected_meas:
    (round, check).  Out-of-range coordinates raise ValueError.
    """
    nq, nc = layout.num_qubits, layout.num_checks
    x_errors = np.zeros((1, rounds, nq), dtype=np.uint8)
    z_errors = np.zeros((1, rounds, nq), dtype=np.uint8)
    meas_flips = np.zeros((1, rounds, nc), dtype=np.uint8)
    for r, q, pauli in injected:
        if not (0 <= r < rounds and 0 <= q < nq):
            raise ValueError(f"injected error out of range: round {r}, qubit {q}")
        if pauli not in ("X", "Y", "Z"):
            raise ValueError(f"unknown pauli {pauli!r}")
        if pauli in ("X", "Y"):
            x_errors[0, r, q] ^= 1
        if pauli in ("Z", "Y"):
            z_errors[0, r, q] ^= 1
    for r, c in injected_meas:
        if not (0 <= r < rounds and 0 <= c < nc):
            raise ValueError(f"injected measurement flip out of range: round {r}, check {c}")
        meas_flips[0, r, c] ^= 1

    det = compute_detections(layout, x_errors, z_errors, meas_flips)
    z_obs, x_obs = _observable_flips(layout, x_errors, z_errors)
    return SampleBatch(x_errors, z_errors, meas_flips, det, z_obs, x_obs).sample(0)
