"""Model feature encoding and the ".tqec" dataset file format.

Feature volumes are (rounds+1) x (D+1) x (D+1) x 6: channels 0/1 mark
X/Z-check locations, channels 2/3 carry the detection events of those
checks, channel 4 flags the first layer and channel 5 the final layer.
Only detection bits, label bits and the two observable-parity bits are
stored on disk; the location and flag channels are pure functions of D
and are rebuilt on read.

File layout (all little-endian):
  header, 44 bytes:
    magic "TQEC" | version u32 | D u32 | rounds u32 | count u64
    | p f64 | seed u64 | flags u32
  per sample, fixed stride:
    detections bit-packed layer-major then check order, padded to bytes
    | labels bit-packed (round, row, col, channel-last), padded to bytes
    | 1 parity byte (bit0 = z_obs_flip, bit1 = x_obs_flip)
Bits are packed LSB-first within each byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .lattice import CodeLayout, check_location_grids
from .noise import ErrorSample, SampleBatch

MAGIC = b"TQEC"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQdQI")
assert _HEADER.size == 44


class DatasetFormatError(Exception):
    """Raised on malformed, truncated or mismatched dataset files."""


@dataclass(frozen=True)
class DatasetHeader:
    distance: int
    rounds: int
    count: int
    p: float
    seed: int
    flags: int = 0

    @property
    def num_checks(self) -> int:
        return self.distance**2 - 1

    @property
    def det_bits(self) -> int:
        return (self.rounds + 1) * self.num_checks

    @property
    def label_bits(self) -> int:
        return self.rounds * self.distance * self.distance * 2

    @property
    def sample_stride(self) -> int:
        return (self.det_bits + 7) // 8 + (self.label_bits + 7) // 8 + 1


def encode_features(sample: ErrorSample, layout: CodeLayout) -> np.ndarray:
    """Six-channel feature volume for one shot."""
    det = sample.detections
    rounds = det.shape[0] - 1
    return features_from_detections(det[None], layout, rounds)[0]


def features_from_detections(detections: np.ndarray, layout: CodeLayout,
                             rounds: int) -> np.ndarray:
    """Batch version: (n, rounds+1, C) detections -> (n, rounds+1, D+1, D+1, 6)."""
    d = layout.distance
    n = detections.shape[0]
    if detections.shape != (n, rounds + 1, layout.num_checks):
        raise ValueError(
            f"detections shape {detections.shape} does not match layout "
            f"(expected {(n, rounds + 1, layout.num_checks)})"
        )
    xg, zg = check_location_grids(layout)
    out = np.zeros((n, rounds + 1, d + 1, d + 1, 6), dtype=np.float32)
    out[:, :, :, :, 0] = xg
    out[:, :, :, :, 1] = zg
    for idx, c in enumerate(layout.checks):
        ch = 2 if c.kind == "X" else 3
        out[:, :, c.vertex[0], c.vertex[1], ch] = detections[:, :, idx]
    out[:, 0, :, :, 4] = 1.0
    out[:, rounds, :, :, 5] = 1.0
    return out


def encode_labels(sample: ErrorSample) -> np.ndarray:
    """rounds x D x D x 2 bit grid; channel 0 = X component, 1 = Z."""
    rounds, nq = sample.x_errors.shape
    d = int(round(nq**0.5))
    out = np.zeros((rounds, d, d, 2), dtype=np.uint8)
    out[:, :, :, 0] = sample.x_errors.reshape(rounds, d, d)
    out[:, :, :, 1] = sample.z_errors.reshape(rounds, d, d)
    return out


def _pack(bits: np.ndarray) -> np.ndarray:
    return np.packbits(bits.reshape(bits.shape[0], -1), axis=1, bitorder="little")


def write_dataset(path, header: DatasetHeader, batches) -> None:
    """Write samples to path. `batches` is an iterable of SampleBatch;
    total sample count must equal header.count."""
    written = 0
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, header.distance, header.rounds,
                             header.count, header.p, header.seed, header.flags))
        for batch in batches:
            det = _pack(batch.detections.astype(np.uint8))
            n = det.shape[0]
            labels = np.stack(
                [batch.x_errors, batch.z_errors], axis=-1
            ).reshape(n, header.rounds, header.distance, header.distance, 2)
            lab = _pack(labels.astype(np.uint8))
            par = (batch.z_obs_flip | (batch.x_obs_flip << 1)).astype(np.uint8)
            rec = np.concatenate([det, lab, par[:, None]], axis=1)
            f.write(rec.tobytes())
            written += n
    if written != header.count:
        raise DatasetFormatError(
            f"header promised {header.count} samples, wrote {written}"
        )


@dataclass
class Dataset:
    """In-memory dataset: unpacked detections, labels and parities."""

    header: DatasetHeader
    detections: np.ndarray  # (n, rounds+1, C) uint8
    labels: np.ndarray  # (n, rounds, D, D, 2) uint8
    parities: np.ndarray  # (n, 2) uint8: [z_obs, x_obs]

    def __len__(self) -> int:
        return self.header.count


def read_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"file too short for header: {len(raw)} bytes")
    magic, version, d, rounds, count, p, seed, flags = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}")
    if d < 3 or d % 2 == 0 or rounds < 1:
        raise DatasetFormatError(f"invalid geometry: D={d}, rounds={rounds}")
    header = DatasetHeader(d, rounds, count, p, seed, flags)
    body = raw[_HEADER.size:]
    if len(body) != count * header.sample_stride:
        raise DatasetFormatError(
            f"expected {count * header.sample_stride} body bytes, got {len(body)}"
        )
    rec = np.frombuffer(body, dtype=np.uint8).reshape(count, header.sample_stride)
    det_bytes = (header.det_bits + 7) // 8
    lab_bytes = (header.label_bits + 7) // 8
    det = np.unpackbits(rec[:, :det_bytes], axis=1, count=header.det_bits,
                        bitorder="little").reshape(count, rounds + 1, header.num_checks)
    lab = np.unpackbits(rec[:, det_bytes:det_bytes + lab_bytes], axis=1,
                        count=header.label_bits,
                        bitorder="little").reshape(count, rounds, d, d, 2)
    par = rec[:, -1]
    parities = np.stack([par & 1, (par >> 1) & 1], axis=1)
    return Dataset(header, det, lab, parities)
