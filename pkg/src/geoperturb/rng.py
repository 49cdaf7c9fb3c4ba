"""Counter-based random numbers keyed by (seed, point id, attempt).

Every uniform variate is a pure function of its key, so perturbing points
in any order, in any number of processes, yields the same output. The
mixing function is the SplitMix64 finaliser applied to a Weyl sequence,
which is exactly SplitMix64 with the stream state derived from the key.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0**-53

# uniforms consumed per attempt: angle, radius
LANES = 2
LANE_ANGLE = 0
LANE_RADIUS = 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def id_key(point_id) -> int:
    """Stable 64-bit key for an arbitrary point identifier."""
    digest = hashlib.blake2b(str(point_id).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def id_keys(point_ids) -> np.ndarray:
    return np.fromiter((id_key(i) for i in point_ids), dtype=np.uint64)


def derive_seed(seed: int, label: str) -> int:
    """Independent 64-bit seed for a named sub-experiment."""
    z = _mix(np.array([(seed & _MASK64) ^ id_key(label)], dtype=np.uint64))
    return int(z[0])


def stream_keys(seed: int, keys) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.uint64)
    s = _mix(np.array([seed & _MASK64], dtype=np.uint64))
    return _mix(s ^ keys)


def uniforms(seed: int, keys, attempts, lane: int) -> np.ndarray:
    """Open-interval ``(0, 1)`` uniforms, one per (key, attempt) pair.

    Args:
        seed: experiment seed (any integer, reduced mod 2**64).
        keys: per-point 64-bit keys from :func:`id_keys`.
        attempts: attempt counters, broadcast against ``keys``.
        lane: which of the :data:`LANES` draws within an attempt.
    """
    keys, attempts = np.broadcast_arrays(
        np.asarray(keys, dtype=np.uint64), np.asarray(attempts, dtype=np.uint64)
    )
    counter = attempts * np.uint64(LANES) + np.uint64(lane) + np.uint64(1)
    raw = _mix(stream_keys(seed, keys) + counter * _GOLDEN)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TO_UNIT


@dataclass(frozen=True)
class RngStream:
    """Draw sequence for one point, addressed by attempt counter."""

    seed: int
    point_id: object

    @property
    def key(self) -> int:
        return id_key(self.point_id)

    def uniform(self, attempt: int, lane: int) -> float:
        return float(uniforms(self.seed, [self.key], [attempt], lane)[0])
