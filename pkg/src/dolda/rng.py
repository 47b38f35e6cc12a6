"""Deterministic counter-based random streams.

Every sampling step draws from a generator keyed by ``(seed, phase,
iteration, entity)``.  Distinct keys give independent Philox streams, so
the draw sequence seen by any document, class, or topic never depends on
how work happens to be scheduled across worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Phase tags.  Values are stable identifiers baked into stream keys; do not
# renumber them or previously recorded runs stop being reproducible.
PHASE_INIT = 0
PHASE_LATENT = 1
PHASE_ETA = 2
PHASE_TAU = 3
PHASE_LAMBDA = 4
PHASE_TOPICS = 5
PHASE_PHI = 6
PHASE_SIMULATE = 7
PHASE_PREDICT = 8
PHASE_FOLDS = 9

_PHASE_BITS = 6
_ITER_BITS = 26
_ENTITY_BITS = 32
_MASK64 = (1 << 64) - 1


def pack_stream_id(phase: int, iteration: int = 0, entity: int = 0) -> int:
    """Pack a (phase, iteration, entity) triple into one 64-bit stream id."""
    if not 0 <= phase < (1 << _PHASE_BITS):
        raise ValueError(f"phase out of range: {phase}")
    if not 0 <= iteration < (1 << _ITER_BITS):
        raise ValueError(f"iteration out of range: {iteration}")
    if not 0 <= entity < (1 << _ENTITY_BITS):
        raise ValueError(f"entity out of range: {entity}")
    return (phase << (_ITER_BITS + _ENTITY_BITS)) | (iteration << _ENTITY_BITS) | entity


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream: a 128-bit Philox key split into
    (seed, stream_id) halves."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = ((self.seed & _MASK64) << 64) | (self.stream_id & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))


def stream(seed: int, phase: int, iteration: int = 0, entity: int = 0) -> np.random.Generator:
    """Generator for the stream keyed by (seed, phase, iteration, entity)."""
    return RngStream(seed, pack_stream_id(phase, iteration, entity)).generator()


def derive_seed(seed: int, salt: int) -> int:
    """Derive a child seed (e.g. one per cross-validation fold).

    Splitmix-style mix so nearby salts give unrelated child seeds.
    """
    x = (seed + 0x9E3779B97F4A7C15 * (salt + 1)) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)
