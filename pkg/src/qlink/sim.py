"""Deterministic discrete-event core: simulated clock, event queue, named RNG streams.

Simulated time is an integer count of nanoseconds since trial start.  Events
fire in (time, insertion order) so ties resolve FIFO, which makes a whole
trial a pure function of (config, seed).
"""
from __future__ import annotations

import hashlib
import heapq
import random

NS_PER_SEC = 1_000_000_000
NS_PER_US = 1_000

# Event payload kinds (also the labels used in trace logs).
PHOTON_BURST_START = "PhotonBurstStart"
PHOTON_ARRIVAL_AT_BSA = "PhotonArrivalAtBSA"
CLASSICAL_MESSAGE_DELIVERY = "ClassicalMessageDelivery"
RULESET_TIMEOUT_CHECK = "RuleSetTimeoutCheck"
TRIAL_END = "TrialEnd"


class SchedulingInPastError(RuntimeError):
    """An event was scheduled before the current clock: a programming error."""


class EventCapExceeded(RuntimeError):
    """The per-trial event guard tripped, which signals a protocol livelock."""


def stream_seed(trial_seed: int, stream_id: str) -> int:
    """Derive a stable per-stream seed from (trial_seed, stream_id).

    Uses SHA-256 rather than hash() so the derivation is identical across
    runs, platforms and interpreter invocations.
    """
    digest = hashlib.sha256(f"{trial_seed}:{stream_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream(random.Random):
    """A named, independently seeded random stream.

    Identical (trial_seed, stream_id) always produces the identical draw
    sequence; consuming draws from one stream never perturbs another.
    """

    def __new__(cls, trial_seed: int, stream_id: str):
        return super().__new__(cls, stream_seed(trial_seed, stream_id))

    def __init__(self, trial_seed: int, stream_id: str):
        super().__init__(stream_seed(trial_seed, stream_id))
        self.stream_id = stream_id


def make_streams(trial_seed: int, stream_ids) -> dict:
    return {sid: RngStream(trial_seed, sid) for sid in stream_ids}


class EventQueue:
    """Min-heap of events ordered by (fire_at, seq).

    Entries are (fire_at, seq, kind, target, payload).  `target` is a short
    component label used for tracing; `payload` is whatever the handler
    needs.
    """

    __slots__ = ("_heap", "_seq", "now", "processed")

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0
        self.processed = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, fire_at: int, kind: str, target: str, payload=None) -> None:
        if fire_at < self.now:
            raise SchedulingInPastError(
                f"event {kind} for {target} at t={fire_at} but clock is {self.now}"
            )
        heapq.heappush(self._heap, (fire_at, self._seq, kind, target, payload))
        self._seq += 1

    def pop(self):
        """Advance the clock to the next event and return it."""
        entry = heapq.heappop(self._heap)
        self.now = entry[0]
        self.processed += 1
        return entry
