"""Deterministic simulator of a device / host / storage memory hierarchy.

Time is a virtual clock advanced by a linear cost model: a transfer takes
``fixed_latency + bytes / bandwidth`` on its channel, a device compute takes
``flops * flop_time`` and host-side byte processing takes
``bytes * host_byte_time``. Every state change is appended to a trace so that
ledger totals and occupancy can be audited by replay.
"""
from __future__ import annotations

import configparser
import csv
import io
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import (
    BufferNotResident,
    CapacityExceeded,
    OperandNotOnDevice,
    SameChannelConflict,
)

DEVICE, HOST, STORAGE = "device", "host", "storage"
TIERS = (DEVICE, HOST, STORAGE)

GDS = "storage_to_device"
S2H = "storage_to_host"
H2D = "host_to_device"
D2H = "device_to_host"
H2S = "host_to_storage"

CHANNEL_ENDPOINTS = {
    GDS: (STORAGE, DEVICE),
    S2H: (STORAGE, HOST),
    H2D: (HOST, DEVICE),
    D2H: (DEVICE, HOST),
    H2S: (HOST, STORAGE),
}

CHANNEL_ALIASES = {"gds": GDS, "s2h": S2H, "h2d": H2D, "d2h": D2H, "h2s": H2S}

TRACE_COLUMNS = ("timestamp", "kind", "phase", "channel_or_tier", "buffer", "bytes", "flops")

UNBOUNDED = float("inf")


@dataclass(frozen=True)
class Channel:
    name: str
    bandwidth: float  # bytes / second
    fixed_latency: float = 20e-6

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"{self.name}: bandwidth must be > 0")
        if self.fixed_latency < 0:
            raise ValueError(f"{self.name}: fixed latency must be >= 0")

    def duration(self, nbytes: int) -> float:
        return self.fixed_latency + nbytes / self.bandwidth


def default_channels() -> Dict[str, Channel]:
    return {
        GDS: Channel(GDS, 5e9),
        S2H: Channel(S2H, 3e9),
        H2D: Channel(H2D, 12e9),
        D2H: Channel(D2H, 12e9),
        H2S: Channel(H2S, 3e9),
    }


@dataclass(frozen=True)
class SimConfig:
    channels: Dict[str, Channel] = field(default_factory=default_channels)
    flop_time: float = 1e-10
    host_byte_time: float = 0.5e-9
    overlap: bool = True
    device_capacity: float = UNBOUNDED
    host_capacity: float = UNBOUNDED

    def with_capacities(self, device=None, host=None) -> "SimConfig":
        return replace(
            self,
            device_capacity=self.device_capacity if device is None else device,
            host_capacity=self.host_capacity if host is None else host,
        )


@dataclass
class Tier:
    name: str
    capacity: float
    resident: Dict[str, int] = field(default_factory=dict)
    occupancy: int = 0

    @property
    def free(self) -> float:
        return self.capacity - self.occupancy

    def place(self, buffer_id: str, nbytes: int):
        if buffer_id in self.resident:
            raise ValueError(f"{self.name}: buffer {buffer_id!r} already resident")
        if self.occupancy + nbytes > self.capacity:
            raise CapacityExceeded(self.name, nbytes, self.free)
        self.resident[buffer_id] = nbytes
        self.occupancy += nbytes

    def remove(self, buffer_id: str) -> int:
        try:
            nbytes = self.resident.pop(buffer_id)
        except KeyError:
            raise BufferNotResident(f"{buffer_id!r} is not resident on {self.name}") from None
        self.occupancy -= nbytes
        return nbytes


@dataclass(frozen=True)
class TraceEvent:
    timestamp: float
    kind: str  # transfer | compute | alloc | free
    phase: str
    where: str  # channel name or tier name
    buffer: str
    nbytes: int = 0
    flops: int = 0

    def row(self):
        return (repr(float(self.timestamp)), self.kind, self.phase, self.where, self.buffer, self.nbytes, self.flops)


@dataclass
class ChannelTotals:
    count: int = 0
    nbytes: int = 0
    seconds: float = 0.0


@dataclass
class IoLedger:
    channels: Dict[str, ChannelTotals] = field(default_factory=lambda: {c: ChannelTotals() for c in CHANNEL_ENDPOINTS})
    merge_bytes: int = 0
    peak_device: int = 0

    def bytes_on(self, channel: str) -> int:
        return self.channels[channel].nbytes

    def snapshot(self) -> "IoLedger":
        return IoLedger(
            {k: ChannelTotals(v.count, v.nbytes, v.seconds) for k, v in self.channels.items()},
            self.merge_bytes,
            self.peak_device,
        )


def overlap_window(durations: Sequence[Tuple[str, float]], overlap: bool = True) -> float:
    """Elapsed time of transfers issued together on distinct channels."""
    seen = set()
    for ch, _ in durations:
        if ch in seen:
            raise SameChannelConflict(f"two concurrent transfers on {ch}")
        seen.add(ch)
    if not durations:
        return 0.0
    times = [d for _, d in durations]
    return max(times) if overlap else sum(times)


class TieredSystem:
    """Three memory tiers joined by transfer channels, driven by a virtual clock."""

    def __init__(self, config: SimConfig = SimConfig()):
        self.config = config
        self.tiers = {
            DEVICE: Tier(DEVICE, config.device_capacity),
            HOST: Tier(HOST, config.host_capacity),
            STORAGE: Tier(STORAGE, UNBOUNDED),
        }
        self.clock = 0.0
        self.phase = "I"
        self.trace: List[TraceEvent] = []
        self.ledger = IoLedger()
        self.blobs: Dict[str, bytes] = {}
        self.phase_seconds = {"I": 0.0, "II": 0.0, "III": 0.0}

    # -- bookkeeping ---------------------------------------------------------

    def set_phase(self, phase: str):
        if phase not in self.phase_seconds:
            raise ValueError(f"unknown phase {phase!r}")
        self.phase = phase

    def _advance(self, seconds: float):
        self.clock += seconds
        self.phase_seconds[self.phase] += seconds

    def _log(self, kind, where, buffer, nbytes=0, flops=0, timestamp=None):
        ts = self.clock if timestamp is None else timestamp
        self.trace.append(TraceEvent(ts, kind, self.phase, where, buffer, int(nbytes), int(flops)))

    def _track_peak(self):
        occ = self.tiers[DEVICE].occupancy
        if occ > self.ledger.peak_device:
            self.ledger.peak_device = occ

    def occupancy(self, tier: str) -> int:
        return self.tiers[tier].occupancy

    def free_bytes(self, tier: str) -> float:
        return self.tiers[tier].free

    def holds(self, tier: str, buffer_id: str) -> bool:
        return buffer_id in self.tiers[tier].resident

    def size_of(self, tier: str, buffer_id: str) -> int:
        try:
            return self.tiers[tier].resident[buffer_id]
        except KeyError:
            raise BufferNotResident(f"{buffer_id!r} is not resident on {tier}") from None

    # -- state changes ---------------------------------------------------------

    def alloc(self, tier: str, buffer_id: str, nbytes: int, blob: Optional[bytes] = None):
        self.tiers[tier].place(buffer_id, nbytes)
        if blob is not None:
            self.blobs[buffer_id] = blob
        self._log("alloc", tier, buffer_id, nbytes)
        self._track_peak()

    def free(self, tier: str, buffer_id: str):
        nbytes = self.tiers[tier].remove(buffer_id)
        self._log("free", tier, buffer_id, nbytes)

    def _start_transfer(self, channel, sources, dest_id, nbytes):
        src_tier, dst_tier = CHANNEL_ENDPOINTS[channel]
        if isinstance(sources, str):
            sources = [sources]
        for s in sources:
            if s not in self.tiers[src_tier].resident:
                raise BufferNotResident(f"{s!r} is not resident on {src_tier}")
        if nbytes is None:
            nbytes = sum(self.tiers[src_tier].resident[s] for s in sources)
        dest_id = dest_id or sources[0]
        self.tiers[dst_tier].place(dest_id, nbytes)
        return dst_tier, dest_id, int(nbytes)

    def _book_transfer(self, channel, dest_id, nbytes, dst_tier, start):
        seconds = self.config.channels[channel].duration(nbytes)
        tot = self.ledger.channels[channel]
        tot.count += 1
        tot.nbytes += nbytes
        tot.seconds += seconds
        self._log("transfer", channel, dest_id, nbytes, timestamp=start)
        self._track_peak()
        return seconds

    def transfer(self, channel: str, sources, dest_id: Optional[str] = None, nbytes: Optional[int] = None) -> float:
        """Copy buffer(s) across ``channel``; the source copy stays resident.

        ``nbytes`` defaults to the summed size of the sources. Returns the
        simulated duration, which is also added to the clock.

        Raises:
            BufferNotResident: a source buffer is not on the source tier.
            CapacityExceeded: the destination tier cannot hold the copy.
        """
        dst_tier, dest_id, nbytes = self._start_transfer(channel, sources, dest_id, nbytes)
        seconds = self._book_transfer(channel, dest_id, nbytes, dst_tier, self.clock)
        self._advance(seconds)
        return seconds

    def concurrent(self, transfers: Iterable[Tuple[str, object, Optional[str], Optional[int]]]) -> float:
        """Issue several transfers at once on distinct channels.

        The clock moves by ``overlap_window`` of the individual durations.
        """
        transfers = list(transfers)
        overlap_window([(t[0], 0.0) for t in transfers])
        start = self.clock
        durations = []
        for channel, sources, dest_id, nbytes in transfers:
            dst_tier, did, n = self._start_transfer(channel, sources, dest_id, nbytes)
            durations.append((channel, self._book_transfer(channel, did, n, dst_tier, start)))
        elapsed = overlap_window(durations, self.config.overlap)
        self._advance(elapsed)
        return elapsed

    def compute(self, flops: int, operands: Sequence[str] = (), label: str = "spgemm") -> float:
        for op in operands:
            if op not in self.tiers[DEVICE].resident:
                raise OperandNotOnDevice(f"operand {op!r} is not resident on device")
        seconds = flops * self.config.flop_time
        self._log("compute", DEVICE, label, 0, flops)
        self._advance(seconds)
        return seconds

    def host_work(self, nbytes: int, label: str, merge: bool = False) -> float:
        """Charge host-side processing of ``nbytes``; ``merge`` marks re-staging."""
        seconds = nbytes * self.config.host_byte_time
        self._log("compute", HOST, label, nbytes, 0)
        if merge:
            self.ledger.merge_bytes += nbytes
        self._advance(seconds)
        return seconds

    # -- export ------------------------------------------------------------------

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for ev in self.trace:
            w.writerow(ev.row())
        return buf.getvalue()


# --------------------------------------------------------------------------
# Audit helpers: independent folds over a trace
# --------------------------------------------------------------------------

MERGE_PREFIX = "merge:"


def fold_ledger(trace: Sequence[TraceEvent], config: SimConfig) -> IoLedger:
    """Rebuild ledger totals from the event log and the cost model alone."""
    led = IoLedger()
    for ev in trace:
        if ev.kind == "transfer":
            tot = led.channels[ev.where]
            tot.count += 1
            tot.nbytes += ev.nbytes
            tot.seconds += config.channels[ev.where].duration(ev.nbytes)
        elif ev.kind == "compute" and ev.where == HOST and ev.buffer.startswith(MERGE_PREFIX):
            led.merge_bytes += ev.nbytes
    led.peak_device = max(replay_device_occupancy(trace), default=0)
    return led


def replay_device_occupancy(trace: Sequence[TraceEvent]) -> List[int]:
    """Device occupancy after every event, from allocs, frees and transfers."""
    occ = 0
    out = []
    live = {}
    for ev in trace:
        if ev.kind == "alloc" and ev.where == DEVICE:
            live[ev.buffer] = ev.nbytes
            occ += ev.nbytes
        elif ev.kind == "transfer" and CHANNEL_ENDPOINTS[ev.where][1] == DEVICE:
            live[ev.buffer] = ev.nbytes
            occ += ev.nbytes
        elif ev.kind == "free" and ev.where == DEVICE:
            if ev.buffer not in live:
                raise ValueError(f"free of {ev.buffer!r} without a prior allocation")
            occ -= live.pop(ev.buffer)
        out.append(occ)
    return out


def check_trace(trace: Sequence[TraceEvent], device_capacity: float):
    """Raise AssertionError if the trace breaks ordering or capacity rules."""
    order = {"I": 0, "II": 1, "III": 2}
    last_t = 0.0
    last_p = 0
    for ev in trace:
        if ev.timestamp < last_t:
            raise AssertionError(f"timestamp went backwards at {ev}")
        if order[ev.phase] < last_p:
            raise AssertionError(f"phase went backwards at {ev}")
        last_t, last_p = ev.timestamp, order[ev.phase]
    for occ in replay_device_occupancy(trace):
        if occ > device_capacity:
            raise AssertionError(f"device occupancy {occ} exceeds capacity {device_capacity}")


# --------------------------------------------------------------------------
# Configuration file
# --------------------------------------------------------------------------

def parse_bytes(text: str) -> int:
    """Integer byte count; scientific notation such as ``4e9`` is accepted."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        val = float(text)
    if not val.is_integer():
        raise ValueError(f"byte count must be a whole number, got {text!r}")
    return int(val)


def read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path) as fh:
        cp.read_file(fh)
    return cp


def sim_config_from(cp: configparser.ConfigParser) -> SimConfig:
    """Build a SimConfig from ``[channels]``, ``[cost]`` and ``[memory]`` sections.

    Channel keys look like ``gds.bandwidth`` / ``gds.latency``; short names
    (gds, s2h, h2d, d2h, h2s) and full channel names are both accepted.
    """
    chans = default_channels()
    if cp.has_section("channels"):
        for key, raw in cp.items("channels"):
            name, _, attr = key.rpartition(".")
            name = CHANNEL_ALIASES.get(name, name)
            if name not in chans or attr not in ("bandwidth", "latency"):
                raise ValueError(f"unknown channel setting channels.{key}")
            ch = chans[name]
            if attr == "bandwidth":
                chans[name] = replace(ch, bandwidth=float(raw))
            else:
                chans[name] = replace(ch, fixed_latency=float(raw))
    cfg = SimConfig(channels=chans)
    if cp.has_section("cost"):
        sec = cp["cost"]
        cfg = replace(
            cfg,
            flop_time=sec.getfloat("flop_time", cfg.flop_time),
            host_byte_time=sec.getfloat("host_byte_time", cfg.host_byte_time),
            overlap=sec.getboolean("overlap", cfg.overlap),
        )
    if cp.has_section("memory"):
        sec = cp["memory"]
        if "device_bytes" in sec:
            cfg = replace(cfg, device_capacity=parse_bytes(sec["device_bytes"]))
        if "host_bytes" in sec:
            cfg = replace(cfg, host_capacity=parse_bytes(sec["host_bytes"]))
    return cfg
