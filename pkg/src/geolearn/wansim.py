"""Deterministic discrete-event simulator for traffic between data centers.

Links are single-server queues: a message offered to a busy link waits, a
control-class message (barriers, clocks) is always dequeued before any
queued data-class message, and nothing preempts a transmission already in
flight. Delivery time for a message that starts service at s is
s + bytes/bandwidth + latency.

Determinism: the event queue is a heap keyed by (time, insertion sequence),
so ties resolve in insertion order and identical runs replay identically.

Cost accounting: machine time is billed per data center at an hourly rate;
traffic is billed per GB (1 GB = 1e9 bytes) at the sending region's egress
rate plus the receiving region's ingress rate.
"""

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

# wire-format byte accounting (documented constants, not tunables)
SPARSE_ENTRY_BYTES = 12      # 4-byte index + 8-byte value
DENSE_VALUE_BYTES = 8
BARRIER_HEADER_BYTES = 16
BARRIER_INDEX_BYTES = 4
CLOCK_BYTES = 24

CONTROL, DATA = "control", "data"
GB = 1e9

KIND_UPDATE = "update"
KIND_BARRIER = "barrier"
KIND_CLOCK = "clock"
KIND_TRAVEL = "travel"
BYTE_KINDS = (KIND_UPDATE, KIND_BARRIER, KIND_CLOCK, KIND_TRAVEL)

_PRIORITY = {KIND_BARRIER: CONTROL, KIND_CLOCK: CONTROL,
             KIND_UPDATE: DATA, KIND_TRAVEL: DATA}


def sparse_update_bytes(n_entries):
    return SPARSE_ENTRY_BYTES * n_entries


def dense_update_bytes(n_coords):
    return DENSE_VALUE_BYTES * n_coords


def barrier_bytes(n_indexes):
    return BARRIER_HEADER_BYTES + BARRIER_INDEX_BYTES * n_indexes


@dataclass
class Message:
    kind: str                 # primary kind, decides the priority class
    src: str
    dst: str
    byte_split: dict          # kind -> bytes, covers piggybacked payloads
    payload: object = None
    origin: str = None        # original producer (survives hub forwarding)
    forward: bool = False     # receiver should re-broadcast within its group

    def __post_init__(self):
        if self.origin is None:
            self.origin = self.src
        for kind in self.byte_split:
            if kind not in BYTE_KINDS:
                raise ValueError(f"unknown byte kind {kind!r}")

    @property
    def nbytes(self):
        return sum(self.byte_split.values())

    @property
    def klass(self):
        return _PRIORITY[self.kind]


@dataclass
class LinkSpec:
    src: str
    dst: str
    bandwidth: float          # bytes / second
    latency: float            # seconds
    send_cost_per_gb: float = 0.0
    recv_cost_per_gb: float = 0.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive on {self.src}->{self.dst}")
        if self.latency < 0:
            raise ValueError(f"negative latency on {self.src}->{self.dst}")


class _Channel:
    """Runtime queue state of one directed link."""

    def __init__(self, spec):
        self.spec = spec
        self.control = deque()
        self.data = deque()
        self.busy_until = 0.0
        self.in_service = None

    def pop_next(self):
        if self.control:
            return self.control.popleft()
        if self.data:
            return self.data.popleft()
        return None


@dataclass
class Topology:
    """Named data centers, directed link specs, and per-DC machine data."""

    dcs: list
    links: dict                      # (src, dst) -> LinkSpec
    machine_rate: dict = field(default_factory=dict)   # dc -> $/hr
    compute_s: dict = field(default_factory=dict)      # dc -> s per minibatch

    def link(self, src, dst):
        try:
            return self.links[(src, dst)]
        except KeyError:
            raise KeyError(f"no link configured from {src} to {dst}")


class CostLedger:
    """Byte and machine-time bookkeeping for one simulation."""

    def __init__(self):
        self.sent = {}        # (src, dst) -> {kind: bytes}
        self.delivered = {}   # (src, dst) -> {kind: bytes}
        self.machine_seconds = {}

    @staticmethod
    def _bump(table, key, split):
        row = table.setdefault(key, {k: 0 for k in BYTE_KINDS})
        for kind, nbytes in split.items():
            row[kind] += nbytes

    def record_sent(self, src, dst, split):
        self._bump(self.sent, (src, dst), split)

    def record_delivered(self, src, dst, split):
        self._bump(self.delivered, (src, dst), split)

    def record_machine_time(self, dc, seconds):
        self.machine_seconds[dc] = self.machine_seconds.get(dc, 0.0) + seconds

    def sent_bytes(self, kind=None):
        total = 0
        for row in self.sent.values():
            total += row[kind] if kind else sum(row.values())
        return total

    def delivered_bytes(self, kind=None):
        total = 0
        for row in self.delivered.values():
            total += row[kind] if kind else sum(row.values())
        return total

    def conservation_ok(self):
        """True when every link has delivered exactly what was sent."""
        keys = set(self.sent) | set(self.delivered)
        zero = {k: 0 for k in BYTE_KINDS}
        return all(
            self.sent.get(key, zero) == self.delivered.get(key, zero)
            for key in keys
        )


@dataclass
class CostRates:
    region: str
    machine_usd_per_hr: float
    send_usd_per_gb: float
    recv_usd_per_gb: float


def account_cost(ledger, rates):
    """Dollar total: machine-seconds plus per-GB egress and ingress.

    Summation order is fixed (machine time by DC order of first booking,
    then traffic by link insertion order, send before recv per link) so the
    result is reproducible to the last bit.
    """
    total = 0.0
    for dc, seconds in ledger.machine_seconds.items():
        total += seconds * (rates[dc].machine_usd_per_hr / 3600.0)
    for (src, dst), row in ledger.sent.items():
        gb = sum(row.values()) / GB
        total += gb * rates[src].send_usd_per_gb
    for (src, dst), row in ledger.delivered.items():
        gb = sum(row.values()) / GB
        total += gb * rates[dst].recv_usd_per_gb
    return total


class RateMonitor:
    """Exponentially smoothed bytes/second, one observation per clock."""

    def __init__(self, alpha=0.5):
        self.alpha = alpha
        self._rate = None

    def observe(self, nbytes, dt):
        if dt <= 0:
            raise ValueError(f"observation window must be positive, got {dt}")
        inst = nbytes / dt
        if self._rate is None:
            self._rate = inst
        else:
            self._rate = (1.0 - self.alpha) * self._rate + self.alpha * inst

    @property
    def warm(self):
        return self._rate is not None

    @property
    def rate(self):
        return self._rate if self._rate is not None else 0.0


# ---------------------------------------------------------------------------
# overlay routing


@dataclass
class OverlayPlan:
    """Hub-and-group broadcast structure.

    groups partition the data centers; hubs maps (from_group, to_group)
    index pairs to the member of to_group that receives on behalf of its
    group and re-broadcasts locally.
    """

    groups: list
    hubs: dict

    def __post_init__(self):
        seen = {}
        for gi, group in enumerate(self.groups):
            for dc in group:
                if dc in seen:
                    raise ValueError(f"{dc} appears in more than one group")
                seen[dc] = gi
        self._group_of = seen
        for (gi, gj), hub in self.hubs.items():
            if hub not in self.groups[gj]:
                raise ValueError(
                    f"hub {hub} for group pair ({gi},{gj}) is not in group {gj}")

    def group_of(self, dc):
        try:
            return self._group_of[dc]
        except KeyError:
            raise ValueError(f"{dc} belongs to no overlay group")

    def hub_for(self, from_group, to_group):
        try:
            return self.hubs[(from_group, to_group)]
        except KeyError:
            raise ValueError(f"no hub configured for group pair ({from_group},{to_group})")


def broadcast_hops(plan, source, dcs):
    """First-hop targets for a broadcast from source.

    Returns a list of (dst, needs_forward). With no plan the broadcast is
    direct to every other DC; with a plan the source reaches in-group peers
    directly and one hub per remote group, and each hub re-broadcasts within
    its own group (see forward_hops). Every DC receives exactly one copy.
    """
    if plan is None:
        return [(dst, False) for dst in dcs if dst != source]
    gi = plan.group_of(source)
    hops = [(dst, False) for dst in plan.groups[gi] if dst != source]
    for gj in range(len(plan.groups)):
        if gj != gi:
            hops.append((plan.hub_for(gi, gj), True))
    return hops


def forward_hops(plan, hub, origin):
    """In-group targets a hub re-broadcasts an inter-group copy to."""
    gj = plan.group_of(hub)
    return [dst for dst in plan.groups[gj] if dst != hub and dst != origin]


# ---------------------------------------------------------------------------
# the simulator


_DELIVER, _FREE, _WAKE = "deliver", "free", "wake"


class Simulator:
    """Event loop owning simulated time, channels, and the cost ledger."""

    def __init__(self, topology, overlay=None):
        self.topology = topology
        self.overlay = overlay
        self.now = 0.0
        self._heap = []
        self._seq = 0
        self.nodes = {}
        self.channels = {
            key: _Channel(spec) for key, spec in topology.links.items()
        }
        self.ledger = CostLedger()
        self.gate_trace = []

    def register(self, name, node):
        self.nodes[name] = node

    def _push(self, time, kind, data):
        if time < self.now:
            raise ValueError(f"cannot schedule into the past ({time} < {self.now})")
        heapq.heappush(self._heap, (time, self._seq, kind, data))
        self._seq += 1

    def wake_at(self, time, name):
        self._push(time, _WAKE, name)

    def send(self, msg):
        """Offer a message to its link; service starts as soon as possible."""
        channel = self.channels.get((msg.src, msg.dst))
        if channel is None:
            raise KeyError(f"no link configured from {msg.src} to {msg.dst}")
        self.ledger.record_sent(msg.src, msg.dst, msg.byte_split)
        if msg.klass == CONTROL:
            channel.control.append(msg)
        else:
            channel.data.append(msg)
        if channel.in_service is None:
            self._start_service(channel)

    def _start_service(self, channel):
        msg = channel.pop_next()
        if msg is None:
            return
        start = max(self.now, channel.busy_until)
        tx = msg.nbytes / channel.spec.bandwidth
        channel.in_service = msg
        channel.busy_until = start + tx
        key = (channel.spec.src, channel.spec.dst)
        self._push(channel.busy_until, _FREE, key)
        self._push(channel.busy_until + channel.spec.latency, _DELIVER, (key, msg))

    def advance(self):
        """Process one event; returns its record, or None when idle/complete."""
        if not self._heap:
            return None
        time, seq, kind, data = heapq.heappop(self._heap)
        self.now = time
        if kind == _FREE:
            channel = self.channels[data]
            channel.in_service = None
            self._start_service(channel)
        elif kind == _DELIVER:
            key, msg = data
            self.ledger.record_delivered(msg.src, msg.dst, msg.byte_split)
            node = self.nodes.get(msg.dst)
            if node is not None:
                node.on_message(self, msg)
        elif kind == _WAKE:
            node = self.nodes.get(data)
            if node is not None:
                node.on_wake(self)
        return (time, kind, data)

    def run(self, max_events=None):
        """Drain the event queue (optionally bounded); returns events processed."""
        count = 0
        while self._heap:
            if max_events is not None and count >= max_events:
                break
            self.advance()
            count += 1
        return count

    def pending(self):
        return len(self._heap)


# ---------------------------------------------------------------------------
# external file formats


def load_bandwidth_csv(path_or_file, unit_bytes_per_sec=125_000.0):
    """Read a bandwidth matrix CSV (row/col headers are DC names, cells Mb/s).

    Returns (dc_names, matrix) with matrix[i][j] in bytes/second from DC i to
    DC j. Empty or zero diagonal cells are ignored.
    """
    def parse(fh):
        rows = list(csv.reader(fh))
        header = [h.strip() for h in rows[0][1:]]
        names, matrix = [], {}
        for row in rows[1:]:
            if not row or not row[0].strip():
                continue
            src = row[0].strip()
            names.append(src)
            for dst, cell in zip(header, row[1:]):
                cell = cell.strip()
                if src == dst or not cell:
                    continue
                mbps = float(cell)
                if mbps <= 0:
                    raise ValueError(f"non-positive bandwidth {src}->{dst}")
                matrix[(src, dst)] = mbps * unit_bytes_per_sec
        if names != header:
            raise ValueError("bandwidth matrix row and column headers differ")
        return names, matrix

    if hasattr(path_or_file, "read"):
        return parse(path_or_file)
    with open(path_or_file, newline="") as fh:
        return parse(fh)


def load_cost_csv(path_or_file):
    """Read per-region cost rates; returns {region: CostRates}."""
    def parse(fh):
        reader = csv.DictReader(fh)
        needed = {"region", "machine_rate_usd_per_hr", "send_usd_per_gb", "recv_usd_per_gb"}
        if set(reader.fieldnames) != needed:
            raise ValueError(f"cost model header must be {sorted(needed)}")
        rates = {}
        for row in reader:
            rates[row["region"]] = CostRates(
                region=row["region"],
                machine_usd_per_hr=float(row["machine_rate_usd_per_hr"]),
                send_usd_per_gb=float(row["send_usd_per_gb"]),
                recv_usd_per_gb=float(row["recv_usd_per_gb"]),
            )
        return rates

    if hasattr(path_or_file, "read"):
        return parse(path_or_file)
    with open(path_or_file, newline="") as fh:
        return parse(fh)


def default_bandwidth():
    with resources.files("geolearn").joinpath("data_files/wan_bandwidth.csv").open() as fh:
        return load_bandwidth_csv(fh)


def default_costs():
    with resources.files("geolearn").joinpath("data_files/region_costs.csv").open() as fh:
        return load_cost_csv(fh)


def build_topology(dc_names, bandwidth=None, costs=None, latency_s=0.05,
                   compute_s=0.001):
    """Assemble a Topology for the named DCs from matrix + cost tables.

    bandwidth/costs default to the packaged tables. latency_s and compute_s
    may be scalars or {dc_pair}/{dc} dicts.
    """
    if bandwidth is None:
        names, matrix = default_bandwidth()
    else:
        names, matrix = bandwidth
    if costs is None:
        costs = default_costs()
    missing = [dc for dc in dc_names if dc not in names]
    if missing:
        raise ValueError(f"data centers missing from bandwidth matrix: {missing}")
    links = {}
    pair_bw = []
    for src in dc_names:
        for dst in dc_names:
            if src == dst:
                continue
            lat = latency_s.get((src, dst)) if isinstance(latency_s, dict) else latency_s
            pair_bw.append(matrix[(src, dst)])
            links[(src, dst)] = LinkSpec(
                src=src, dst=dst,
                bandwidth=matrix[(src, dst)],
                latency=lat,
                send_cost_per_gb=costs[src].send_usd_per_gb if src in costs else 0.0,
                recv_cost_per_gb=costs[dst].recv_usd_per_gb if dst in costs else 0.0,
            )
    # intra-DC traffic is effectively local: free and far faster than any WAN hop
    lan_bw = 15.0 * (sum(pair_bw) / len(pair_bw)) if pair_bw else 1.0
    for dc in dc_names:
        links[(dc, dc)] = LinkSpec(src=dc, dst=dc, bandwidth=lan_bw, latency=0.0)
    rate = {dc: costs[dc].machine_usd_per_hr if dc in costs else 0.0 for dc in dc_names}
    comp = {
        dc: compute_s.get(dc, 0.001) if isinstance(compute_s, dict) else compute_s
        for dc in dc_names
    }
    return Topology(dcs=list(dc_names), links=links, machine_rate=rate, compute_s=comp)
