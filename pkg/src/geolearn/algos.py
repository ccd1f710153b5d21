"""Training algorithms as event-driven nodes on the WAN simulator.

Three communication regimes over the same momentum-SGD inner loop:

* GaiaNode: per-coordinate significance filtering with selective barriers
  and mirror clocks (the relaxed mode), or dense lockstep / bounded-stale
  exchange as baselines, chosen by policy.
* FedAvgNode: rounds of local steps followed by a dense model average.
* DgcNode: synchronized sparse all-reduce of top-k update coordinates with
  momentum correction and a warm-up sparsity ramp.

Nodes are state machines driven by Simulator wake and delivery events: a
node computes for its DC's configured compute time per minibatch, then
exchanges according to its policy, and blocks whenever its gates say so.
A blocked node simply stays idle until a delivery changes its view.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import psync, wansim
from .data import MinibatchStream
from .numerics import ClipConfig, MomentumState, clip_by_norm, lr_at, momentum_step
from .psync import (
    BarrierMsg, EPS_WEIGHT, IterTick, LrDropped, SoftCtl, ThresholdSchedule,
    WeightShard, accumulate_and_flush, apply_barrier, clear_barrier_on_update,
    gate_read, mirror_clock_gate, ssp_gate, soft_threshold_adjust,
)

WARMUP_SCHEDULE = (75.0, 93.75, 98.4375, 99.6, 99.9)
DGC_CLIP_NORM = 5.0


def warmup_sparsity(epoch, e_warm, schedule=WARMUP_SCHEDULE):
    """Warm-up sparsity percentage for a 1-indexed epoch.

    The ramp advances one stage every e_warm epochs and saturates at the
    last stage: epoch 1 with e_warm=4 gives stage 1 (75%), epoch 17 gives
    the terminal 99.9%.
    """
    if epoch < 1:
        raise ValueError(f"epoch is 1-indexed, got {epoch}")
    if e_warm < 1:
        raise ValueError(f"e_warm must be >= 1, got {e_warm}")
    stage = min(math.ceil(epoch / e_warm), len(schedule))
    return schedule[stage - 1]


def dgc_select(v, sparsity_pct):
    """Indices to emit: the ceil((1-s)*M) largest |v|, ties to lowest index."""
    m = v.size
    k = math.ceil((1.0 - sparsity_pct / 100.0) * m)
    if k <= 0:
        return np.empty(0, dtype=np.intp)
    order = np.lexsort((np.arange(m), -np.abs(v)))
    return np.sort(order[:k])


# ---------------------------------------------------------------------------
# diagnostics


def residual_delta_diag(v_list, w_list, eps=EPS_WEIGHT):
    """Mean |residual| relative to |weight|, in percent, across nodes."""
    vals = [
        float(np.mean(np.abs(v) / np.maximum(np.abs(w), eps))) * 100.0
        for v, w in zip(v_list, w_list)
    ]
    return float(np.mean(vals))


def local_update_delta_diag(local_ws, global_w, eps=EPS_WEIGHT):
    """Mean |local - global| relative to |global|, in percent, across nodes."""
    g = np.asarray(global_w, dtype=np.float64)
    vals = [
        float(np.mean(np.abs(w - g) / np.maximum(np.abs(g), eps))) * 100.0
        for w in local_ws
    ]
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# policies


@dataclass
class BspPolicy:
    """Dense exchange every iteration, lockstep."""


@dataclass
class SspPolicy:
    """Dense exchange every iteration, bounded staleness."""

    staleness: int = 1


@dataclass
class AspPolicy:
    """Significance-filtered exchange with barriers and mirror clocks."""

    t0: float = 0.01
    ds: int = 1
    decay_mode: str = "lr"              # "lr" | "invsqrt"
    sig_fn: object = "relative"
    barrier: bool = True
    mirror: bool = True
    soft: SoftCtl = field(default_factory=SoftCtl)


# ---------------------------------------------------------------------------
# batch views


class ArrayBatches:
    """Row-indexed view over (X, y) arrays for classifiers."""

    def __init__(self, X, y):
        self.X = X
        self.y = y

    def make(self, idx):
        return self.X[idx], self.y[idx]


class EntryBatches:
    """Identity view for factorization entry indices."""

    def make(self, idx):
        return np.asarray(idx, dtype=np.intp)


class _NodeBase:
    """Shared plumbing: compute scheduling, counters, hooks."""

    def __init__(self, name, index, model, batch_view, stream, lr_schedule,
                 compute_s, max_iters):
        self.name = name
        self.index = index
        self.model = model
        self.batch_view = batch_view
        self.stream = stream
        self.lr_schedule = lr_schedule
        self.compute_s = compute_s
        self.max_iters = max_iters
        self.iters_done = 0
        self.stopped = False
        self.diverged = False
        self._computing = False
        self._finish_at = None
        self.epoch_hook = None        # fn(node, sim) at each local epoch end
        self.iter_hook = None         # fn(node, sim) after every iteration
        self.travel_sink = None       # fn(node, sim, msg) for travel payloads

    @property
    def batches_per_epoch(self):
        return self.stream.batches_per_epoch

    @property
    def epochs_done(self):
        return self.iters_done // self.batches_per_epoch

    def _epoch_index(self):
        # 0-indexed epoch the *next* iteration belongs to
        return self.iters_done // self.batches_per_epoch

    def _begin_compute(self, sim):
        self._computing = True
        self._finish_at = sim.now + self.compute_s
        sim.wake_at(self._finish_at, self.name)

    def on_wake(self, sim):
        if self.stopped:
            return
        if self._computing:
            if sim.now >= self._finish_at:
                self._computing = False
                self._finish_iteration(sim)
                if not self.stopped:
                    self.try_start(sim)
            return
        self.try_start(sim)

    def _after_iteration(self, sim):
        if not np.all(np.isfinite(self.weights())):
            self.diverged = True
            self.stopped = True
        if self.iters_done % self.batches_per_epoch == 0 and self.epoch_hook:
            self.epoch_hook(self, sim)
        if self.iter_hook:
            self.iter_hook(self, sim)
        if self.max_iters is not None and self.iters_done >= self.max_iters:
            self.stopped = True

    def weights(self):
        raise NotImplementedError

    def try_start(self, sim):
        raise NotImplementedError

    def _finish_iteration(self, sim):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# significance-filtered / dense-policy node


class GaiaNode(_NodeBase):
    """One data center's worker+server pair under a sync policy.

    The policy decides both what is emitted after each local step (a
    significance-filtered slice of the accumulated update, or the whole
    dense update) and what gates the next step (mirror clock + selective
    barrier, or a staleness bound on known peer clocks).
    """

    def __init__(self, name, index, model, batch_view, stream, lr_schedule,
                 compute_s, max_iters, w0, policy, peers, momentum=0.9):
        super().__init__(name, index, model, batch_view, stream, lr_schedule,
                         compute_s, max_iters)
        self.policy = policy
        self.peers = list(peers)
        self.shard = WeightShard.fresh(w0, m=momentum, peers=self.peers)
        self.inbox = []            # (clock, origin, seq, idx, vals, dense)
        self._inbox_seq = 0
        self._last_eta = None
        self._last_flush_time = {p: 0.0 for p in self.peers}
        self.rate_monitors = {p: wansim.RateMonitor() for p in self.peers}
        if isinstance(policy, AspPolicy):
            self.t_hard = policy.t0
            self.t_soft = policy.t0
            self.t_sched = ThresholdSchedule(t0=policy.t0, mode=policy.decay_mode)
        self.sig_counts = {}       # epoch -> [emitted, scored]
        self.comm_enabled = True

    def weights(self):
        return self.shard.w

    # -- receiving ---------------------------------------------------------

    def on_message(self, sim, msg):
        split = msg.byte_split
        if wansim.KIND_CLOCK in split and msg.payload is not None:
            clock = msg.payload.get("clock")
            if clock is not None and msg.origin in self.shard.mirror_clocks:
                self.shard.mirror_clocks[msg.origin] = max(
                    self.shard.mirror_clocks[msg.origin], clock)
        if msg.kind == wansim.KIND_BARRIER:
            apply_barrier(self.shard, msg.payload["barrier"])
        elif msg.kind == wansim.KIND_UPDATE and "idx" in (msg.payload or {}):
            p = msg.payload
            self.inbox.append((p["clock"], msg.origin, self._inbox_seq,
                               p["idx"], p["vals"], p["dense"]))
            self._inbox_seq += 1
        elif msg.kind == wansim.KIND_TRAVEL:
            if self.travel_sink:
                self.travel_sink(self, sim, msg)
        self._maybe_forward(sim, msg)
        if not self._computing and not self.stopped:
            self.try_start(sim)

    def _maybe_forward(self, sim, msg):
        if not msg.forward or sim.overlay is None:
            return
        for dst in wansim.forward_hops(sim.overlay, self.name, msg.origin):
            sim.send(wansim.Message(
                kind=msg.kind, src=self.name, dst=dst,
                byte_split=dict(msg.byte_split), payload=msg.payload,
                origin=msg.origin, forward=False))

    def _drain_inbox(self):
        if not self.inbox:
            return
        self.inbox.sort(key=lambda rec: (rec[0], rec[1], rec[2]))
        for clock, origin, _seq, idx, vals, dense in self.inbox:
            if dense:
                self.shard.w = self.shard.w + vals
                # a dense update touches everything pending
                idx = np.fromiter(self.shard.barrier_waits, dtype=np.intp)
            else:
                w = self.shard.w.copy()
                w[idx] += vals
                self.shard.w = w
            clear_barrier_on_update(self.shard, origin, clock, idx)
        self.inbox.clear()

    # -- gating ------------------------------------------------------------

    def _true_min_peer_clock(self, sim):
        clocks = [
            sim.nodes[p].shard.local_clock
            for p in self.peers if p in sim.nodes
        ]
        return min(clocks) if clocks else self.shard.local_clock

    def _gates_allow(self, sim):
        local = self.shard.local_clock
        if isinstance(self.policy, AspPolicy):
            allow = True
            if self.policy.mirror and self.peers and self.comm_enabled:
                min_known = min(self.shard.mirror_clocks.values())
                allow = mirror_clock_gate(local, min_known, self.policy.ds)
                sim.gate_trace.append((
                    sim.now, self.name, "mirror", local, min_known,
                    self._true_min_peer_clock(sim), allow))
                if not allow:
                    return False
            if self.policy.barrier and self.shard.barrier_waits:
                read_set = self.model.touched(self.batch_view.make(self.stream.peek()))
                blocked = gate_read(self.shard, read_set)
                sim.gate_trace.append((
                    sim.now, self.name, "barrier", local, len(blocked),
                    self._true_min_peer_clock(sim), blocked.size == 0))
                if blocked.size:
                    return False
            return True
        staleness = 0 if isinstance(self.policy, BspPolicy) else self.policy.staleness
        if not self.peers or not self.comm_enabled:
            return True
        slowest = min(self.shard.mirror_clocks.values())
        allow = ssp_gate(local, slowest, staleness)
        sim.gate_trace.append((
            sim.now, self.name, "ssp", local, slowest,
            self._true_min_peer_clock(sim), allow))
        return allow

    def try_start(self, sim):
        if self._computing or self.stopped:
            return
        self._drain_inbox()
        if not self._gates_allow(sim):
            return
        self._begin_compute(sim)

    # -- the local step ----------------------------------------------------

    def _finish_iteration(self, sim):
        batch = self.batch_view.make(self.stream.next_batch())
        loss, grad = self.model.loss_and_grad(self.shard.w, batch,
                                              update_stats=True)
        eta = lr_at(self.lr_schedule, self._epoch_index(), self.iters_done)
        w_next, m_next, update = momentum_step(self.shard.w, self.shard.momentum,
                                               grad, eta)
        self.shard.w = w_next
        self.shard.momentum = m_next
        self.iters_done += 1
        self.shard.local_clock += 1
        if isinstance(self.policy, AspPolicy):
            self._asp_exchange(sim, update, eta)
        else:
            self._dense_exchange(sim, update)
        self._last_eta = eta
        self._after_iteration(sim)

    def _broadcast(self, sim, byte_split, payload):
        for dst, needs_forward in wansim.broadcast_hops(
                sim.overlay, self.name, sim.topology.dcs):
            sim.send(wansim.Message(
                kind=wansim.KIND_UPDATE if wansim.KIND_UPDATE in byte_split
                else wansim.KIND_CLOCK,
                src=self.name, dst=dst, byte_split=dict(byte_split),
                payload=payload, origin=self.name, forward=needs_forward))

    def _dense_exchange(self, sim, update):
        if not self.peers or not self.comm_enabled:
            return
        payload = {
            "clock": self.shard.local_clock,
            "idx": None,
            "vals": update.copy(),
            "dense": True,
        }
        split = {
            wansim.KIND_UPDATE: wansim.dense_update_bytes(update.size),
            wansim.KIND_CLOCK: wansim.CLOCK_BYTES,
        }
        self._broadcast(sim, split, payload)

    def _asp_exchange(self, sim, update, eta):
        pol = self.policy
        self.shard.v = self.shard.v + update
        # threshold decay: coupled to lr drops, or 1/sqrt(t) on every tick
        if pol.decay_mode == "lr" and self._last_eta is not None and eta < self._last_eta:
            self.t_hard = psync.threshold_decay(
                self.t_sched, self.t_hard, LrDropped(eta / self._last_eta))
            self.t_soft = min(self.t_soft, self.t_hard)
        elif pol.decay_mode == "invsqrt":
            self.t_hard = psync.threshold_decay(
                self.t_sched, self.t_hard, IterTick(self.iters_done))
            self.t_soft = min(self.t_soft, self.t_hard)
        t_eff = self.t_soft if pol.soft.enabled else self.t_hard
        idx, vals = accumulate_and_flush(self.shard, t_eff, sig_fn=pol.sig_fn)
        epoch = (self.iters_done - 1) // self.batches_per_epoch
        counts = self.sig_counts.setdefault(epoch, [0, 0])
        counts[0] += int(idx.size)
        counts[1] += int(self.shard.v.size)
        if not self.peers or not self.comm_enabled:
            return
        payload = {
            "clock": self.shard.local_clock,
            "idx": idx,
            "vals": vals,
            "dense": False,
        }
        flush_nbytes = wansim.sparse_update_bytes(idx.size) + wansim.CLOCK_BYTES
        # per-destination rate bookkeeping and barrier decisions use the
        # first-hop links only; hub forwarding is mechanical
        hops = wansim.broadcast_hops(sim.overlay, self.name, sim.topology.dcs)
        utilizations = []
        for dst, _fw in hops:
            link = sim.topology.link(self.name, dst)
            monitor = self.rate_monitors[dst]
            elapsed = sim.now - self._last_flush_time[dst]
            if elapsed > 0:
                monitor.observe(flush_nbytes, elapsed)
            self._last_flush_time[dst] = sim.now
            utilizations.append(monitor.rate / link.bandwidth)
            if pol.barrier and monitor.warm and idx.size:
                barrier = psync.maybe_emit_barrier(
                    monitor.rate, link.bandwidth, idx,
                    self.name, self.shard.local_clock)
                if barrier is not None:
                    sim.send(wansim.Message(
                        kind=wansim.KIND_BARRIER, src=self.name, dst=dst,
                        byte_split={wansim.KIND_BARRIER:
                                    wansim.barrier_bytes(len(barrier.indexes))},
                        payload={"barrier": barrier}, origin=self.name))
        if idx.size:
            split = {
                wansim.KIND_UPDATE: wansim.sparse_update_bytes(idx.size),
                wansim.KIND_CLOCK: wansim.CLOCK_BYTES,
            }
            self._broadcast(sim, split, payload)
        else:
            # nothing significant: the clock still has to move
            self._broadcast(
                sim, {wansim.KIND_CLOCK: wansim.CLOCK_BYTES},
                {"clock": self.shard.local_clock, "idx": None,
                 "vals": None, "dense": False})
        if pol.soft.enabled and utilizations:
            self.t_soft = soft_threshold_adjust(
                pol.soft, max(utilizations), self.t_soft, self.t_hard)


# ---------------------------------------------------------------------------
# federated averaging


class FedAvgNode(_NodeBase):
    """Local momentum SGD punctuated by a dense model average every
    iter_local steps. Rounds are synchronous: a node holds at the round
    boundary until every participant's model for that round has arrived."""

    def __init__(self, name, index, model, batch_view, stream, lr_schedule,
                 compute_s, max_rounds, w0, peers, iter_local, momentum=0.9,
                 participants_fn=None):
        super().__init__(name, index, model, batch_view, stream, lr_schedule,
                         compute_s, max_iters=None)
        self.peers = list(peers)
        self.w = np.array(w0, dtype=np.float64)
        self.momentum = MomentumState.zeros(self.w.size, m=momentum)
        self.iter_local = int(iter_local)
        self.max_rounds = max_rounds
        self.round = 0
        self._round_models = {}    # round -> {name: w}
        self._awaiting = False
        self._steps_in_round = 0
        # participants_fn(round) -> ordered participant name list
        self.participants_fn = participants_fn
        self.round_hook = None
        self.comm_enabled = True
        self.reconstructed = None

    def weights(self):
        return self.w

    def _ordered_members(self):
        return sorted([self.name] + self.peers)

    def on_message(self, sim, msg):
        if msg.kind == wansim.KIND_TRAVEL:
            if self.travel_sink:
                self.travel_sink(self, sim, msg)
        elif msg.kind == wansim.KIND_UPDATE:
            p = msg.payload
            self._round_models.setdefault(p["round"], {})[msg.origin] = p["w"]
            if self._awaiting:
                self._try_reduce(sim)
        if not self._computing and not self.stopped and not self._awaiting:
            self.try_start(sim)

    def try_start(self, sim):
        if self._computing or self.stopped or self._awaiting:
            return
        participants = self._members_this_round()
        if self.name not in participants:
            # sitting this round out: adopt the average once it is complete
            self._awaiting = True
            self._try_reduce(sim)
            return
        self._begin_compute(sim)

    def _members_this_round(self):
        if self.participants_fn is None or not self.comm_enabled:
            return self._ordered_members()
        return self.participants_fn(self.round)

    def _finish_iteration(self, sim):
        batch = self.batch_view.make(self.stream.next_batch())
        loss, grad = self.model.loss_and_grad(self.w, batch, update_stats=True)
        eta = lr_at(self.lr_schedule, self._epoch_index(), self.iters_done)
        self.w, self.momentum, _ = momentum_step(self.w, self.momentum, grad, eta)
        self.iters_done += 1
        self._steps_in_round += 1
        self._after_iteration(sim)
        if self.stopped:
            return
        if self._steps_in_round >= self.iter_local:
            self._steps_in_round = 0
            self._share_model(sim)

    def _share_model(self, sim):
        if not self.comm_enabled or not self.peers:
            self.reconstructed = {self.name: self.w.copy()}
            self.round += 1
            if self.round_hook:
                self.round_hook(self, sim)
            if self.round >= self.max_rounds:
                self.stopped = True
            return
        payload = {"round": self.round, "w": self.w.copy()}
        self._round_models.setdefault(self.round, {})[self.name] = self.w.copy()
        for dst, needs_forward in wansim.broadcast_hops(
                sim.overlay, self.name, sim.topology.dcs):
            sim.send(wansim.Message(
                kind=wansim.KIND_UPDATE, src=self.name, dst=dst,
                byte_split={wansim.KIND_UPDATE:
                            wansim.dense_update_bytes(self.w.size)},
                payload=payload, origin=self.name, forward=needs_forward))
        self._awaiting = True
        self._try_reduce(sim)

    def _try_reduce(self, sim):
        members = self._members_this_round()
        have = self._round_models.get(self.round, {})
        if any(m not in have for m in members):
            return
        stack = np.stack([have[m] for m in sorted(members)])
        mean = stack.sum(axis=0) / len(members)
        self.w = mean
        self.reconstructed = {m: have[m] for m in sorted(members)}
        del self._round_models[self.round]
        self.round += 1
        self._awaiting = False
        if self.round_hook:
            self.round_hook(self, sim)
        if self.round >= self.max_rounds:
            self.stopped = True
        if not self.stopped:
            self.try_start(sim)


# ---------------------------------------------------------------------------
# sparse synchronized all-reduce


class DgcNode(_NodeBase):
    """Per-step synchronous exchange of top-k momentum-corrected residuals.

    Every node advances the same global weight vector by the sum of all
    emitted slices for a step, applied in node order, so replicas stay
    bit-identical. Sparsity follows the warm-up ramp by local epoch.
    """

    def __init__(self, name, index, model, batch_view, stream, lr_schedule,
                 compute_s, max_iters, w0, peers, e_warm=1, momentum=0.9,
                 clip_norm=DGC_CLIP_NORM, schedule=WARMUP_SCHEDULE):
        super().__init__(name, index, model, batch_view, stream, lr_schedule,
                         compute_s, max_iters)
        self.peers = list(peers)
        self.w = np.array(w0, dtype=np.float64)
        self.u = np.zeros_like(self.w)
        self.v = np.zeros_like(self.w)
        self.m = momentum
        self.e_warm = int(e_warm)
        self.clip = clip_norm
        self.schedule = schedule
        self.step = 0                  # completed & applied steps
        self._step_slices = {}         # step -> {name: (idx, vals)}
        self._awaiting = False
        self.comm_enabled = True
        self.last_emitted = None

    def weights(self):
        return self.w

    def on_message(self, sim, msg):
        if msg.kind == wansim.KIND_TRAVEL:
            if self.travel_sink:
                self.travel_sink(self, sim, msg)
        elif msg.kind == wansim.KIND_UPDATE:
            p = msg.payload
            self._step_slices.setdefault(p["step"], {})[msg.origin] = (
                p["idx"], p["vals"])
            if self._awaiting:
                self._try_apply(sim)
        if not self._computing and not self.stopped and not self._awaiting:
            self.try_start(sim)

    def try_start(self, sim):
        if self._computing or self.stopped or self._awaiting:
            return
        self._begin_compute(sim)

    def current_sparsity(self):
        epoch_1idx = self.iters_done // self.batches_per_epoch + 1
        return warmup_sparsity(epoch_1idx, self.e_warm, self.schedule)

    def _finish_iteration(self, sim):
        batch = self.batch_view.make(self.stream.next_batch())
        loss, grad = self.model.loss_and_grad(self.w, batch, update_stats=True)
        eta = lr_at(self.lr_schedule, self._epoch_index(), self.iters_done)
        step_vec = clip_by_norm(-eta * grad, ClipConfig(self.clip))
        self.u = self.m * self.u + step_vec
        self.v = self.v + self.u
        sparsity = self.current_sparsity()
        idx = dgc_select(self.v, sparsity)
        vals = self.v[idx].copy()
        self.v[idx] = 0.0
        self.u[idx] = 0.0             # momentum correction
        self.last_emitted = (idx, vals)
        this_step = self.iters_done   # 0-indexed step being exchanged
        self._step_slices.setdefault(this_step, {})[self.name] = (idx, vals)
        if self.comm_enabled and self.peers:
            payload = {"step": this_step, "idx": idx, "vals": vals}
            for dst, needs_forward in wansim.broadcast_hops(
                    sim.overlay, self.name, sim.topology.dcs):
                sim.send(wansim.Message(
                    kind=wansim.KIND_UPDATE, src=self.name, dst=dst,
                    byte_split={wansim.KIND_UPDATE:
                                wansim.sparse_update_bytes(idx.size)},
                    payload=payload, origin=self.name, forward=needs_forward))
        self._awaiting = True
        self._try_apply(sim)

    def _try_apply(self, sim):
        members = sorted([self.name] + self.peers) if (
            self.comm_enabled and self.peers) else [self.name]
        have = self._step_slices.get(self.iters_done, {})
        if any(m not in have for m in members):
            return
        w = self.w.copy()
        for m in sorted(members):
            idx, vals = have[m]
            w[idx] += vals
        self.w = w
        del self._step_slices[self.iters_done]
        self.iters_done += 1
        self.step = self.iters_done
        self._awaiting = False
        self._after_iteration(sim)
        if not self.stopped:
            self.try_start(sim)
