"""Event-driven simulation of the full accelerator.

One run drives the active arrays over their work queues with overlapped
transfers: each array holds at most two resident blocks (one computing
from the active buffer, one prefetching into the shadow buffer), its
transfer engine serialises fetches and write-backs, and compute starts
only once a block's data is fully resident. Work stealing is evaluated at
block boundaries, i.e. whenever the event loop finishes a batch of
same-time events.

Two transfer regimes are available. In the default per-array regime every
active array sees the effective bandwidth the bandwidth model assigns to
the (array count, block size) configuration. The shared-port regime
serialises all arrays' transfers through one port at the single-array
rate, so contention emerges from the schedule instead of the model.

Reported time runs to the last write-back completion. The chain-drain of
the final block (which the per-block cycle contract excludes, because
every earlier drain overlaps the next block's compute) is reported
separately in the per-array stats and in time_with_drain_seconds.

A run is strictly deterministic: identical inputs produce an identical
report, event order is fixed by (time, insertion sequence), and
same-instant steal requests are resolved by the round-robin arbiter.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import mac, wqm
from .blockmm import DTYPE, TileGrid, as_matrix, make_tile, transpose_a
from .mpe import (BlockJob, InfeasibleBlockError, MpeLayout, block_cycles,
                  simulate_block)


class SimulationError(RuntimeError):
    """Internal inconsistency: the event loop wedged or lost work."""


@dataclass(frozen=True)
class Workload:
    """Problem data plus its tiling; a_t is the transposed image of a that
    the memory controller actually fetches blocks of A from."""

    a: np.ndarray
    b: np.ndarray
    a_t: np.ndarray
    grid: TileGrid


def make_workload(a, b, grid: TileGrid) -> Workload:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != (grid.m, grid.depth):
        raise ValueError(f"a has shape {a.shape}, grid expects {(grid.m, grid.depth)}")
    if b.shape != (grid.depth, grid.n):
        raise ValueError(f"b has shape {b.shape}, grid expects {(grid.depth, grid.n)}")
    return Workload(a=a, b=b, a_t=transpose_a(a), grid=grid)


@dataclass
class ArrayRunStats:
    array_id: int
    compute_cycles: int = 0
    stall_cycles: int = 0
    prefetch_cycles: int = 0
    blocks_executed: int = 0
    idle_cycles: int = 0
    drain_cycles: int = 0
    bytes_in: int = 0
    bytes_out: int = 0
    steals_taken: int = 0
    busy_seconds: float = 0.0
    tiles: list[int] = field(default_factory=list)


@dataclass
class SimReport:
    output: np.ndarray
    shape: tuple[int, int, int]          # (m, depth, n)
    total_cycles: int
    time_seconds: float
    time_with_drain_seconds: float
    gflops: float
    arrays: list[ArrayRunStats]
    steal_events: list[wqm.StealEvent]
    tile_count: int
    trace: list[tuple[int, int, str, int]]


class _ArrayState:
    """Per-array run state: queue, engines, buffers."""

    def __init__(self, idx, array, queue, slowdown):
        self.idx = idx
        self.array = array
        self.queue = queue
        self.slowdown = slowdown
        self.stats = ArrayRunStats(array_id=idx)
        self.resident = 0              # fetched (or fetching) but compute unfinished
        self.transfer_free = 0.0
        self.compute_busy = False
        self.ready: deque = deque()    # fetched items awaiting compute
        self.last_compute_end = 0.0
        self.last_wb_end = 0.0
        self.last_drain_cycles = 0

    def needy(self) -> bool:
        return len(self.queue) == 0 and self.resident < 2


def run_mpe(layout: MpeLayout, workload: Workload, queues: list[wqm.WorkQueue],
            bw_model, *, f_acc: float = 2e8, fmac_stages: int = 8,
            steal: bool = True, slowdowns=None, numerics: str = "exact",
            contention: str = "per_array", drain_width: int = 1,
            trace_path=None, active_arrays=None, strict: bool = True) -> SimReport:
    """Run the accelerator over a partitioned workload and report results.

    queues come from the workload queue manager, one per active array.
    slowdowns optionally scales individual arrays' clock periods (testing
    aid for load-imbalance scenarios; charged cycle stats stay nominal).
    numerics "exact" reproduces the per-PE float32 accumulation bit for
    bit; "fast" computes tiles with a float32 matmul, which is within
    normal float tolerance but not bit-identical.
    """
    if numerics not in ("exact", "fast"):
        raise ValueError(f"unknown numerics mode {numerics!r}")
    if contention not in ("per_array", "shared_port"):
        raise ValueError(f"unknown contention mode {contention!r}")
    grid = workload.grid
    if active_arrays is None:
        active_arrays = list(range(len(queues)))
    if len(active_arrays) != len(queues):
        raise ValueError("one queue per active array required")
    if len(active_arrays) > layout.n_arrays:
        raise ValueError("more queues than effective arrays")
    for aid in active_arrays:
        arr = layout.arrays[aid]
        if grid.block_rows > arr.pe_count:
            raise InfeasibleBlockError(
                f"block_rows {grid.block_rows} exceeds array {aid} length {arr.pe_count}")
        if grid.block_cols > layout.mc_depth:
            raise InfeasibleBlockError(
                f"block_cols {grid.block_cols} exceeds accumulator depth {layout.mc_depth}")

    n_active = len(active_arrays)
    if slowdowns is None:
        slow = [1.0] * n_active
    elif isinstance(slowdowns, dict):
        slow = [float(slowdowns.get(i, 1.0)) for i in range(n_active)]
    else:
        slow = [float(s) for s in slowdowns]
        if len(slow) != n_active:
            raise ValueError("slowdowns must match the number of active arrays")

    per_array_bw = mac.effective_bandwidth(bw_model, n_active, grid.block_rows)
    port_bw = mac.effective_bandwidth(bw_model, 1, grid.block_rows)
    shared = contention == "shared_port"
    shared_free = 0.0

    states = [_ArrayState(i, layout.arrays[aid], queues[i], slow[i])
              for i, aid in enumerate(active_arrays)]
    arbiter = wqm.RoundRobinArbiter(n_active)
    steal_log: list[wqm.StealEvent] = []
    trace: list[tuple[int, int, str, int]] = []
    out = np.zeros((grid.padded_rows, grid.padded_cols), DTYPE)
    executed: set[int] = set()

    heap: list = []
    seq = 0

    def push(t, kind, idx, item):
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind, idx, item))
        seq += 1

    def cyc(t: float) -> int:
        return round(t * f_acc)

    def log(t, st, kind, item):
        trace.append((cyc(t), st.idx, kind, item.item_id if item is not None else -1))

    def xfer(st: _ArrayState, t: float, nbytes: int):
        """Claim the array's (or the shared) transfer engine; return end time."""
        nonlocal shared_free
        if shared:
            start = max(t, shared_free)
            end = start + (nbytes / port_bw if math.isfinite(port_bw) else 0.0)
            shared_free = end
        else:
            start = max(t, st.transfer_free)
            end = start + (nbytes / per_array_bw if math.isfinite(per_array_bw) else 0.0)
            st.transfer_free = end
        return start, end

    def issue_fetches(st: _ArrayState, t: float):
        while st.resident < 2 and len(st.queue) > 0:
            item = st.queue.pop_head()
            st.resident += 1
            start, end = xfer(st, t, item.plan.in_bytes)
            st.stats.bytes_in += item.plan.in_bytes
            log(start, st, "fetch_start", item)
            push(end, "fetch_done", st.idx, item)

    def start_compute(st: _ArrayState, t: float):
        if st.compute_busy or not st.ready:
            return
        item = st.ready.popleft()
        st.compute_busy = True
        cycles = block_cycles(grid.block_rows, grid.block_cols, grid.depth, fmac_stages)
        log(t, st, "compute_start", item)
        push(t + cycles / f_acc * st.slowdown, "compute_done", st.idx, item)

    def finish_compute(st: _ArrayState, item: wqm.WorkItem, t: float):
        tile = make_tile(grid, item.tile_row, item.tile_col, workload.a, workload.b)
        if numerics == "exact":
            res = simulate_block(
                st.array,
                BlockJob(tile.sa(), tile.sb(), grid.block_rows, grid.block_cols,
                         grid.depth, item.tile_row, item.tile_col),
                fmac_stages=fmac_stages, mc_depth=layout.mc_depth,
                drain_width=drain_width)
            block = res.tile
            stats_src = res
        else:
            block = np.matmul(tile.sa(), tile.sb())
            stats_src = None
        r0 = item.tile_row * grid.block_rows
        c0 = item.tile_col * grid.block_cols
        out[r0: r0 + grid.block_rows, c0: c0 + grid.block_cols] = block

        s = st.stats
        s.blocks_executed += 1
        s.tiles.append(item.item_id)
        s.prefetch_cycles += grid.block_rows
        if stats_src is not None:
            s.compute_cycles += stats_src.compute_cycles
            s.stall_cycles += stats_src.stall_cycles
            drain = stats_src.drain_cycles
        else:
            s.compute_cycles += grid.block_cols * grid.depth + fmac_stages
            s.stall_cycles += (max(grid.block_rows, grid.block_cols)
                               - grid.block_cols) * grid.depth
            drain = -(-grid.block_rows * grid.block_cols // drain_width)
        cycles = block_cycles(grid.block_rows, grid.block_cols, grid.depth, fmac_stages)
        s.busy_seconds += cycles / f_acc * st.slowdown
        st.last_drain_cycles = drain
        st.last_compute_end = t
        if item.item_id in executed:
            raise SimulationError(f"tile {item.item_id} executed twice")
        executed.add(item.item_id)

        start, end = xfer(st, t, item.plan.out_bytes)
        s.bytes_out += item.plan.out_bytes
        log(start, st, "wb_start", item)
        push(end, "wb_done", st.idx, item)
        st.resident -= 1
        st.compute_busy = False
        issue_fetches(st, t)
        start_compute(st, t)

    def arbitration(t: float):
        needy = [st.idx for st in states if st.needy()]
        if not needy:
            return

        def grant(thief: int):
            states[thief].stats.steals_taken += 1
            issue_fetches(states[thief], t)

        before = len(steal_log)
        wqm.arbitrate([st.queue for st in states], needy, arbiter, t, steal_log,
                      on_steal=grant)
        for ev in steal_log[before:]:
            trace.append((cyc(ev.time_s), ev.thief, "steal", ev.item_id))
        if strict:
            for st in states:
                st.queue.check_counter()
            still = [st for st in states if st.needy() and st.resident == 0
                     and len(st.queue) == 0]
            if still and any(st.queue.counter >= 1 for st in states):
                raise SimulationError("array starved while another queue holds work")

    for st in states:
        issue_fetches(st, 0.0)

    while heap:
        t, _, kind, idx, item = heapq.heappop(heap)
        st = states[idx]
        if kind == "fetch_done":
            log(t, st, "fetch_done", item)
            st.ready.append(item)
            start_compute(st, t)
        elif kind == "compute_done":
            log(t, st, "compute_done", item)
            finish_compute(st, item, t)
        elif kind == "wb_done":
            log(t, st, "wb_done", item)
            st.last_wb_end = t
        if steal and (not heap or heap[0][0] > t):
            arbitration(t)

    if len(executed) != grid.tile_count or any(len(st.queue) for st in states):
        raise SimulationError(
            f"run ended with {len(executed)}/{grid.tile_count} tiles executed")

    time_seconds = max((max(st.last_wb_end, st.last_compute_end) for st in states),
                       default=0.0)
    drain_end = 0.0
    for st in states:
        st.stats.drain_cycles = st.last_drain_cycles
        if st.stats.blocks_executed:
            drain_end = max(drain_end, st.last_compute_end
                            + st.last_drain_cycles / f_acc * st.slowdown)
    time_with_drain = max(time_seconds, drain_end)
    for st in states:
        st.stats.idle_cycles = max(0, round((time_seconds - st.stats.busy_seconds) * f_acc))

    m, k, n = grid.m, grid.depth, grid.n
    report = SimReport(
        output=out[: grid.m, : grid.n],
        shape=(m, k, n),
        total_cycles=cyc(time_seconds),
        time_seconds=time_seconds,
        time_with_drain_seconds=time_with_drain,
        gflops=2.0 * m * k * n / time_seconds / 1e9 if time_seconds > 0 else 0.0,
        arrays=[st.stats for st in states],
        steal_events=steal_log,
        tile_count=grid.tile_count,
        trace=sorted(trace),
    )
    if trace_path is not None:
        write_trace_csv(report.trace, trace_path)
    return report


def write_trace_csv(rows, path):
    """Trace rows as CSV with header cycle,array,event,block."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle", "array", "event", "block"])
        writer.writerows(rows)
