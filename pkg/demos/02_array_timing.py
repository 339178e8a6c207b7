"""Timing anatomy of one linear array executing blocks.

A block of (block_rows x depth) x (depth x block_cols) costs

    block_rows                      prefetch of the first A column
  + max(block_rows, block_cols)     per inner step, B row streaming
      * depth                         padded by synchroniser stalls
  + pipeline stages                 multiply-accumulate flush

cycles. The cycle-by-cycle walk of the array (explicit PE registers and
FIFO hops) lands on the same count and the same bits as the fast path.
"""

import numpy as np

import masim

rng = np.random.default_rng(1)
array = masim.configure_mpe(1, 64, []).arrays[0]

print("closed-form cycles vs cycle-by-cycle walk")
for si, sj, k in [(16, 16, 8), (16, 8, 8), (8, 16, 8), (5, 7, 3)]:
    job = masim.BlockJob(rng.random((si, k), dtype=np.float32),
                         rng.random((k, sj), dtype=np.float32), si, sj, k)
    fast = masim.simulate_block(array, job, fmac_stages=8)
    walk, events, pes = masim.trace_block(array, job, fmac_stages=8)
    stalls = masim.psu_stall_plan(si, sj)
    print(f"  {si:>3}x{sj:<3} depth {k}: {fast.cycles} cycles "
          f"({stalls} stall/step), walk {walk.cycles}, "
          f"bitwise equal: {np.array_equal(fast.tile, walk.tile)}")

# the walk exposes the architectural invariants directly
si, sj, k = 6, 4, 3
job = masim.BlockJob(rng.random((si, k), dtype=np.float32),
                     rng.random((k, sj), dtype=np.float32), si, sj, k)
_, events, pes = masim.trace_block(array, job, fmac_stages=4)
latches = [e for e in events if e.kind == "a_latch" and e.k == 0]
print(f"\nprefetch: all {len(latches)} PEs latch their own element on "
      f"cycle {latches[0].cycle}")
print(f"register reuse per step: {pes[0].reuse_this_iter} "
      f"(= block_cols, each buffered value multiplies a whole B row)")

# joining arrays through the multiplexers supports longer blocks; the
# values never change, only the timing does
m = n = 48
kk = 20
a = rng.random((m, kk), dtype=np.float32)
b = rng.random((kk, n), dtype=np.float32)
grid = masim.partition(m, n, kk, 16, 16)
wl = masim.make_workload(a, b, grid)
print("\nindependent vs cooperating arrays on the same 9-tile workload")
for n_arrays in (4, 1):
    layout, active = masim.layout_for_point(n_arrays, 16, 64, 4)
    queues = masim.partition_workload(grid, n_arrays)
    rep = masim.run_mpe(layout, wl, queues, masim.ParametricBandwidth(),
                        active_arrays=active)
    label = f"{n_arrays} array(s)"
    print(f"  {label:<12} {rep.total_cycles:>8} cycles, "
          f"{rep.gflops:6.2f} GFLOPS, "
          f"blocks per array {[s.blocks_executed for s in rep.arrays]}")
