"""Simulator and performance model for a multi-array linear systolic
GEMM accelerator."""

from .blockmm import (DTYPE, Tile, TileGrid, as_matrix, make_tile,
                      multiply_blocked, partition, reference_gemm,
                      tile_outer_accumulate, transpose_a)
from .mac import (BufferDescriptor, CalibrationError, CalibrationMissingError,
                  IdealBandwidth, ParametricBandwidth, TableBandwidth,
                  TransferPlan, block_bytes, effective_bandwidth,
                  make_transfer_plan, plan_for_tile, transfer_time)
from .model import (DesignPoint, ExploreResult, ModelEstimate, ProblemShape,
                    bounds, default_block_candidates, explore,
                    feasible_array_counts, feasible_points, is_feasible,
                    n_work, peak_gflops, t_compute, t_trans, t_work)
from .mpe import (BlockJob, BlockResult, EffectiveArray, InfeasibleBlockError,
                  MpeLayout, PeState, block_cycles, configure_mpe,
                  layout_for_point, psu_stall_plan, simulate_block,
                  trace_block)
from .presets import LAYER_PRESETS
from .simulator import (ArrayRunStats, SimReport, SimulationError, Workload,
                        make_workload, run_mpe, write_trace_csv)
from .wqm import (RoundRobinArbiter, StealEvent, WorkItem, WorkQueue,
                  arbitrate, build_work_items, partition_workload,
                  select_victim, steal)

__version__ = "0.1.0"
