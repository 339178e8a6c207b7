"""Blocked matrix-multiply kernels shared by the simulator and the model.

Element data is float32 throughout. Accumulation over the inner dimension
runs in strictly ascending k order, so every code path that follows the
same order (in particular the array simulator) is bit-reproducible against
these kernels. A float64 accumulation mode is available on the reference
kernel for tolerance analysis.

Padding is logical: a tile at the ragged edge of the grid reads
out-of-range elements as zero instead of materialising padded copies of
the operands. Traffic accounting elsewhere still charges full padded
blocks, which is exactly what the transfer model assumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DTYPE = np.float32


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D float32 C-order array."""
    out = np.ascontiguousarray(a, dtype=DTYPE)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got {out.ndim} dims")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    return out


@dataclass(frozen=True)
class TileGrid:
    """Partition of an m x n result into block_rows x block_cols tiles.

    The inner dimension (depth) is never split: each tile covers the full
    reduction. Padded dimensions are the smallest multiples of the block
    sizes covering the problem.
    """

    m: int
    n: int
    depth: int
    block_rows: int
    block_cols: int
    grid_rows: int
    grid_cols: int
    padded_rows: int
    padded_cols: int

    @property
    def tile_count(self) -> int:
        return self.grid_rows * self.grid_cols

    def tile_coords(self, tile_id: int) -> tuple[int, int]:
        """Map a row-major tile id back to (tile_row, tile_col)."""
        return divmod(tile_id, self.grid_cols)

    def tile_id(self, tile_row: int, tile_col: int) -> int:
        return tile_row * self.grid_cols + tile_col


def partition(m: int, n: int, depth: int, block_rows: int, block_cols: int) -> TileGrid:
    """Split an (m, depth) x (depth, n) product into a tile grid.

    Raises ValueError for non-positive dimensions or block sizes.
    """
    for name, v in (("m", m), ("n", n), ("depth", depth),
                    ("block_rows", block_rows), ("block_cols", block_cols)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")
    grid_rows = -(-m // block_rows)
    grid_cols = -(-n // block_cols)
    return TileGrid(
        m=m, n=n, depth=depth,
        block_rows=block_rows, block_cols=block_cols,
        grid_rows=grid_rows, grid_cols=grid_cols,
        padded_rows=grid_rows * block_rows,
        padded_cols=grid_cols * block_cols,
    )


def transpose_a(a) -> np.ndarray:
    """Return the transpose as a fresh row-major array (an exact involution)."""
    return np.ascontiguousarray(as_matrix(a).T)


@dataclass(frozen=True)
class Tile:
    """One (tile_row, tile_col) task: a block_rows x depth slice of A against
    a depth x block_cols slice of B, with zero fill past the matrix edges."""

    grid: TileGrid
    tile_row: int
    tile_col: int
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if not (0 <= self.tile_row < self.grid.grid_rows):
            raise ValueError(f"tile_row {self.tile_row} outside grid")
        if not (0 <= self.tile_col < self.grid.grid_cols):
            raise ValueError(f"tile_col {self.tile_col} outside grid")

    def sa(self) -> np.ndarray:
        """Block of A: block_rows x depth, zero-filled below row m."""
        g = self.grid
        r0 = self.tile_row * g.block_rows
        r1 = min(r0 + g.block_rows, g.m)
        if r1 - r0 == g.block_rows:
            return self.a[r0:r1, :]
        out = np.zeros((g.block_rows, g.depth), DTYPE)
        out[: r1 - r0, :] = self.a[r0:r1, :]
        return out

    def sb(self) -> np.ndarray:
        """Block of B: depth x block_cols, zero-filled right of column n."""
        g = self.grid
        c0 = self.tile_col * g.block_cols
        c1 = min(c0 + g.block_cols, g.n)
        if c1 - c0 == g.block_cols:
            return self.b[:, c0:c1]
        out = np.zeros((g.depth, g.block_cols), DTYPE)
        out[:, : c1 - c0] = self.b[:, c0:c1]
        return out

    def column(self, k: int) -> np.ndarray:
        """k-th column of the A block (length block_rows)."""
        return self.sa()[:, k]

    def row(self, k: int) -> np.ndarray:
        """k-th row of the B block (length block_cols)."""
        return self.sb()[k, :]


def make_tile(grid: TileGrid, tile_row: int, tile_col: int, a, b) -> Tile:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != (grid.m, grid.depth):
        raise ValueError(f"a has shape {a.shape}, grid expects {(grid.m, grid.depth)}")
    if b.shape != (grid.depth, grid.n):
        raise ValueError(f"b has shape {b.shape}, grid expects {(grid.depth, grid.n)}")
    return Tile(grid, tile_row, tile_col, a, b)


def reference_gemm(a, b, accumulate: str = "f32") -> np.ndarray:
    """Reference product C[i, j] = sum_k A[i, k] * B[k, j], k ascending.

    This is the oracle every other multiply path is checked against. The
    sum is built as a sequence of rank-1 updates, one per k, so the
    rounding sequence per output element is fully determined. With
    accumulate="f64" the updates run in float64 (returned as float64) for
    use as a higher-precision yardstick.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape[1]} vs {b.shape[0]}")
    if accumulate == "f32":
        dt = np.float32
    elif accumulate == "f64":
        dt = np.float64
    else:
        raise ValueError(f"unknown accumulate mode {accumulate!r}")
    aa = a.astype(dt, copy=False)
    bb = b.astype(dt, copy=False)
    out = np.zeros((a.shape[0], b.shape[1]), dt)
    tmp = np.empty_like(out)
    for k in range(a.shape[1]):
        np.multiply.outer(aa[:, k], bb[k, :], out=tmp)
        np.add(out, tmp, out=out)
    return out


def tile_outer_accumulate(tile: Tile) -> np.ndarray:
    """Accumulate a tile as a sum of outer products, one per k.

    Iteration k adds (k-th column of the A block) x (k-th row of the B
    block) in float32. The result is bitwise reproducible and equals the
    corresponding sub-block of the reference product on padded inputs.
    """
    sa = tile.sa()
    sb = tile.sb()
    g = tile.grid
    out = np.zeros((g.block_rows, g.block_cols), DTYPE)
    tmp = np.empty_like(out)
    for k in range(g.depth):
        np.multiply.outer(sa[:, k], sb[k, :], out=tmp)
        np.add(out, tmp, out=out)
    return out


def multiply_blocked(a, b, grid: TileGrid) -> np.ndarray:
    """Full blocked product: run every tile, assemble, crop the padding.

    Functional (untimed) counterpart of what the array simulator computes;
    bitwise equal to reference_gemm(a, b) because the k order matches.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    out = np.zeros((grid.padded_rows, grid.padded_cols), DTYPE)
    for tid in range(grid.tile_count):
        i, j = grid.tile_coords(tid)
        tile = make_tile(grid, i, j, a, b)
        r0 = i * grid.block_rows
        c0 = j * grid.block_cols
        out[r0: r0 + grid.block_rows, c0: c0 + grid.block_cols] = tile_outer_accumulate(tile)
    return out[: grid.m, : grid.n]
