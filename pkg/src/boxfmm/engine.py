"""The four-stage evaluation engine and the direct-summation oracle.

evaluate() runs: distribute points into leaves, upward pass (anterpolate
sources onto leaf node grids, then merge child moments level by level),
far-field pass (per-offset translation of moments into local expansions
at every level), downward pass (push locals to children, then read them
off at the targets), and finally the near-field pass (direct kernel sums
over neighbor leaves).  All stages carry every weight column at once.

The implementation is array-based: a level's moments live in one
(8^level, p^3, nCols) array and cells are never objects.  Per-offset
batching keeps the inner loops inside BLAS/FFT calls.

With threads=1 the stage order, chunk boundaries, and accumulation order
are all fixed, so repeated runs are bitwise identical.  With more threads
each stage partitions its work into disjoint-output chunks (per-thread
accumulation buffers where outputs would overlap, summed in a fixed
order), which can differ from the single-thread result only by float
reassociation.  BLAS pools are pinned to one thread inside evaluate so
the engine's own threading is the only parallelism.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigurationError, DomainError, KernelEvaluationError
from .interpolation import (SchemeKind, child_transfer_matrices,
                            interp_matrix_3d)
from .kernel import KernelSpec
from .octree import Octree, decode_cells, encode_cells, neighbor_offsets
from .operators import (ChebyshevLevelBlock, M2LTable, offset_set,
                        precompute_m2l)
from .plan import FmmPlan

#: Target point count per vectorized chunk in the leaf-facing passes; the
#: actual buffer size scales with p^3 x nCols so this is divided down.
_CHUNK_DOUBLES = 4_000_000
#: Point-pair budget per near-field chunk.
_NEAR_CHUNK_PAIRS = 4_000_000
#: Column count at which the near field switches from one bincount pass
#: per column to one small matmul per leaf pair.
_NEAR_GEMM_MIN_COLS = 16


def _as_points(arr, name):
    pts = np.ascontiguousarray(arr, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ConfigurationError(f"{name} must be an (N, 3) array, got shape {np.shape(arr)}")
    if pts.size and not np.all(np.isfinite(pts)):
        raise DomainError(f"{name} contain non-finite coordinates")
    return pts


@dataclass
class _Partition:
    """Points of one set sorted by leaf cell, with segment bookkeeping."""

    perm: np.ndarray           # original index of each sorted row
    points: np.ndarray         # (N, 3) sorted by leaf
    leaves: np.ndarray         # nonempty leaf ids, ascending
    starts: np.ndarray         # segment start of each leaf in the sorted rows
    counts: np.ndarray
    grid: tuple                # decoded (ix, iy, iz) of the nonempty leaves

    @classmethod
    def build(cls, tree: Octree, points: np.ndarray) -> "_Partition":
        idx = tree.leaf_index(points) if len(points) else np.empty(0, np.int64)
        perm = np.argsort(idx, kind="stable")
        sorted_idx = idx[perm]
        leaves, starts, counts = np.unique(sorted_idx, return_index=True,
                                           return_counts=True)
        return cls(perm=perm, points=points[perm], leaves=leaves,
                   starts=starts, counts=counts,
                   grid=decode_cells(leaves, tree.levels))

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def segment_chunks(self, max_points: int):
        """Yield (seg_lo, seg_hi, row_lo, row_hi) covering whole leaves."""
        bounds = np.append(self.starts, self.n_points)
        a = 0
        while a < len(self.leaves):
            b = int(np.searchsorted(bounds, bounds[a] + max_points, side="right")) - 1
            b = min(max(b, a + 1), len(self.leaves))
            yield a, b, int(bounds[a]), int(bounds[b])
            a = b


def _lmul(mat, stack):
    """One GEMM for (a, b) @ (n, b, k) -> (n, a, k) stacks."""
    n, b, k = stack.shape
    flat = np.ascontiguousarray(stack.transpose(1, 0, 2)).reshape(b, n * k)
    out = mat @ flat
    return out.reshape(mat.shape[0], n, k).transpose(1, 0, 2)


def _pair_values(kernel: KernelSpec, p, q):
    """Kernel values for matched rows of two point arrays."""
    if kernel.profile is not None or kernel.diff_func is not None:
        return kernel.values_from_diffs(p[:, 0] - q[:, 0], p[:, 1] - q[:, 1],
                                        p[:, 2] - q[:, 2])
    out = np.empty(len(p))
    for i in range(len(p)):
        out[i] = kernel.pair_func(p[i], q[i])
    return out


def _run_jobs(worker, jobs, threads):
    """Run worker(job) over all jobs, in order when single-threaded."""
    if threads <= 1 or len(jobs) <= 1:
        for job in jobs:
            worker(job)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(worker, jobs))


class FmmEvaluator:
    """A plan bound to its octree, transfer matrices, and far-field table.

    Construction performs (or loads) all precomputation; evaluate() can
    then be called repeatedly with different point sets and weights, as
    long as the points stay inside the plan's domain box.
    """

    def __init__(self, kernel: KernelSpec, plan: FmmPlan, cache_dir=None,
                 threads: int = 1, table: M2LTable = None, use_cache: bool = True):
        if not isinstance(kernel, KernelSpec):
            raise ConfigurationError("kernel must be a KernelSpec")
        self.kernel = kernel
        self.plan = plan
        self.threads = max(1, int(threads))
        t0 = time.perf_counter()
        self.tree = Octree(plan.domain, plan.levels)
        self.transfers = child_transfer_matrices(plan.order, plan.scheme)
        self.tree_seconds = time.perf_counter() - t0
        t0 = time.perf_counter()
        if table is None:
            table = precompute_m2l(kernel, plan, cache_dir=cache_dir,
                                   threads=self.threads, use_cache=use_cache)
        self.table = table
        self.table_seconds = time.perf_counter() - t0
        self.precompute_seconds = self.tree_seconds + self.table_seconds
        self.timings = {}
        # Debug switch for the structure-sanity check: with the far field
        # off the answer must change, proving M2L actually contributes.
        self._disable_far_field = False

    # -- upward ---------------------------------------------------------

    def leaf_moments(self, part: _Partition, weights: np.ndarray) -> np.ndarray:
        """P2M: anterpolate sorted source weights onto leaf node grids."""
        p = self.plan.order
        p3 = p ** 3
        ncols = weights.shape[1]
        tree = self.tree
        moments = np.zeros((tree.n_cells(tree.levels), p3, ncols))
        if part.n_points == 0:
            return moments
        w_sorted = weights[part.perm]
        hw = tree.cell_half_width(tree.levels)
        chunk = max(512, _CHUNK_DOUBLES // p3)

        def worker(seg):
            a, b, lo, hi = seg
            leaf_ids = part.leaves[a:b]
            centers = tree.cell_centers(tree.levels, leaf_ids)
            ref = (part.points[lo:hi] - np.repeat(centers, part.counts[a:b], axis=0)) / hw
            self._check_reference(ref, lo, part)
            wm = interp_matrix_3d(ref, p, self.plan.scheme)
            rel = part.starts[a:b] - lo
            for c in range(ncols):
                moments[leaf_ids, :, c] = np.add.reduceat(
                    wm * w_sorted[lo:hi, c, None], rel, axis=0)

        _run_jobs(worker, list(part.segment_chunks(chunk)), self.threads)
        return moments

    def ascend(self, leaf_moments: np.ndarray) -> dict:
        """M2M: merge child moments into parents, leaf level up to level 2."""
        tree = self.tree
        levels = {tree.levels: leaf_moments}
        for lev in range(tree.levels, 2, -1):
            child = levels[lev]
            n_parent = tree.n_cells(lev - 1)
            parent = np.zeros((n_parent, child.shape[1], child.shape[2]))
            jobs = _slice_jobs(n_parent, self.threads)

            def worker(rng, child=child, parent=parent):
                s, e = rng
                for o in range(8):
                    parent[s:e] += _lmul(self.transfers[o], child[8 * s + o:8 * e:8])

            _run_jobs(worker, jobs, self.threads)
            levels[lev - 1] = parent
        return levels

    # -- far field ------------------------------------------------------

    def far_field_locals(self, moments: dict, ncols: int) -> dict:
        """M2L: translate every level's moments into local expansions."""
        tree = self.tree
        locals_ = {}
        for lev in range(2, tree.levels + 1):
            blk = self.table.block_for_level(lev)
            scale = self.table.scale_for_level(lev)
            if isinstance(blk, ChebyshevLevelBlock):
                locals_[lev] = self._m2l_level_chebyshev(lev, blk, scale, moments[lev])
            else:
                locals_[lev] = self._m2l_level_uniform(lev, blk, scale, moments[lev])
        return locals_

    def _level_pairs(self, lev):
        """(targets, sources) cell-index pairs for every far-field offset."""
        pairs = []
        for t in offset_set():
            pairs.append(self.tree.cell_pairs_for_offset(lev, t))
        return pairs

    def _m2l_level_chebyshev(self, lev, blk, scale, m_level):
        n, _, ncols = m_level.shape
        r = blk.rank
        # Rank-space moments in (r, cell, col) layout so each offset's
        # translation is a single dense GEMM over the gathered cells.
        z = _lmul(blk.v.T, m_level).transpose(1, 0, 2)
        z = np.ascontiguousarray(z)
        pairs = self._level_pairs(lev)
        jobs = _partition_indices(len(pairs), self.threads)
        bufs = [np.zeros((r, n, ncols)) for _ in jobs]

        def worker(wi):
            acc = bufs[wi]
            for j in jobs[wi]:
                tg, sr = pairs[j]
                if not len(tg):
                    continue
                sel = np.ascontiguousarray(z[:, sr]).reshape(r, -1)
                acc[:, tg] += (blk.cores[j] @ sel).reshape(r, len(tg), ncols)

        _run_jobs(lambda wi: worker(wi), range(len(jobs)), self.threads)
        acc = bufs[0]
        for extra in bufs[1:]:
            acc += extra
        out = (blk.u @ acc.reshape(r, n * ncols)).reshape(-1, n, ncols)
        out = np.ascontiguousarray(out.transpose(1, 0, 2))
        if scale != 1.0:
            out *= scale
        return out

    def _m2l_level_uniform(self, lev, blk, scale, m_level):
        p = self.plan.order
        q = 2 * p - 1
        n, p3, ncols = m_level.shape
        out = np.empty((n, p3, ncols))
        pairs = self._level_pairs(lev)
        jobs = _partition_indices(len(pairs), self.threads)
        # Transform size limits how many columns ride in one batch.
        per_col = n * q * q * (q // 2 + 1) * 16
        col_chunk = max(1, int(3e8 / max(per_col, 1)))
        for c0 in range(0, ncols, col_chunk):
            c1 = min(ncols, c0 + col_chunk)
            x = np.zeros((n * (c1 - c0), q, q, q))
            x[:, :p, :p, :p] = (m_level[:, :, c0:c1].transpose(0, 2, 1)
                                .reshape(-1, p, p, p))
            xh = np.fft.rfftn(x, axes=(1, 2, 3)).reshape(n, c1 - c0, q, q, -1)
            bufs = [np.zeros_like(xh) for _ in jobs]

            def worker(wi, xh=xh):
                acc = bufs[wi]
                for j in jobs[wi]:
                    tg, sr = pairs[j]
                    if len(tg):
                        acc[tg] += blk.symbols[j][None, None] * xh[sr]

            _run_jobs(lambda wi: worker(wi), range(len(jobs)), self.threads)
            yh = bufs[0]
            for extra in bufs[1:]:
                yh += extra
            y = np.fft.irfftn(yh.reshape(n * (c1 - c0), q, q, -1), s=(q, q, q),
                              axes=(1, 2, 3))[:, :p, :p, :p]
            out[:, :, c0:c1] = (y.reshape(n, c1 - c0, p3).transpose(0, 2, 1))
        if scale != 1.0:
            out *= scale
        return out

    # -- downward -------------------------------------------------------

    def descend(self, locals_: dict) -> np.ndarray:
        """L2L: push local expansions down; returns the leaf-level locals."""
        tree = self.tree
        for lev in range(2, tree.levels):
            parent = locals_[lev]
            child = locals_[lev + 1]
            jobs = _slice_jobs(parent.shape[0], self.threads)

            def worker(rng, parent=parent, child=child):
                s, e = rng
                for o in range(8):
                    child[8 * s + o:8 * e:8] += _lmul(self.transfers[o].T,
                                                      parent[s:e])

            _run_jobs(worker, jobs, self.threads)
        return locals_[tree.levels]

    def read_potentials(self, part: _Partition, leaf_locals: np.ndarray,
                        out: np.ndarray) -> None:
        """L2P: interpolate leaf locals at the (sorted) target points."""
        p = self.plan.order
        p3 = p ** 3
        ncols = leaf_locals.shape[2]
        tree = self.tree
        if part.n_points == 0:
            return
        hw = tree.cell_half_width(tree.levels)
        chunk = max(512, _CHUNK_DOUBLES // (p3 * ncols))

        def worker(seg):
            a, b, lo, hi = seg
            leaf_ids = part.leaves[a:b]
            centers = tree.cell_centers(tree.levels, leaf_ids)
            reps = part.counts[a:b]
            ref = (part.points[lo:hi] - np.repeat(centers, reps, axis=0)) / hw
            self._check_reference(ref, lo, part)
            wm = interp_matrix_3d(ref, p, self.plan.scheme)
            rows = np.repeat(np.arange(a, b), reps)
            vals = np.einsum("np,npc->nc", wm, leaf_locals[part.leaves[rows]])
            out[part.perm[lo:hi]] = vals

        _run_jobs(worker, list(part.segment_chunks(chunk)), self.threads)

    def _check_reference(self, ref, row_offset, part):
        if ref.size and np.max(np.abs(ref)) > 1.0 + 1e-9:
            i = int(np.argmax(np.max(np.abs(ref), axis=1)))
            raise DomainError(
                f"point {part.points[row_offset + i]} landed outside its leaf "
                "cell; the tree assignment is inconsistent")
        np.clip(ref, -1.0, 1.0, out=ref)

    # -- near field -----------------------------------------------------

    def near_field(self, tgt_part: _Partition, src_part: _Partition,
                   weights_sorted: np.ndarray, shared: bool,
                   out_sorted: np.ndarray) -> int:
        """Direct kernel sums over neighbor leaf pairs.

        When targets and sources are the same set and the kernel has a
        symmetry sign, each unordered leaf-pair class is evaluated once
        and replayed transposed.  Returns the number of point pairs.
        """
        tree = self.tree
        if tgt_part.n_points == 0 or src_part.n_points == 0:
            return 0
        use_transpose = shared and self.kernel.symmetry in (-1, 1)
        offsets = [tuple(t) for t in neighbor_offsets()]
        if use_transpose:
            offsets = [(0, 0, 0)] + [t for t in offsets if t > (0, 0, 0)]

        chunks = []
        for t in offsets:
            tseg, sseg = self._neighbor_segments(tgt_part, src_part, t)
            if not len(tseg):
                continue
            sizes = (tgt_part.counts[tseg] * src_part.counts[sseg]).astype(np.int64)
            cum = np.cumsum(sizes)
            a = 0
            while a < len(sizes):
                base = cum[a - 1] if a else 0
                b = int(np.searchsorted(cum, base + _NEAR_CHUNK_PAIRS, side="left")) + 1
                b = min(max(b, a + 1), len(sizes))
                chunks.append((t, tseg[a:b], sseg[a:b]))
                a = b

        groups = _partition_indices(len(chunks), self.threads)
        bufs = [out_sorted if i == 0 and self.threads <= 1 else np.zeros_like(out_sorted)
                for i in range(len(groups))]
        pair_count = np.zeros(len(groups), dtype=np.int64)

        def worker(wi):
            acc = bufs[wi]
            for ci in groups[wi]:
                t, tseg, sseg = chunks[ci]
                pair_count[wi] += self._near_chunk(
                    tgt_part, src_part, weights_sorted, t, tseg, sseg,
                    use_transpose, acc)

        _run_jobs(lambda wi: worker(wi), range(len(groups)), self.threads)
        if self.threads > 1 or len(groups) > 1:
            for buf in bufs[0 if self.threads > 1 else 1:]:
                if buf is not out_sorted:
                    out_sorted += buf
        return int(pair_count.sum())

    def _neighbor_segments(self, tgt_part, src_part, t):
        """Segment index pairs (into each partition) for offset t."""
        if not len(tgt_part.leaves) or not len(src_part.leaves):
            empty = np.empty(0, np.int64)
            return empty, empty
        ix, iy, iz = tgt_part.grid
        jx, jy, jz = ix + t[0], iy + t[1], iz + t[2]
        n = self.tree.grid_size(self.tree.levels)
        ok = ((jx >= 0) & (jx < n) & (jy >= 0) & (jy < n) & (jz >= 0) & (jz < n))
        if not ok.any():
            empty = np.empty(0, np.int64)
            return empty, empty
        src_ids = encode_cells(jx[ok], jy[ok], jz[ok])
        pos = np.searchsorted(src_part.leaves, src_ids)
        pos = np.minimum(pos, len(src_part.leaves) - 1)
        found = src_part.leaves[pos] == src_ids
        return np.nonzero(ok)[0][found], pos[found]

    def _near_chunk(self, tgt_part, src_part, weights_sorted, t, tseg, sseg,
                    use_transpose, acc):
        sizes = (tgt_part.counts[tseg] * src_part.counts[sseg]).astype(np.int64)
        total = int(sizes.sum())
        if total == 0:
            return 0
        pair_id = np.repeat(np.arange(len(sizes)), sizes)
        base = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        within = np.arange(total) - base[pair_id]
        sc = src_part.counts[sseg][pair_id]
        rows_t = tgt_part.starts[tseg][pair_id] + within // sc
        rows_s = src_part.starts[sseg][pair_id] + within % sc
        vals = _pair_values(self.kernel, tgt_part.points[rows_t],
                            src_part.points[rows_s])
        bad = ~np.isfinite(vals)
        if bad.any():
            i = int(np.argmax(bad))
            ti, si = int(tgt_part.perm[rows_t[i]]), int(src_part.perm[rows_s[i]])
            raise KernelEvaluationError(
                f"kernel {self.kernel.name!r} returned a non-finite value for "
                f"target {ti} and source {si}",
                x=tgt_part.points[rows_t[i]], y=src_part.points[rows_s[i]],
                indices=(ti, si))
        replay = use_transpose and t != (0, 0, 0)
        ncols = acc.shape[1]
        if ncols >= _NEAR_GEMM_MIN_COLS:
            self._near_accumulate_gemm(tgt_part, src_part, weights_sorted,
                                       tseg, sseg, sizes, vals, replay, acc)
        else:
            n_out = acc.shape[0]
            for c in range(ncols):
                acc[:, c] += np.bincount(rows_t, weights=vals * weights_sorted[rows_s, c],
                                         minlength=n_out)
            if replay:
                rvals = vals if self.kernel.symmetry == 1 else -vals
                for c in range(ncols):
                    acc[:, c] += np.bincount(rows_s, weights=rvals * weights_sorted[rows_t, c],
                                             minlength=n_out)
        return 2 * total if replay else total

    def _near_accumulate_gemm(self, tgt_part, src_part, weights_sorted,
                              tseg, sseg, sizes, vals, replay, acc):
        """Accumulate one chunk as dense leaf-pair blocks.

        Wide weight blocks amortize the per-pair call overhead, and a
        (tc x sc) @ (sc x ncols) product runs far ahead of ncols separate
        scatter passes over the same values.
        """
        sign = 1.0 if self.kernel.symmetry == 1 else -1.0
        tcs, scs = tgt_part.counts[tseg], src_part.counts[sseg]
        tst, sst = tgt_part.starts[tseg], src_part.starts[sseg]
        pos = 0
        for i in range(len(sizes)):
            tc, sc = int(tcs[i]), int(scs[i])
            block = vals[pos:pos + tc * sc].reshape(tc, sc)
            pos += tc * sc
            ta, sa = int(tst[i]), int(sst[i])
            acc[ta:ta + tc] += block @ weights_sorted[sa:sa + sc]
            if replay:
                acc[sa:sa + sc] += sign * (block.T @ weights_sorted[ta:ta + tc])

    # -- driver ---------------------------------------------------------

    def evaluate(self, sources, targets=None, weights=None) -> np.ndarray:
        """Potentials phi[i, c] = sum_j K(x_i, y_j) w[j, c], O(N) stages."""
        shared = targets is None or targets is sources
        src = _as_points(sources, "sources")
        tgt = src if shared else _as_points(targets, "targets")
        if weights is None:
            raise ConfigurationError("weights are required")
        w = np.ascontiguousarray(weights, dtype=np.float64)
        squeeze = w.ndim == 1
        if squeeze:
            w = w[:, None]
        if w.ndim != 2 or w.shape[0] != src.shape[0]:
            raise ConfigurationError(
                f"weights shape {np.shape(weights)} does not match {src.shape[0]} sources")
        if w.size and not np.all(np.isfinite(w)):
            raise ConfigurationError("weights contain non-finite values")

        timings = {}
        clock = time.perf_counter
        with threadpool_limits(limits=1):
            t0 = clock()
            src_part = _Partition.build(self.tree, src)
            tgt_part = src_part if shared else _Partition.build(self.tree, tgt)
            timings["distribute"] = clock() - t0

            ncols = w.shape[1]
            phi = np.zeros((tgt.shape[0], ncols))
            t0 = clock()
            moments = self.ascend(self.leaf_moments(src_part, w))
            # the P2M/M2M split is timed together; both touch every moment
            timings["upward"] = clock() - t0

            if not self._disable_far_field:
                t0 = clock()
                locals_ = self.far_field_locals(moments, ncols)
                timings["far_field"] = clock() - t0
                t0 = clock()
                leaf_locals = self.descend(locals_)
                self.read_potentials(tgt_part, leaf_locals, phi)
                timings["downward"] = clock() - t0
            else:
                timings["far_field"] = 0.0
                timings["downward"] = 0.0

            t0 = clock()
            near_sorted = np.zeros_like(phi)
            w_sorted = w[src_part.perm]
            pairs = self.near_field(tgt_part, src_part, w_sorted, shared, near_sorted)
            phi[tgt_part.perm] += near_sorted
            timings["near_field"] = clock() - t0
            timings["near_pairs"] = pairs
        timings["total"] = sum(v for k, v in timings.items()
                               if k not in ("near_pairs",))
        self.timings = timings
        return phi[:, 0] if squeeze else phi


def evaluate(kernel: KernelSpec, plan: FmmPlan, sources, targets=None,
             weights=None, cache_dir=None, threads: int = 1,
             table: M2LTable = None) -> np.ndarray:
    """One-shot convenience wrapper around FmmEvaluator."""
    ev = FmmEvaluator(kernel, plan, cache_dir=cache_dir, threads=threads,
                      table=table)
    return ev.evaluate(sources, targets, weights)


def _slice_jobs(n, threads):
    """Split range(n) into contiguous slices, one-ish per thread."""
    if threads <= 1 or n <= 1:
        return [(0, n)]
    k = min(threads, n)
    edges = np.linspace(0, n, k + 1, dtype=np.int64)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(k)]


def _partition_indices(n, threads):
    """Deal out range(n) round-robin into at most `threads` groups."""
    if threads <= 1 or n <= 1:
        return [list(range(n))]
    k = min(threads, n)
    return [list(range(i, n, k)) for i in range(k)]


def direct_evaluate(kernel: KernelSpec, sources, targets=None, weights=None,
                    target_block: int = 1024, source_block: int = 8192) -> np.ndarray:
    """O(N^2) reference sum, extended-precision block accumulation.

    When targets are the same array as sources, radial kernels use the
    |x|^2 + |y|^2 - 2 x.y distance identity inside a GEMM, with the
    self-pair diagonal zeroed exactly so singular kernels honor their
    r=0 convention.  Distinct target sets go through explicit coordinate
    differences instead: a target that happens to coincide with a source
    then produces an exact r=0 rather than a catastrophically cancelled
    near-zero.
    """
    shared = targets is None or targets is sources
    src = _as_points(sources, "sources")
    tgt = src if shared else _as_points(targets, "targets")
    if weights is None:
        raise ConfigurationError("weights are required")
    w = np.ascontiguousarray(weights, dtype=np.float64)
    squeeze = w.ndim == 1
    if squeeze:
        w = w[:, None]
    if w.shape[0] != src.shape[0]:
        raise ConfigurationError(
            f"weights shape {np.shape(weights)} does not match {src.shape[0]} sources")

    n_t, n_s, ncols = tgt.shape[0], src.shape[0], w.shape[1]
    out = np.zeros((n_t, ncols), dtype=np.longdouble)
    use_gemm = kernel.profile is not None and shared
    use_diffs = not use_gemm and (kernel.diff_func is not None
                                  or kernel.profile is not None)
    if use_gemm:
        src_sq = np.einsum("ij,ij->i", src, src)
        tgt_sq = np.einsum("ij,ij->i", tgt, tgt)

    for tb in range(0, n_t, target_block):
        te = min(n_t, tb + target_block)
        acc = np.zeros((te - tb, ncols), dtype=np.longdouble)
        for sb in range(0, n_s, source_block):
            se = min(n_s, sb + source_block)
            if use_gemm:
                r2 = tgt_sq[tb:te, None] + src_sq[None, sb:se]
                r2 -= 2.0 * (tgt[tb:te] @ src[sb:se].T)
                np.clip(r2, 0.0, None, out=r2)
                if shared:
                    lo, hi = max(tb, sb), min(te, se)
                    if lo < hi:
                        d = np.arange(lo, hi)
                        r2[d - tb, d - sb] = 0.0
                vals = kernel.profile(np.sqrt(r2))
            elif use_diffs:
                vals = kernel.values_from_diffs(
                    tgt[tb:te, 0, None] - src[None, sb:se, 0],
                    tgt[tb:te, 1, None] - src[None, sb:se, 1],
                    tgt[tb:te, 2, None] - src[None, sb:se, 2])
            else:
                vals = kernel.block(tgt[tb:te], src[sb:se])
            acc += vals @ w[sb:se]
        out[tb:te] = acc
    res = np.asarray(out, dtype=np.float64)
    return res[:, 0] if squeeze else res
