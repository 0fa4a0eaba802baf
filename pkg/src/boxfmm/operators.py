"""Far-field translation tables: build, compress, apply, persist.

The far-field pass multiplies each cell's outgoing node moments by a
translation matrix D_t[a, b] = K(target node a, source node b) where the
source cell sits at integer offset t (in cell widths) from the target.
Only 316 offsets occur (max-norm 2 or 3), so the tables are keyed by
offset, not by cell pair.  That sharing assumes the kernel is translation
invariant; all built-ins are.

Two storage strategies:

* Chebyshev: one orthonormal column basis U and row basis V are computed
  from the whole offset family at once (a blocked QR of the stacked
  matrices, then an SVD of the small triangular factor — exact, without
  ever materializing the 316 p^3 x p^3 stack), truncated at the relative
  singular-value cutoff eps.  Each offset then stores only its r x r core
  U^T D_t V.
* Uniform: D_t is nested-Toeplitz on the equispaced grid, so only the
  (2p-1)^3 distinct kernel values are stored; application is a padded FFT
  convolution.  No SVD is involved.

Kernels homogeneous of degree m get a single table built at unit cell
width; the apply path multiplies by width^m.  Symmetric (or antisymmetric)
kernels have D_{-t} = symmetry * D_t^T, so only half the offsets are
assembled densely.

Tables persist to a cache directory (argument, else $BOXFMM_CACHE_DIR,
else ~/.cache/boxfmm) as versioned little-endian binary files and are
rebuilt on any header mismatch.
"""

from __future__ import annotations

import hashlib
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from .errors import ConfigurationError, KernelEvaluationError
from .interpolation import SchemeKind, nodes_3d
from .kernel import KernelSpec
from .octree import interaction_offsets
from .plan import FmmPlan

_MAGIC = b"BFMMOPS1"
_VERSION = 1
_ENV_CACHE_DIR = "BOXFMM_CACHE_DIR"

_OFFSETS = interaction_offsets()
_OFFSETS.setflags(write=False)
_OFFSET_INDEX = {tuple(t): j for j, t in enumerate(_OFFSETS)}
#: index of -t for each offset t
_MIRROR = np.array([_OFFSET_INDEX[(-t[0], -t[1], -t[2])] for t in _OFFSETS])


def offset_set() -> np.ndarray:
    """The 316 far-field offsets, lexicographic; shared with the octree."""
    return _OFFSETS


def offset_index(t) -> int:
    try:
        return _OFFSET_INDEX[tuple(int(c) for c in t)]
    except KeyError:
        raise ConfigurationError(
            f"offset {tuple(t)} is not a far-field offset (max-norm must be 2 or 3)") from None


def dense_m2l(kernel: KernelSpec, offset, p: int, scheme: SchemeKind,
              width: float = 1.0) -> np.ndarray:
    """Uncompressed translation matrix for one offset at a given cell width."""
    half = 0.5 * width
    tnodes = nodes_3d(p, scheme, half_width=half)
    snodes = tnodes + np.asarray(offset, dtype=np.float64) * width
    d = kernel.block(tnodes, snodes)
    if not np.all(np.isfinite(d)):
        raise KernelEvaluationError(
            f"kernel {kernel.name!r} returned a non-finite value on the node "
            f"grid at offset {tuple(int(c) for c in offset)}")
    return d


def uniform_difference_grid(kernel: KernelSpec, offset, p: int,
                            width: float = 1.0) -> np.ndarray:
    """Kernel values on the wrapped (2p-1)^3 node-difference grid.

    Index m < p holds difference m, index m >= p holds m - (2p-1), i.e. the
    negative differences wrapped to the tail — the circulant layout the FFT
    apply path expects.
    """
    q = 2 * p - 1
    d = np.arange(q)
    d = np.where(d < p, d, d - q).astype(np.float64)
    spacing = width / max(p - 1, 1)
    ux = spacing * d - offset[0] * width
    uy = spacing * d - offset[1] * width
    uz = spacing * d - offset[2] * width
    vals = kernel.values_from_diffs(ux[:, None, None], uy[None, :, None], uz[None, None, :])
    if not np.all(np.isfinite(vals)):
        raise KernelEvaluationError(
            f"kernel {kernel.name!r} returned a non-finite value on the "
            f"difference grid at offset {tuple(int(c) for c in offset)}")
    return vals


def toeplitz_apply(symbol: np.ndarray, m: np.ndarray, p: int) -> np.ndarray:
    """Multiply by a nested-Toeplitz M2L matrix through its FFT symbol.

    ``m`` may be (p^3,), (p^3, k), or batched (B, p^3, k); the result has
    the same shape.
    """
    q = 2 * p - 1
    arr = np.asarray(m, dtype=np.float64)
    vec = arr.ndim == 1
    if vec:
        arr = arr[:, None]
    batched = arr.ndim == 3
    if not batched:
        arr = arr[None]
    nb, p3, k = arr.shape
    x = np.zeros((nb * k, q, q, q))
    x[:, :p, :p, :p] = arr.transpose(0, 2, 1).reshape(nb * k, p, p, p)
    xh = np.fft.rfftn(x, axes=(1, 2, 3))
    y = np.fft.irfftn(xh * symbol[None], s=(q, q, q), axes=(1, 2, 3))
    out = y[:, :p, :p, :p].reshape(nb, k, p3).transpose(0, 2, 1)
    if not batched:
        out = out[0]
    if vec:
        out = out[:, 0]
    return np.ascontiguousarray(out)


@dataclass
class ChebyshevLevelBlock:
    width: float
    u: np.ndarray       # (p^3, r) orthonormal columns
    v: np.ndarray       # (p^3, r); the same array as u for symmetric kernels
    cores: np.ndarray   # (316, r, r)

    @property
    def rank(self) -> int:
        return self.u.shape[1]


@dataclass
class UniformLevelBlock:
    width: float
    grids: np.ndarray    # (316, q, q, q) kernel values, the persisted form
    symbols: np.ndarray  # (316, q, q, q//2+1) complex, derived from grids

    @staticmethod
    def from_grids(width, grids):
        return UniformLevelBlock(width=width, grids=grids,
                                 symbols=np.fft.rfftn(grids, axes=(1, 2, 3)))


@dataclass
class M2LTable:
    """Compressed far-field operators for one (kernel, plan) pairing.

    ``blocks`` maps tree level -> level block for per-level storage, or
    holds the single key 0 (reference cell of unit width) when a
    homogeneous kernel allows one-level storage.
    """

    kernel_name: str
    order: int
    scheme: SchemeKind
    eps: float
    levels: int
    homogen: float
    symmetry: int
    domain_length: float
    single_level: bool
    blocks: Dict[int, Union[ChebyshevLevelBlock, UniformLevelBlock]]

    def block_for_level(self, level: int):
        if not (2 <= level <= self.levels):
            raise ConfigurationError(
                f"level {level} outside this table's range [2, {self.levels}]")
        return self.blocks[0] if self.single_level else self.blocks[level]

    def scale_for_level(self, level: int) -> float:
        if not self.single_level:
            return 1.0
        width = self.domain_length / 2 ** level
        return width ** self.homogen  # exact for power-of-two widths

    def dense(self, offset, level: int) -> np.ndarray:
        """Reconstructed dense D_t at a level (testing/diagnostics)."""
        j = offset_index(offset)
        blk = self.block_for_level(level)
        scale = self.scale_for_level(level)
        if isinstance(blk, ChebyshevLevelBlock):
            return scale * (blk.u @ blk.cores[j] @ blk.v.T)
        p = self.order
        return scale * toeplitz_apply(blk.symbols[j], np.eye(p ** 3), p)

    def nbytes(self) -> int:
        """Bytes of the arrays the apply path actually touches."""
        total = 0
        for blk in self.blocks.values():
            if isinstance(blk, ChebyshevLevelBlock):
                total += blk.u.nbytes + blk.cores.nbytes
                if blk.v is not blk.u:
                    total += blk.v.nbytes
            else:
                total += blk.symbols.nbytes
        return total


def apply_m2l(table: M2LTable, offset, level: int, m: np.ndarray) -> np.ndarray:
    """Local-expansion increment D_t @ m for one offset at one level.

    Accepts a single cell's moments (p^3 or p^3 x nCols) or a batch
    (B x p^3 x nCols).
    """
    j = offset_index(offset)
    blk = table.block_for_level(level)
    scale = table.scale_for_level(level)
    if isinstance(blk, ChebyshevLevelBlock):
        arr = np.asarray(m, dtype=np.float64)
        vec = arr.ndim == 1
        z = blk.v.T @ (arr[:, None] if vec else arr)
        out = blk.u @ (blk.cores[j] @ z)
        if scale != 1.0:
            out = out * scale
        return out[:, 0] if vec else out
    out = toeplitz_apply(blk.symbols[j], m, table.order)
    if scale != 1.0:
        out *= scale
    return out


def _positive(t) -> bool:
    return tuple(t) > (0, 0, 0)


def _dense_family(kernel, p, scheme, width, threads):
    """Dense D_t for the offsets that must be assembled (half when the
    symmetry flag lets mirrors come from transposes), as {index: matrix}."""
    if kernel.symmetry in (-1, 1):
        build = [j for j in range(len(_OFFSETS)) if _positive(_OFFSETS[j])]
    else:
        build = list(range(len(_OFFSETS)))

    def one(j):
        return j, dense_m2l(kernel, _OFFSETS[j], p, scheme, width)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return dict(pool.map(one, build))
    return dict(one(j) for j in build)


def _family_block(mats, kernel, j):
    """D_t for any offset index, using the transpose of the mirrored
    offset when only half the family was assembled."""
    if j in mats:
        return mats[j]
    return kernel.symmetry * mats[_MIRROR[j]].T


def _stack_singular_basis(blocks, p3):
    """Right singular vectors and values of a tall stack of blocks.

    Feeds the blocks through a running QR so only a p^3 x p^3 triangular
    factor is ever resident; the factor's SVD has exactly the stack's
    singular values, so a cutoff on them behaves as if the full stack had
    been decomposed.
    """
    r = None
    buf = []
    rows = 0
    flush_rows = max(4 * p3, 2048)
    for blk in blocks:
        buf.append(blk)
        rows += blk.shape[0]
        if rows >= flush_rows:
            pieces = ([r] if r is not None else []) + buf
            r = np.linalg.qr(np.vstack(pieces), mode="r")
            buf = []
            rows = 0
    if buf or r is None:
        pieces = ([r] if r is not None else []) + buf
        r = np.linalg.qr(np.vstack(pieces), mode="r")
    _, s, vt = np.linalg.svd(r, full_matrices=False)
    return vt, s


def _rank_cut(s, eps):
    return max(1, int(np.count_nonzero(s >= eps * s[0])))


def _build_chebyshev_block(kernel, p, scheme, width, eps, threads):
    p3 = p ** 3
    mats = _dense_family(kernel, p, scheme, width, threads)
    # U spans the columns of every D_t: right-basis of the stacked transposes.
    vt_u, s_u = _stack_singular_basis(
        (_family_block(mats, kernel, j).T for j in range(len(_OFFSETS))), p3)
    if kernel.symmetry in (-1, 1):
        # The stacked-D_t and stacked-D_t^T families coincide, so the row
        # basis is the same subspace; sharing the array keeps the
        # mirror-core identity C_{-t} = s * C_t^T exact.
        rank = _rank_cut(s_u, eps)
        u = np.ascontiguousarray(vt_u[:rank].T)
        v = u
    else:
        vt_v, s_v = _stack_singular_basis(
            (_family_block(mats, kernel, j) for j in range(len(_OFFSETS))), p3)
        # Square cores need equally wide bases; the extra singular vectors
        # on the smaller side are still exact, just below the cutoff.
        rank = max(_rank_cut(s_u, eps), _rank_cut(s_v, eps))
        u = np.ascontiguousarray(vt_u[:rank].T)
        v = np.ascontiguousarray(vt_v[:rank].T)
    cores = np.empty((len(_OFFSETS), rank, rank))
    if kernel.symmetry in (-1, 1):
        for j, d in mats.items():
            cores[j] = u.T @ d @ u
            cores[_MIRROR[j]] = kernel.symmetry * cores[j].T
    else:
        for j in range(len(_OFFSETS)):
            cores[j] = u.T @ _family_block(mats, kernel, j) @ v
    return ChebyshevLevelBlock(width=width, u=u, v=v, cores=cores)


def _build_uniform_block(kernel, p, width, threads):
    def one(j):
        return uniform_difference_grid(kernel, _OFFSETS[j], p, width)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grids = np.stack(list(pool.map(one, range(len(_OFFSETS)))))
    else:
        grids = np.stack([one(j) for j in range(len(_OFFSETS))])
    return UniformLevelBlock.from_grids(width, grids)


def precompute_m2l(kernel: KernelSpec, plan: FmmPlan, cache_dir=None,
                   threads: int = 1, force_per_level: bool = False,
                   use_cache: bool = True) -> M2LTable:
    """Build (or load from cache) the far-field tables for a plan."""
    single = kernel.is_homogeneous and not force_per_level
    if plan.scheme is SchemeKind.UNIFORM and kernel.profile is None and kernel.diff_func is None:
        raise ConfigurationError(
            f"kernel {kernel.name!r} has no difference-form evaluation; the "
            "uniform scheme needs one (use the Chebyshev scheme instead)")

    path = None
    if use_cache:
        path = _cache_path(kernel, plan, single, cache_dir)
        cached = _load_table(path, kernel, plan, single)
        if cached is not None:
            return cached

    if single:
        widths = {0: 1.0}
    else:
        widths = {lev: plan.cell_width(lev) for lev in range(2, plan.levels + 1)}
    blocks = {}
    for lev, width in widths.items():
        if plan.scheme is SchemeKind.CHEBYSHEV:
            blocks[lev] = _build_chebyshev_block(kernel, plan.order, plan.scheme,
                                                 width, plan.eps, threads)
        else:
            blocks[lev] = _build_uniform_block(kernel, plan.order, width, threads)
    table = M2LTable(kernel_name=kernel.name, order=plan.order, scheme=plan.scheme,
                     eps=plan.eps, levels=plan.levels, homogen=kernel.homogen,
                     symmetry=kernel.symmetry, domain_length=plan.domain_length,
                     single_level=single, blocks=blocks)
    if path is not None:
        _save_table(path, table)
    return table


# ---------------------------------------------------------------------------
# persistence

def resolve_cache_dir(cache_dir=None) -> Path:
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get(_ENV_CACHE_DIR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "boxfmm"


def _name_hash(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


_HEADER = struct.Struct("<8sIQBBIIdddb")


def _cache_path(kernel, plan, single, cache_dir) -> Path:
    tag = "ref" if single else f"len{plan.domain_length:.9g}"
    fname = (f"m2l_{kernel.name}_{plan.scheme.value}_p{plan.order}"
             f"_L{plan.levels}_e{plan.eps:.3e}_{tag}.bin")
    return resolve_cache_dir(cache_dir) / fname


def _header_bytes(table: M2LTable) -> bytes:
    # Single-level tables are scale-free (the reference cell has unit
    # width), so the key stores a 0.0 sentinel and any domain reuses them.
    return _HEADER.pack(
        _MAGIC, _VERSION, _name_hash(table.kernel_name),
        0 if table.scheme is SchemeKind.CHEBYSHEV else 1,
        1 if table.single_level else 0,
        table.order, table.levels, table.eps, table.homogen,
        0.0 if table.single_level else table.domain_length, table.symmetry)


def _save_table(path: Path, table: M2LTable) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_header_bytes(table))
        f.write(struct.pack("<I", len(table.blocks)))
        for lev in sorted(table.blocks):
            blk = table.blocks[lev]
            f.write(struct.pack("<id", lev, blk.width))
            if isinstance(blk, ChebyshevLevelBlock):
                f.write(struct.pack("<IB", blk.rank, 1 if blk.v is blk.u else 0))
                f.write(np.ascontiguousarray(blk.u, dtype="<f8").tobytes())
                if blk.v is not blk.u:
                    f.write(np.ascontiguousarray(blk.v, dtype="<f8").tobytes())
                f.write(np.ascontiguousarray(blk.cores, dtype="<f8").tobytes())
            else:
                f.write(struct.pack("<I", blk.grids.shape[1]))
                f.write(np.ascontiguousarray(blk.grids, dtype="<f8").tobytes())
    os.replace(tmp, path)


def _load_table(path: Path, kernel, plan, single) -> Optional[M2LTable]:
    """Read a cached table; any mismatch or truncation returns None."""
    try:
        data = path.read_bytes()
    except OSError:
        return None
    try:
        expect = _HEADER.pack(
            _MAGIC, _VERSION, _name_hash(kernel.name),
            0 if plan.scheme is SchemeKind.CHEBYSHEV else 1,
            1 if single else 0, plan.order, plan.levels, plan.eps,
            kernel.homogen, 0.0 if single else plan.domain_length,
            kernel.symmetry)
        if data[:_HEADER.size] != expect:
            return None
        pos = _HEADER.size
        (nblocks,) = struct.unpack_from("<I", data, pos)
        pos += 4
        p3 = plan.order ** 3
        blocks = {}
        for _ in range(nblocks):
            lev, width = struct.unpack_from("<id", data, pos)
            pos += 12
            if plan.scheme is SchemeKind.CHEBYSHEV:
                rank, shared = struct.unpack_from("<IB", data, pos)
                pos += 5
                u = np.frombuffer(data, "<f8", p3 * rank, pos).reshape(p3, rank).copy()
                pos += 8 * p3 * rank
                if shared:
                    v = u
                else:
                    v = np.frombuffer(data, "<f8", p3 * rank, pos).reshape(p3, rank).copy()
                    pos += 8 * p3 * rank
                n = len(_OFFSETS) * rank * rank
                cores = np.frombuffer(data, "<f8", n, pos).reshape(len(_OFFSETS), rank, rank).copy()
                pos += 8 * n
                blocks[lev] = ChebyshevLevelBlock(width=width, u=u, v=v, cores=cores)
            else:
                (q,) = struct.unpack_from("<I", data, pos)
                pos += 4
                n = len(_OFFSETS) * q ** 3
                grids = np.frombuffer(data, "<f8", n, pos).reshape(len(_OFFSETS), q, q, q).copy()
                pos += 8 * n
                blocks[lev] = UniformLevelBlock.from_grids(width, grids)
        if pos != len(data):
            return None
    except (struct.error, ValueError):
        return None
    return M2LTable(kernel_name=kernel.name, order=plan.order, scheme=plan.scheme,
                    eps=plan.eps, levels=plan.levels, homogen=kernel.homogen,
                    symmetry=kernel.symmetry, domain_length=plan.domain_length,
                    single_level=single, blocks=blocks)
