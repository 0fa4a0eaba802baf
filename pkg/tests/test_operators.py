import numpy as np
import pytest

import boxfmm.operators as ops
from boxfmm.errors import ConfigurationError
from boxfmm.interpolation import SchemeKind
from boxfmm.kernel import EXPONENTIAL, GAUSSIAN, LAPLACIAN, KernelSpec
from boxfmm.plan import FmmPlan


def _random_offsets(count, seed):
    gen = np.random.default_rng(seed)
    all_offsets = ops.offset_set()
    picks = gen.choice(len(all_offsets), size=count, replace=False)
    return [tuple(all_offsets[i]) for i in picks]


def test_offset_set_is_deterministic_and_indexable():
    offsets = ops.offset_set()
    assert offsets.shape == (316, 3)
    again = ops.offset_set()
    assert np.array_equal(offsets, again)
    for j in (0, 100, 315):
        assert ops.offset_index(tuple(offsets[j])) == j
    with pytest.raises(ConfigurationError):
        ops.offset_index((1, 0, 0))
    with pytest.raises(ConfigurationError):
        ops.offset_index((4, 0, 0))


def test_dense_m2l_order_one_is_center_value():
    width = 0.25
    t = (3, -2, 2)
    block = ops.dense_m2l(LAPLACIAN, t, 1, SchemeKind.CHEBYSHEV, width=width)
    assert block.shape == (1, 1)
    r = width * np.linalg.norm(t)
    assert block[0, 0] == pytest.approx(1.0 / r, rel=1e-14)


def test_dense_m2l_matches_pointwise_kernel():
    from boxfmm.interpolation import nodes_3d
    p = 3
    t = (0, 2, -2)
    block = ops.dense_m2l(EXPONENTIAL, t, p, SchemeKind.UNIFORM, width=0.5)
    tgt = nodes_3d(p, SchemeKind.UNIFORM, half_width=0.25)
    src = tgt + 0.5 * np.asarray(t)
    a, b = 7, 19
    r = np.linalg.norm(tgt[a] - src[b])
    assert block[a, b] == pytest.approx(np.exp(-r), rel=1e-14)


@pytest.mark.parametrize("p", [3, 5])
def test_uniform_fft_apply_equals_dense(p, cache_dir):
    """The circulant-embedding route and the dense product must agree to
    near machine precision; this is structure, not approximation."""
    plan = FmmPlan(levels=3, order=p, scheme=SchemeKind.UNIFORM, eps=1e-6)
    table = ops.precompute_m2l(EXPONENTIAL, plan, cache_dir=cache_dir)
    gen = np.random.default_rng(p)
    m = gen.standard_normal((p ** 3, 2))
    for t in _random_offsets(20, seed=p):
        dense = ops.dense_m2l(EXPONENTIAL, t, p, SchemeKind.UNIFORM,
                              width=plan.cell_width(3))
        want = dense @ m
        got = ops.apply_m2l(table, t, 3, m)
        rel = np.linalg.norm(got - want) / np.linalg.norm(want)
        assert rel < 1e-9, (t, rel)


def test_chebyshev_apply_within_compression_tolerance(cache_dir):
    eps = 1e-6
    plan = FmmPlan(levels=3, order=4, scheme=SchemeKind.CHEBYSHEV, eps=eps)
    table = ops.precompute_m2l(GAUSSIAN, plan, cache_dir=cache_dir)
    gen = np.random.default_rng(3)
    m = gen.standard_normal((64, 3))
    worst = 0.0
    for t in _random_offsets(20, seed=11):
        dense = ops.dense_m2l(GAUSSIAN, t, 4, SchemeKind.CHEBYSHEV,
                              width=plan.cell_width(3))
        got = ops.apply_m2l(table, t, 3, m)
        err = np.linalg.norm(got - dense @ m) / max(np.linalg.norm(dense @ m), 1e-300)
        worst = max(worst, err)
    assert worst < 10 * eps, worst


def test_symmetric_blocks_mirror_by_transpose(cache_dir):
    plan = FmmPlan(levels=2, order=3, scheme=SchemeKind.CHEBYSHEV, eps=1e-7)
    table = ops.precompute_m2l(LAPLACIAN, plan, cache_dir=cache_dir)
    for t in [(2, 0, 0), (3, -1, 2), (-2, 3, 1)]:
        d_pos = table.dense(t, 2)
        d_neg = table.dense(tuple(-c for c in t), 2)
        assert np.max(np.abs(d_neg - d_pos.T)) < 1e-12


def test_antisymmetric_kernel_builds_and_mirrors(cache_dir):
    # x-dipole: odd under swapping source and target
    def dipole(dx, dy, dz):
        r2 = dx * dx + dy * dy + dz * dz
        with np.errstate(divide="ignore", invalid="ignore"):
            v = dx / (r2 * np.sqrt(r2))
        return np.where(r2 == 0, 0.0, v)

    kernel = KernelSpec(name="xdipole", diff_func=dipole, symmetry=-1,
                        homogen=-2.0)
    plan = FmmPlan(levels=2, order=3, scheme=SchemeKind.CHEBYSHEV, eps=1e-7)
    table = ops.precompute_m2l(kernel, plan, cache_dir=cache_dir)
    gen = np.random.default_rng(0)
    m = gen.standard_normal((27, 1))
    for t in [(3, 0, 0), (2, -2, 1)]:
        dense = ops.dense_m2l(kernel, t, 3, SchemeKind.CHEBYSHEV,
                              width=plan.cell_width(2))
        got = ops.apply_m2l(table, t, 2, m)
        rel = np.linalg.norm(got - dense @ m) / np.linalg.norm(dense @ m)
        assert rel < 1e-5
        d_pos = table.dense(t, 2)
        d_neg = table.dense(tuple(-c for c in t), 2)
        assert np.max(np.abs(d_neg + d_pos.T)) < 1e-11


def test_homogeneous_single_level_scaling(cache_dir):
    """1/r tables at consecutive levels differ by exactly the factor 2."""
    plan = FmmPlan(levels=4, order=3, scheme=SchemeKind.CHEBYSHEV, eps=1e-7)
    table = ops.precompute_m2l(LAPLACIAN, plan, cache_dir=cache_dir)
    assert table.single_level
    t = (2, 1, -2)
    d3 = table.dense(t, 3)
    d4 = table.dense(t, 4)
    assert np.allclose(d4, 2.0 * d3, rtol=0, atol=1e-13 * np.abs(d3).max())

    per_level = ops.precompute_m2l(LAPLACIAN, plan, cache_dir=cache_dir,
                                   force_per_level=True)
    assert not per_level.single_level
    gen = np.random.default_rng(5)
    m = gen.standard_normal((27, 2))
    for lev in (2, 3, 4):
        a = ops.apply_m2l(table, t, lev, m)
        b = ops.apply_m2l(per_level, t, lev, m)
        assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-12


def test_inhomogeneous_kernel_gets_per_level_blocks(cache_dir):
    plan = FmmPlan(levels=3, order=2, scheme=SchemeKind.UNIFORM, eps=1e-6)
    table = ops.precompute_m2l(EXPONENTIAL, plan, cache_dir=cache_dir)
    assert not table.single_level
    assert set(table.blocks) == {2, 3}


def test_cache_round_trip_bitwise(tmp_path):
    plan = FmmPlan(levels=2, order=3, scheme=SchemeKind.CHEBYSHEV, eps=1e-6)
    built = ops.precompute_m2l(EXPONENTIAL, plan, cache_dir=str(tmp_path))
    loaded = ops.precompute_m2l(EXPONENTIAL, plan, cache_dir=str(tmp_path))
    blk_a = built.block_for_level(2)
    blk_b = loaded.block_for_level(2)
    assert np.array_equal(blk_a.u, blk_b.u)
    assert np.array_equal(blk_a.cores, blk_b.cores)


def test_cache_ignores_corrupt_file(tmp_path):
    plan = FmmPlan(levels=2, order=2, scheme=SchemeKind.UNIFORM, eps=1e-6)
    ops.precompute_m2l(EXPONENTIAL, plan, cache_dir=str(tmp_path))
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    files[0].write_bytes(files[0].read_bytes()[:40])  # truncate
    table = ops.precompute_m2l(EXPONENTIAL, plan, cache_dir=str(tmp_path))
    assert table.block_for_level(2).symbols is not None


def test_cache_key_separates_eps(tmp_path):
    plan_a = FmmPlan(levels=2, order=2, eps=1e-5)
    plan_b = FmmPlan(levels=2, order=2, eps=1e-7)
    ops.precompute_m2l(EXPONENTIAL, plan_a, cache_dir=str(tmp_path))
    ops.precompute_m2l(EXPONENTIAL, plan_b, cache_dir=str(tmp_path))
    assert len(list(tmp_path.iterdir())) == 2


def test_homogeneous_cache_shared_across_domains(tmp_path):
    small = FmmPlan(levels=3, order=2, domain_length=1.0)
    big = FmmPlan(levels=3, order=2, domain_length=4.0,
                  domain_center=(10.0, 0.0, 0.0))
    ta = ops.precompute_m2l(LAPLACIAN, small, cache_dir=str(tmp_path))
    tb = ops.precompute_m2l(LAPLACIAN, big, cache_dir=str(tmp_path))
    assert len(list(tmp_path.iterdir())) == 1, "one reference table on disk"
    # same reference blocks, different level scaling
    assert ta.scale_for_level(3) == pytest.approx(4.0 * tb.scale_for_level(3))


def test_toeplitz_apply_batches_match_loop():
    p = 3
    gen = np.random.default_rng(9)
    grid = gen.standard_normal((2 * p - 1,) * 3)
    symbol = np.fft.rfftn(grid)
    m = gen.standard_normal((4, p ** 3, 2))
    batched = ops.toeplitz_apply(symbol, m, p)
    for b in range(4):
        single = ops.toeplitz_apply(symbol, m[b], p)
        assert np.array_equal(batched[b], single)
    zeros = ops.toeplitz_apply(symbol, np.zeros(p ** 3), p)
    assert np.all(zeros == 0)


def test_uniform_rejects_pairwise_only_kernels(cache_dir):
    kernel = KernelSpec(name="pairy", pair_func=lambda x, y: 1.0)
    plan = FmmPlan(levels=2, order=2, scheme=SchemeKind.UNIFORM)
    with pytest.raises(ConfigurationError):
        ops.precompute_m2l(kernel, plan, cache_dir=cache_dir, use_cache=False)


def test_table_nbytes_reports_payload(cache_dir):
    plan = FmmPlan(levels=2, order=3, scheme=SchemeKind.CHEBYSHEV, eps=1e-6)
    table = ops.precompute_m2l(EXPONENTIAL, plan, cache_dir=cache_dir)
    blk = table.block_for_level(2)
    expect = blk.u.nbytes + blk.cores.nbytes  # symmetric kernel shares u=v
    assert table.nbytes() == expect
