import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcmschwarz.blocks import (
    Block, BlockSet, filter_blocks, full_blocks, singleton_blocks, truncated_blocks, truncated_selection,
)
from fcmschwarz.geometry import AllSpace, Ball, HalfSpace, ImplicitDomain, gauss_box
from fcmschwarz.mesh import boundary_region, box_region, build_base_mesh, enumerate_dofs, point_region
from fcmschwarz.assembly import eta_table


def _dofmap(counts, p, region=None, k=0, domain=None, n_fields=1):
    d = len(counts)
    dom = domain or ImplicitDomain(AllSpace())
    m = build_base_mesh(([0.0] * d, [1.0] * d), counts)
    if region is not None:
        m.refine_toward(region, k)
    m.classify(dom)
    return enumerate_dofs(m, p, n_fields)


def _same(a, b):
    return [list(x.indices) for x in a] == [list(x.indices) for x in b]


def test_block_invariants():
    with pytest.raises(ValueError):
        Block([])
    with pytest.raises(ValueError):
        Block([2, 1])
    with pytest.raises(ValueError):
        BlockSet([Block([0, 5])], 5)


def test_unrefined_full_equals_truncated():
    dm = _dofmap([3, 2], 3, n_fields=2)
    fb, tb = full_blocks(dm), truncated_blocks(dm)
    assert all(len(b) == 2 * 16 for b in fb)
    assert _same(fb, tb)


def test_single_element_block_is_everything():
    dm = _dofmap([1, 1], 2)
    fb = full_blocks(dm)
    assert len(fb) == 1 and list(fb.blocks[0].indices) == list(range(dm.n))


def _fig3():
    return _dofmap([3], 3, point_region((1.9 / 3,)), 2)


def test_fig3_full_block_holds_multiple_hats():
    dm = _fig3()
    leaf = max(dm.supports, key=lambda l: (l[0], -l[1][0]))
    assert len(full_blocks(dm).blocks[list(dm.supports).index(leaf)]) > dm.p + 1


def test_fig3_truncated_block_one_fine_one_coarse_hat():
    dm = _fig3()
    for leaf in dm.supports:
        sel = truncated_selection(dm, leaf)
        assert len(sel) == dm.p + 1
        hats = [dm.keys[i] for i in sel if dm.keys[i][2] == (0,)]
        assert len(hats) == 2
        internal = [dm.keys[i] for i in sel if dm.keys[i][2] != (0,)]
        assert all(k[0] == leaf[0] for k in internal) and len(internal) == dm.p - 1
    # the leftmost level-2 leaf sits on the overlay boundary: one hat is coarser
    deep = sorted(l for l in dm.supports if l[0] == 2)[0]
    levels = sorted(dm.keys[i][0] for i in truncated_selection(dm, deep) if dm.keys[i][2] == (0,))
    assert levels[0] < 2 and levels[1] == 2


def _span_residual(dm, leaf, sel):
    m = dm.mesh
    lo, hi = m.bounds(*leaf)
    x, _ = gauss_box(lo, hi, dm.p + 2)
    ids, N = dm.evaluate_on_leaf(leaf, x, derivs=False)
    pos = {int(i): j for j, i in enumerate(ids)}
    B = N[:, [pos[int(i)] for i in sel]]
    worst = 0.0
    d = m.d
    import itertools

    for e in itertools.product(range(dm.p + 1), repeat=d):
        f = np.prod([((x[:, a] - lo[a]) / (hi[a] - lo[a])) ** e[a] for a in range(d)], axis=0)
        c, *_ = np.linalg.lstsq(B, f, rcond=None)
        worst = max(worst, np.abs(B @ c - f).max())
    return worst


def test_truncated_span_1d():
    dm = _fig3()
    for leaf in dm.supports:
        assert _span_residual(dm, leaf, truncated_selection(dm, leaf)) < 1e-9


def test_truncated_span_on_complete_leaves_2d():
    dm = _dofmap([4, 4], 2, box_region((0.2, 0.2), (0.8, 0.7)), 2)
    full_size = (dm.p + 1) ** 2
    complete = 0
    for leaf in dm.supports:
        sel = truncated_selection(dm, leaf)
        assert len(sel) <= full_size
        if len(sel) == full_size:
            complete += 1
            assert _span_residual(dm, leaf, sel) < 1e-9
    assert complete > len(dm.supports) // 3


@pytest.mark.parametrize("d,k", [(1, 3), (2, 3), (3, 2)])
def test_truncated_overlap_bound(d, k):
    dom = ImplicitDomain(~Ball((0.5,) * d, 0.15))
    dm = _dofmap([2] * d, 2, boundary_region(dom), k, dom)
    tb = truncated_blocks(dm)
    assert tb.max_overlap <= 2**d
    assert len(tb.uncovered) == 0


def test_filter_threshold_examples():
    dom = ImplicitDomain(~Ball((0.5, 0.5), 0.3))
    dm = _dofmap([4, 4], 2, domain=dom)
    eta = eta_table(dm.mesh, dom)
    tb = truncated_blocks(dm)
    assert len(filter_blocks(tb, eta, 1.0)) == len(tb)
    assert len(filter_blocks(tb, eta, 1.0, include_interior=False)) == sum(e < 1 for e in eta.values())
    none = filter_blocks(tb, eta, 0.0)
    assert len(none) == 0 and len(none.uncovered) == dm.n
    with pytest.raises(ValueError):
        filter_blocks(tb, eta, 1.5)


def test_filter_keeps_single_small_leaf():
    # one element column cut so that a single leaf keeps fraction 1e-3
    dom = ImplicitDomain(HalfSpace((1.0, 0.0), 0.5 + 0.5e-3) & HalfSpace((0.0, 1.0), 0.5))
    dm = _dofmap([2, 2], 1, domain=dom)
    eta = eta_table(dm.mesh, dom, 0)
    kept = filter_blocks(full_blocks(dm), eta, 0.01)
    assert [b.leaf for b in kept] == [l for l, e in eta.items() if abs(e - 1e-3) < 1e-12]
    assert len(kept) == 1


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0))
def test_filter_monotone(eta_bar):
    dom = ImplicitDomain(Ball((0.4, 0.6), 0.35))
    dm = _dofmap([4, 4], 1, domain=dom)
    eta = eta_table(dm.mesh, dom)
    tb = full_blocks(dm)
    a = {b.leaf for b in filter_blocks(tb, eta, eta_bar)}
    assert a <= {b.leaf for b in filter_blocks(tb, eta, 1.0)}


def test_singletons():
    s = singleton_blocks(5)
    assert len(s) == 5 and s.max_overlap == 1
