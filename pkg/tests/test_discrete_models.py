from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slelab.discrete_models import (
    MAX_SAW_N,
    TriangularColoring,
    WalkPath,
    box_domain,
    bridge_counts,
    connective_bounds,
    loop_erase,
    percolation_exploration,
    sample_lerw,
    saw_count,
    saw_counts,
    triangle_crossing_mc,
)
from slelab.errors import ConfigError, DomainError
from slelab.rng import RngStream

# ---------------------------------------------------------------------------
# self-avoiding walks


def test_saw_small_counts():
    assert saw_count(0) == 1
    assert saw_counts(4) == [1, 4, 12, 36, 100]
    assert saw_count(10) == 44100


def test_bridge_counts_small():
    assert bridge_counts(5) == [1, 1, 3, 7, 17, 41]


def test_saw_submultiplicative():
    j = saw_counts(12)
    for m in range(1, 7):
        for n in range(1, 7):
            assert j[m + n] <= j[m] * j[n]


def test_connective_bounds_bracket_known_value():
    b = connective_bounds(MAX_SAW_N)
    assert b.lower < 2.638 < b.upper
    assert connective_bounds(8).upper >= b.upper


def test_saw_refuses_large_n():
    with pytest.raises(DomainError):
        saw_count(MAX_SAW_N + 1)
    with pytest.raises(DomainError):
        connective_bounds(0)


# ---------------------------------------------------------------------------
# loop erasure and LERW


def test_loop_erase_examples():
    assert loop_erase([0, 1, 0, 1j]).to_complex() == [0, 1j]
    assert loop_erase([0, 1, 1 + 1j, 1, 2]).to_complex() == [0, 1, 2]
    assert loop_erase([0]).to_complex() == [0]


def test_walk_path_rejects_jumps():
    with pytest.raises(DomainError):
        WalkPath([(0, 0), (2, 0)])


@settings(max_examples=60, deadline=None)
@given(steps=st.lists(st.sampled_from([(1, 0), (-1, 0), (0, 1), (0, -1)]), max_size=200))
def test_loop_erase_properties(steps):
    pts = np.concatenate([[(0, 0)], np.cumsum(np.array(steps, dtype=np.int64).reshape(-1, 2), axis=0)])
    path = WalkPath(pts)
    le = loop_erase(path)
    assert le.is_self_avoiding()
    assert tuple(le.points[0]) == (0, 0)
    assert tuple(le.points[-1]) == tuple(pts[-1])
    assert {tuple(p) for p in le.points} <= {tuple(p) for p in pts}
    assert np.array_equal(loop_erase(le).points, le.points)


def test_lerw_in_corridor_is_straight():
    mask = np.zeros((12, 3), bool)
    mask[1:11, 1] = True
    le = sample_lerw(mask, (3, 1), RngStream(1), targets=[(11, 1)])
    assert le.to_complex() == [complex(x, 1) for x in range(3, 12)]


def test_lerw_in_box_ends_on_boundary():
    n = 16
    mask = box_domain(n)
    for s in range(5):
        le = sample_lerw(mask, (8, 8), RngStream(2, s))
        assert le.is_self_avoiding()
        assert tuple(le.points[0]) == (8, 8)
        x, y = le.points[-1]
        assert not mask[x, y]
        assert all(mask[x, y] for x, y in le.points[:-1])


def test_lerw_targets():
    mask = box_domain(8)
    targets = [(8, y) for y in range(1, 8)]
    for s in range(5):
        le = sample_lerw(mask, (4, 4), RngStream(3, s), targets=targets)
        assert tuple(le.points[-1]) in set(targets)
    with pytest.raises(ConfigError):
        sample_lerw(mask, (4, 4), targets=[])
    with pytest.raises(ConfigError):
        sample_lerw(mask, (4, 4), targets=[(4, 4)])
    with pytest.raises(ConfigError):
        sample_lerw(mask, (0, 0))


# ---------------------------------------------------------------------------
# percolation exploration


def _check_interface(col, itf):
    for (b, w) in itf.edges():
        assert col.color(*b) is True
        assert col.color(*w) is False
    edges = itf.edges()
    assert len(set(edges)) == len(edges)
    for (b0, w0), (b1, w1) in zip(edges, edges[1:]):
        assert b0 == b1 or w0 == w1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 20), seed=st.integers(0, 10 ** 6), frac=st.floats(0.05, 0.95))
def test_exploration_is_valid_interface(n, seed, frac):
    split = max(1, min(n + 1, int(round(frac * (n + 1)))))
    col = TriangularColoring.random(n, split, RngStream(seed))
    _check_interface(col, percolation_exploration(col))


def test_exploration_all_white_hugs_black_boundary():
    n = 10
    col = TriangularColoring(n, np.zeros((n + 1, n + 1), bool), 4)
    itf = percolation_exploration(col)
    _check_interface(col, itf)
    assert all(b[0] == -1 or b[1] == -1 for b, _ in itf.edges())


def test_exploration_all_black_hugs_white_boundary():
    n = 10
    col = TriangularColoring(n, np.ones((n + 1, n + 1), bool), 4)
    itf = percolation_exploration(col)
    _check_interface(col, itf)
    assert all(w[1] == -1 or w[0] + w[1] == n + 1 for _, w in itf.edges())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_exploration_mirror_symmetry(seed):
    n = 12
    col = TriangularColoring.random(n, 5, RngStream(seed))
    mir = col.mirrored()
    e1 = set(percolation_exploration(col).edges())
    e2 = set(percolation_exploration(mir).edges())
    assert e2 == {(col.reflect_site(*w), col.reflect_site(*b)) for b, w in e1}


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_exploration_locality(seed):
    # the path only looks at the sites it touches; resampling the rest changes nothing
    n = 14
    col = TriangularColoring.random(n, 7, RngStream(seed))
    itf = percolation_exploration(col)
    touched = {tuple(p) for p in itf.black.tolist()} | {tuple(p) for p in itf.white.tolist()}
    fresh = TriangularColoring.random(n, 7, RngStream(seed + 1)).colors
    colors = col.colors.copy()
    for i in range(n + 1):
        for j in range(n + 1 - i):
            if (i, j) not in touched:
                colors[i, j] = fresh[i, j]
    other = TriangularColoring(n, colors, 7)
    assert percolation_exploration(other).edges() == itf.edges()


def test_coloring_validation():
    with pytest.raises(ConfigError):
        TriangularColoring(4, np.zeros((3, 3), bool), 2)
    with pytest.raises(ConfigError):
        TriangularColoring(4, np.zeros((5, 5), bool), 0)


def test_crossing_monotone_in_arc_and_close_to_cardy():
    xs = [0.25, 0.5, 0.75]
    res = triangle_crossing_mc(xs, 32, 2000, RngStream(4))
    est = [r.estimate for r in res]
    assert est[0] <= est[1] <= est[2]
    for r in res:
        assert r.floor.estimate <= r.ceil.estimate
        assert abs(r.estimate - r.x) <= 4 * r.stderr + 0.05
    with pytest.raises(DomainError):
        triangle_crossing_mc(1.5, 32, 10)


def test_crossing_reproducible_across_workers():
    a = triangle_crossing_mc(0.5, 16, 3000, RngStream(5), workers=1)
    b = triangle_crossing_mc(0.5, 16, 3000, RngStream(5), workers=2)
    assert a.estimate == b.estimate

