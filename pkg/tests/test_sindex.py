import gc
import math
import time

import numpy as np
import pytest

from v2vprop.geom import Point2, Segment2
from v2vprop.sindex import LEAF_CAPACITY, Rect, RTree, rect_intersects_rect, rect_intersects_segment


def random_rects(rng, n, extent=1000.0, max_side=20.0):
    xs = rng.uniform(0, extent, size=n)
    ys = rng.uniform(0, extent, size=n)
    ws = rng.uniform(0.1, max_side, size=n)
    hs = rng.uniform(0.1, max_side, size=n)
    return [(i, Rect(xs[i], ys[i], xs[i] + ws[i], ys[i] + hs[i])) for i in range(n)]


def test_empty_tree():
    t = RTree([])
    assert t.query_segment(Segment2(Point2(0, 0), Point2(1, 1))) == []
    assert t.query_region(Rect(-1e9, -1e9, 1e9, 1e9)) == []
    t.validate()


def test_single_object():
    r = Rect(2, 3, 5, 7)
    t = RTree([("a", r)])
    assert t.root.is_leaf
    assert t.root.rect == r
    assert t.query_region(Rect(0, 0, 10, 10)) == ["a"]
    assert t.height == 0


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        RTree([("a", Rect(0, 0, 1, 1)), ("a", Rect(2, 2, 3, 3))])


def test_grid_1024_height_and_full_traversal():
    objects = []
    for gy in range(32):
        for gx in range(32):
            objects.append((gy * 32 + gx, Rect(gx, gy, gx + 1, gy + 1)))
    t = RTree(objects)
    # 1024 objects halved down to 4-object leaves: 8 split levels
    assert t.height == 8
    ids = t.all_ids()
    assert len(ids) == 1024
    assert set(ids) == set(range(1024))
    t.validate()


def test_query_segment_matches_naive_scan():
    rng = np.random.default_rng(42)
    objects = random_rects(rng, 1000)
    t = RTree(objects)
    t.validate()
    for _ in range(100):
        a = Point2(rng.uniform(-50, 1050), rng.uniform(-50, 1050))
        b = Point2(rng.uniform(-50, 1050), rng.uniform(-50, 1050))
        seg = Segment2(a, b)
        naive = {oid for oid, r in objects if rect_intersects_segment(r, seg)}
        assert set(t.query_segment(seg)) == naive


def test_query_region_matches_naive_scan():
    rng = np.random.default_rng(43)
    objects = random_rects(rng, 5000)
    t = RTree(objects)
    for _ in range(50):
        x0, y0 = rng.uniform(-100, 1000, size=2)
        region = Rect(x0, y0, x0 + rng.uniform(1, 400), y0 + rng.uniform(1, 400))
        naive = {oid for oid, r in objects if rect_intersects_rect(r, region)}
        assert set(t.query_region(region)) == naive


def test_region_covering_scene_returns_all():
    rng = np.random.default_rng(1)
    objects = random_rects(rng, 300)
    t = RTree(objects)
    assert set(t.query_region(Rect(-1e6, -1e6, 1e6, 1e6))) == set(range(300))
    assert t.query_region(Rect(5000, 5000, 6000, 6000)) == []


def test_segment_inside_single_rect():
    t = RTree([("v", Rect(0, 0, 10, 10))])
    assert t.query_segment(Segment2(Point2(2, 2), Point2(3, 3))) == ["v"]


def test_build_insensitive_to_input_order():
    rng = np.random.default_rng(9)
    objects = random_rects(rng, 500)
    t1 = RTree(objects)
    shuffled = list(objects)
    rng.shuffle(shuffled)
    t2 = RTree(shuffled)
    seg = Segment2(Point2(0, 0), Point2(1000, 1000))
    assert set(t1.query_segment(seg)) == set(t2.query_segment(seg))
    region = Rect(100, 100, 400, 300)
    assert set(t1.query_region(region)) == set(t2.query_region(region))


def test_build_deterministic_tree_shape():
    rng = np.random.default_rng(10)
    objects = random_rects(rng, 200)

    def shape(node):
        if node is None:
            return None
        if node.is_leaf:
            return tuple(oid for oid, _ in node.items)
        return (shape(node.left), shape(node.right))

    t1 = RTree(objects)
    t2 = RTree(list(objects))
    assert shape(t1.root) == shape(t2.root)


def test_height_bound_random_sizes():
    rng = np.random.default_rng(12)
    for n in (5, 17, 63, 128, 1000, 4096):
        t = RTree(random_rects(rng, n))
        assert t.height <= math.ceil(math.log2(n / LEAF_CAPACITY)) + 1
        t.validate()


def test_build_time_doubling_trend():
    # mirrors the linear-construction claim at trend level; gc pauses would
    # otherwise charge whole-suite garbage to whichever build they land in
    rng = np.random.default_rng(77)
    sizes = [2000, 4000, 8000, 16000]
    times = []
    gc.collect()
    gc.disable()
    try:
        for n in sizes:
            objects = random_rects(rng, n, extent=math.sqrt(n) * 30.0)
            _timed_build(objects)  # warmup
            best = min(_timed_build(objects) for _ in range(5))
            times.append(best)
    finally:
        gc.enable()
    for i in range(1, len(times)):
        assert times[i] / times[i - 1] <= 2.5, (sizes[i], times[i] / times[i - 1])


def _timed_build(objects):
    t0 = time.perf_counter()
    RTree(objects)
    return time.perf_counter() - t0
