"""Binary R-tree over axis-aligned bounding rectangles.

Built top-down: each node sorts its objects by center coordinate along the
node rectangle's longer axis and splits them into two halves.  Trees are
immutable after build; the static-object tree is built once per scenario
while the vehicle tree is rebuilt from scratch every timestep.
"""
from __future__ import annotations

import math
from typing import NamedTuple

from .geom import Segment2

LEAF_CAPACITY = 4


class Rect(NamedTuple):
    min_x: float
    min_y: float
    max_x: float
    max_y: float


def rect_union(a: Rect, b: Rect) -> Rect:
    return Rect(min(a.min_x, b.min_x), min(a.min_y, b.min_y),
                max(a.max_x, b.max_x), max(a.max_y, b.max_y))


def rect_intersects_rect(a: Rect, b: Rect) -> bool:
    return not (a.max_x < b.min_x or b.max_x < a.min_x
                or a.max_y < b.min_y or b.max_y < a.min_y)


def rect_intersects_segment(r: Rect, seg: Segment2) -> bool:
    """Slab clipping; touching the rectangle boundary counts as intersecting."""
    x0, y0 = seg.a.x, seg.a.y
    dx, dy = seg.b.x - x0, seg.b.y - y0
    t0, t1 = 0.0, 1.0
    for delta, lo, hi, start in ((dx, r.min_x, r.max_x, x0), (dy, r.min_y, r.max_y, y0)):
        if abs(delta) < 1e-15:
            if start < lo or start > hi:
                return False
            continue
        ta = (lo - start) / delta
        tb = (hi - start) / delta
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    return True


class _Node:
    __slots__ = ("rect", "left", "right", "items")

    def __init__(self, rect, left=None, right=None, items=None):
        self.rect = rect
        self.left = left
        self.right = right
        self.items = items  # leaf: list of (id, Rect)

    @property
    def is_leaf(self):
        return self.items is not None


class RTree:
    def __init__(self, objects):
        """objects: iterable of (id, Rect); ids must be unique."""
        items = [(oid, Rect(*r)) for oid, r in objects]
        if len({oid for oid, _ in items}) != len(items):
            raise ValueError("duplicate ids in R-tree input")
        for _, r in items:
            if r.min_x > r.max_x or r.min_y > r.max_y:
                raise ValueError(f"invalid rect {r}")
        self.count = len(items)
        self.root = self._build(items) if items else None

    @staticmethod
    def _build(items):
        rect = items[0][1]
        for _, r in items[1:]:
            rect = rect_union(rect, r)
        if len(items) <= LEAF_CAPACITY:
            return _Node(rect, items=items)
        # longer axis of the node rect decides the sort direction; ties go to x
        if (rect.max_x - rect.min_x) >= (rect.max_y - rect.min_y):
            key = lambda it: ((it[1].min_x + it[1].max_x), it[0])
        else:
            key = lambda it: ((it[1].min_y + it[1].max_y), it[0])
        items = sorted(items, key=key)
        mid = (len(items) + 1) // 2
        return _Node(rect, left=RTree._build(items[:mid]), right=RTree._build(items[mid:]))

    @property
    def height(self) -> int:
        """Root-to-leaf edge count (0 for a single-leaf tree)."""
        def depth(node):
            if node is None or node.is_leaf:
                return 0
            return 1 + max(depth(node.left), depth(node.right))
        return depth(self.root)

    def query_segment(self, seg: Segment2):
        """Ids whose bounding rect intersects seg (exact shape test is the caller's)."""
        out = []
        if self.root is None:
            return out
        stack = [self.root]
        while stack:
            node = stack.pop()
            if not rect_intersects_segment(node.rect, seg):
                continue
            if node.is_leaf:
                out.extend(oid for oid, r in node.items if rect_intersects_segment(r, seg))
            else:
                stack.append(node.right)
                stack.append(node.left)
        return out

    def query_region(self, region: Rect):
        out = []
        if self.root is None:
            return out
        region = Rect(*region)
        stack = [self.root]
        while stack:
            node = stack.pop()
            if not rect_intersects_rect(node.rect, region):
                continue
            if node.is_leaf:
                out.extend(oid for oid, r in node.items if rect_intersects_rect(r, region))
            else:
                stack.append(node.right)
                stack.append(node.left)
        return out

    def all_ids(self):
        out = []
        if self.root is None:
            return out
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.extend(oid for oid, _ in node.items)
            else:
                stack.append(node.right)
                stack.append(node.left)
        return out

    def validate(self):
        """Check structural invariants; raises AssertionError on violation."""
        if self.root is None:
            assert self.count == 0
            return
        seen = []

        def walk(node):
            if node.is_leaf:
                assert len(node.items) <= LEAF_CAPACITY
                for oid, r in node.items:
                    assert (r.min_x >= node.rect.min_x - 1e-12
                            and r.min_y >= node.rect.min_y - 1e-12
                            and r.max_x <= node.rect.max_x + 1e-12
                            and r.max_y <= node.rect.max_y + 1e-12)
                    seen.append(oid)
                return
            for child in (node.left, node.right):
                assert (child.rect.min_x >= node.rect.min_x - 1e-12
                        and child.rect.min_y >= node.rect.min_y - 1e-12
                        and child.rect.max_x <= node.rect.max_x + 1e-12
                        and child.rect.max_y <= node.rect.max_y + 1e-12)
                walk(child)

        walk(self.root)
        assert len(seen) == self.count
        assert len(set(seen)) == self.count
        assert self.height <= max(0, math.ceil(math.log2(max(1, self.count) / LEAF_CAPACITY)) + 1)
