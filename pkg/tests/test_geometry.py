import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from georeason.geometry import (
    BBox, BinaryMask, Contour, DegenerateContour, EmptyMask, Point, bbox_centroid,
    boundary_pixels, dilate, fill_holes, iou, label_components, mask_to_bbox, mask_to_contour,
    rasterize_contour, simplify_ring,
)

import oracles


def mask(rows):
    return BinaryMask(np.array(rows, dtype=bool))


def test_bbox_invariants():
    with pytest.raises(ValueError):
        BBox(5, 0, 5, 1)
    with pytest.raises(ValueError):
        BBox(0, 2, 1, 1)
    with pytest.raises(ValueError):
        BBox(-1, 0, 1, 1)
    with pytest.raises(ValueError):
        BBox(0, 0, float("inf"), 1)
    with pytest.raises(TypeError):
        BBox(0, 0, True, 1)


def test_bbox_normalized_views():
    b = BBox(16, 32, 48, 64)
    assert b.normalized(64, 64) == (0.25, 0.5, 0.75, 1.0)
    assert b.normalized(64, 64, scale=1000) == (250, 500, 750, 1000)
    assert BBox.from_normalized(b.normalized(64, 64, 1000), 64, 64, 1000) == b


@pytest.mark.parametrize("a, b, expected", [
    ([0, 0, 10, 10], [0, 0, 10, 10], 1.0),
    ([0, 0, 10, 10], [20, 20, 30, 30], 0.0),
    ([0, 0, 10, 10], [5, 0, 15, 10], 1 / 3),
    ([0, 0, 10, 10], [10, 0, 20, 10], 0.0),
])
def test_iou_examples(a, b, expected):
    assert iou(BBox(*a), BBox(*b)) == pytest.approx(expected, abs=1e-15)


boxes = st.tuples(
    st.floats(0, 100), st.floats(0, 100), st.floats(0.01, 50), st.floats(0.01, 50)
).map(lambda t: BBox(t[0], t[1], t[0] + t[2], t[1] + t[3]))


@given(boxes, boxes)
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert v == pytest.approx(oracles.box_area_iou(a.to_list(), b.to_list()), abs=1e-12)
    assert iou(a, a) == 1.0
    if v == 1.0:
        assert a.to_list() == pytest.approx(b.to_list())


@pytest.mark.parametrize("box, centroid", [
    ([0, 0, 10, 10], (5, 5)), ([2, 4, 6, 8], (4, 6)), ([0, 0, 1, 3], (0.5, 1.5)),
])
def test_bbox_centroid(box, centroid):
    assert bbox_centroid(BBox(*box)) == Point(*centroid)


def test_mask_to_bbox_single_pixel():
    m = np.zeros((8, 8), bool)
    m[3, 5] = True
    assert [b.to_list() for b in mask_to_bbox(BinaryMask(m))] == [[5, 3, 6, 4]]


def test_mask_to_bbox_two_blobs_per_component():
    m = np.zeros((10, 10), bool)
    m[0:2, 0:2] = True
    m[8:10, 8:10] = True
    got = [b.to_list() for b in mask_to_bbox(BinaryMask(m), per_component=True)]
    expected = sorted((oracles.bbox_scan(c) for c in oracles.components_scan(m)), key=lambda b: (b[1], b[0]))
    assert got == expected == [[0, 0, 2, 2], [8, 8, 10, 10]]
    assert [b.to_list() for b in mask_to_bbox(BinaryMask(m))] == [[0, 0, 10, 10]]


def test_mask_to_bbox_empty():
    assert mask_to_bbox(BinaryMask.zeros(4, 4), per_component=True) == []
    with pytest.raises(EmptyMask):
        mask_to_bbox(BinaryMask.zeros(4, 4))


def test_components_are_eight_connected():
    m = mask([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert len(label_components(m)) == 1
    assert [b.to_list() for b in mask_to_bbox(m, per_component=True)] == [[0, 0, 3, 3]]


@settings(max_examples=200, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_mask_to_bbox_matches_flood_fill_and_is_tight(data):
    m = BinaryMask(data)
    got = [b.to_list() for b in mask_to_bbox(m, per_component=True)]
    comps = oracles.components_scan(data)
    assert sorted(got) == sorted(oracles.bbox_scan(c) for c in comps)
    keys = [(b[1], b[0]) for b in got]
    assert keys == sorted(keys)
    if data.any():
        (b,) = mask_to_bbox(m)
        x0, y0, x1, y1 = (int(v) for v in b.to_list())
        inside = np.zeros_like(data)
        inside[y0:y1, x0:x1] = True
        assert not (data & ~inside).any()
        # touches foreground on all four sides
        assert data[y0, x0:x1].any() and data[y1 - 1, x0:x1].any()
        assert data[y0:y1, x0].any() and data[y0:y1, x1 - 1].any()


def test_contour_square_and_single_pixel():
    full = BinaryMask(np.ones((4, 4)))
    (c,) = mask_to_contour(full, simplify_eps=0.5)
    assert c.vertices == ((0, 0), (4, 0), (4, 4), (0, 4))
    one = np.zeros((3, 3), bool)
    one[0, 0] = True
    (c,) = mask_to_contour(BinaryMask(one))
    assert c.vertices == ((0, 0), (1, 0), (1, 1), (0, 1))


def test_contour_l_shape_has_six_vertices():
    # boundary edges of the 3x3 L enumerated by hand: the top-right notch adds two corners
    m = mask([[1, 1, 0], [1, 1, 1], [1, 1, 1]])
    (c,) = mask_to_contour(m)
    assert c.vertices == ((0, 0), (2, 0), (2, 1), (3, 1), (3, 3), (0, 3))


def test_contour_ignores_holes():
    m = np.ones((5, 5), bool)
    m[2, 2] = False
    (c,) = mask_to_contour(BinaryMask(m))
    assert c.vertices == ((0, 0), (5, 0), (5, 5), (0, 5))


def test_contour_diagonal_pinch_round_trips():
    m = mask([[1, 0, 0], [0, 1, 0], [1, 0, 0]])
    (c,) = mask_to_contour(m)
    assert rasterize_contour(c, 3, 3) == m


def test_contour_order_matches_bbox_order():
    m = np.zeros((12, 12), bool)
    m[8:10, 1:3] = True
    m[1:4, 6:9] = True
    m[1:3, 1:3] = True
    bm = BinaryMask(m)
    cs = mask_to_contour(bm)
    bs = mask_to_bbox(bm, per_component=True)
    for c, b in zip(cs, bs):
        xs = [v[0] for v in c]
        ys = [v[1] for v in c]
        assert [min(xs), min(ys), max(xs), max(ys)] == b.to_list()


def test_contour_requires_three_distinct_vertices():
    with pytest.raises(DegenerateContour):
        Contour([(0, 0), (1, 1)])
    with pytest.raises(DegenerateContour):
        Contour([(0, 0), (0, 0), (1, 1)])


def test_rasterize_square_round_trip():
    c = Contour([(0, 0), (4, 0), (4, 4), (0, 4)])
    assert rasterize_contour(c, 4, 4) == BinaryMask(np.ones((4, 4)))


def test_rasterize_triangle_against_half_plane():
    c = Contour([(0, 0), (4, 0), (0, 4)])
    got = rasterize_contour(c, 4, 4).data
    expected = np.array([[(j + 0.5) + (i + 0.5) < 4 for j in range(4)] for i in range(4)])
    assert np.array_equal(got, expected)
    assert got.sum() == 6


def test_rasterize_zero_area():
    with pytest.raises(DegenerateContour):
        rasterize_contour(Contour([(0, 0), (2, 0), (4, 0)]), 4, 4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 8), st.floats(0, 8)), min_size=3, max_size=7, unique=True))
def test_rasterize_matches_crossing_number(verts):
    try:
        c = Contour(verts)
        got = rasterize_contour(c, 8, 8).data
    except DegenerateContour:
        return
    assert np.array_equal(got, oracles.rasterize_scan(c.vertices, 8, 8))


def test_simplify_keeps_rectangle_corners():
    ring = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1)]
    assert simplify_ring(ring, 0.5) == [(0, 0), (2, 0), (2, 2), (0, 2)]
    assert simplify_ring(ring, 0) == ring


def test_simplify_eps_drops_staircase():
    m = np.tril(np.ones((6, 6), bool))
    (full,) = mask_to_contour(BinaryMask(m))
    (simple,) = mask_to_contour(BinaryMask(m), simplify_eps=1.0)
    assert len(simple) < len(full)
    assert len(simple) >= 3


def test_dilate_examples():
    m = np.zeros((5, 5), bool)
    m[2, 2] = True
    out = dilate(BinaryMask(m), 1).data
    expected = np.zeros((5, 5), bool)
    expected[1:4, 1:4] = True
    assert np.array_equal(out, expected)
    full = BinaryMask(np.ones((5, 5)))
    assert dilate(full, 3) == full
    two = np.zeros((3, 10), bool)
    two[1, 2] = two[1, 5] = True
    d = dilate(BinaryMask(two), 1).data
    assert np.array_equal(d, oracles.dilate_scan(two, 1))
    # two full 3x3 blocks, side by side without overlap
    assert d.sum() == 18 and d[:, 1:7].all()


@settings(max_examples=100, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 10), st.integers(1, 10))), st.integers(1, 3))
def test_dilate_matches_scan_and_is_extensive(data, r):
    out = dilate(BinaryMask(data), r).data
    assert np.array_equal(out, oracles.dilate_scan(data, r))
    assert not (data & ~out).any()


@settings(max_examples=50, deadline=None)
@given(arrays(bool, (8, 8)), arrays(bool, (8, 8)), st.integers(1, 3))
def test_dilate_monotone(a, b, r):
    small = a & b
    assert not (dilate(BinaryMask(small), r).data & ~dilate(BinaryMask(a), r).data).any()


def test_dilate_rejects_zero_radius():
    with pytest.raises(ValueError):
        dilate(BinaryMask.zeros(2, 2), 0)


def test_boundary_pixels_examples():
    full = np.ones((4, 4), bool)
    b = boundary_pixels(BinaryMask(full)).data
    assert b.sum() == 12 and not b[1:3, 1:3].any()
    one = np.zeros((3, 3), bool)
    one[1, 1] = True
    assert boundary_pixels(BinaryMask(one)) == BinaryMask(one)
    assert boundary_pixels(BinaryMask.zeros(3, 3)).is_empty()


@settings(max_examples=100, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 10), st.integers(1, 10))))
def test_boundary_matches_scan(data):
    b = boundary_pixels(BinaryMask(data)).data
    assert np.array_equal(b, oracles.boundary_scan(data))
    assert not (b & ~data).any()


@pytest.mark.parametrize("h, w", [(1, 1), (3, 7), (10, 4)])
def test_boundary_of_rectangle_is_perimeter(h, w):
    m = np.zeros((h + 4, w + 4), bool)
    m[2:2 + h, 2:2 + w] = True
    expected = h * w if min(h, w) <= 2 else 2 * (h + w) - 4
    assert boundary_pixels(BinaryMask(m)).foreground_count() == expected


def test_round_trip_small_random(rng):
    for _ in range(50):
        data = oracles.random_hole_free_mask(rng, max_side=16)
        m = BinaryMask(data)
        out = np.zeros_like(data)
        for comp, c in zip(label_components(m), mask_to_contour(m)):
            r = rasterize_contour(c, m.width, m.height).data
            assert np.array_equal(r, comp)
            out |= r
        assert np.array_equal(out, data)


def test_round_trip_fills_holes():
    m = np.ones((6, 6), bool)
    m[2:4, 2:4] = False
    (c,) = mask_to_contour(BinaryMask(m))
    assert rasterize_contour(c, 6, 6) == fill_holes(BinaryMask(m))


def test_mask_equality_and_ops():
    a = mask([[1, 0], [0, 0]])
    b = mask([[0, 0], [0, 1]])
    assert (a | b).foreground_count() == 2
    assert (a & b).is_empty()
    assert a == mask([[1, 0], [0, 0]])
    assert hash(a) == hash(mask([[1, 0], [0, 0]]))
    with pytest.raises(ValueError):
        a | BinaryMask.zeros(3, 3)
    with pytest.raises(ValueError):
        a.data[0, 0] = False


def test_from_box_uses_pixel_centers():
    m = BinaryMask.from_box(BBox(1, 1, 3, 2), 4, 4)
    assert np.argwhere(m.data).tolist() == [[1, 1], [1, 2]]
