import itertools
import math

import numpy as np
import pytest

from oracles import regions_oracle
from reticula.annotations import AnnotationSet, Component, Source, Status
from reticula.detect import GrowParams, grow_regions
from reticula.track import TrackParams, link_tracks, match_in_adjacent, rescue_grow, track_volume
from reticula.volume import Volume

GROW = GrowParams(dark_threshold=90, max_diameter=10, min_area=2)
TRACK = TrackParams(xy_tolerance=3.0, rescue_threshold_delta=20, rescue_max_diameter=12)
W = H = 20


def _square(cx, cy, half=1):
    return [(x, y) for y in range(cy - half, cy + half + 1) for x in range(cx - half, cx + half + 1)]


def _bright(depth=10):
    return np.full((depth, H, W), 255, np.uint8)


def _annotations(depth, comps):
    ann = AnnotationSet(W, H, depth)
    for cid, (z, pixels) in enumerate(comps):
        ann.add(Component(cid, z, tuple(pixels)))
    return ann


def test_params_validation():
    with pytest.raises(ValueError):
        TrackParams(xy_tolerance=-1)
    with pytest.raises(ValueError):
        TrackParams(rescue_threshold_delta=-1)
    assert TrackParams().rescue_diameter(GROW) == 12


def test_match_in_adjacent_basic():
    ann = _annotations(3, [(1, _square(5, 5)), (2, _square(6, 5))])
    c = ann.get(0)
    assert match_in_adjacent(ann, c, +1, 3.0).id == 1
    assert match_in_adjacent(ann, c, -1, 3.0) is None
    assert match_in_adjacent(ann, c, +1, 0.5) is None


def test_match_in_adjacent_tie_goes_to_lower_id():
    ann = AnnotationSet(W, H, 2)
    ann.add(Component(7, 1, tuple(_square(12, 10))))
    ann.add(Component(3, 1, tuple(_square(8, 10))))
    ann.add(Component(0, 0, tuple(_square(10, 10))))
    c = ann.get(0)
    cands = ann.on_slice(1)
    dists = {o.id: math.dist(c.centroid, o.centroid) for o in cands}
    best = min(dists.items(), key=lambda kv: (kv[1], kv[0]))[0]
    assert best == 3
    assert match_in_adjacent(ann, c, +1, 3.0).id == best


def test_match_in_adjacent_exhaustive_random():
    rng = np.random.default_rng(1)
    for _ in range(30):
        ann = AnnotationSet(W, H, 2)
        pts = rng.integers(2, 18, (6, 2))
        for i, (x, y) in enumerate(pts):
            ann.add(Component(i, 1 if i else 0, ((int(x), int(y)),)))
        c = ann.get(0)
        cands = [(math.dist(c.centroid, o.centroid), o.id) for o in ann.on_slice(1)]
        ok = sorted(k for k in cands if k[0] <= 4.0)
        got = match_in_adjacent(ann, c, +1, 4.0)
        assert (got.id if got else None) == (ok[0][1] if ok else None)


def test_rescue_uniform_bright_is_none():
    img = np.full((H, W), 255, np.uint8)
    assert rescue_grow(img, (10.0, 10.0), GROW, TRACK) is None


def test_rescue_finds_faint_blob_strict_growth_misses():
    img = np.full((H, W), 255, np.uint8)
    value = GROW.dark_threshold + TRACK.rescue_threshold_delta - 1
    img[9:12, 9:12] = value
    assert grow_regions(img, GROW) == []
    assert regions_oracle(img, GROW.dark_threshold, 10, 2) == set()
    relaxed = regions_oracle(img, GROW.dark_threshold + TRACK.rescue_threshold_delta, 12, 2)
    r = rescue_grow(img, (11.0, 11.0), GROW, TRACK, z=4, component_id=9)
    assert r is not None and r.source == Source.RESCUE and r.status == Status.CONFIRMED
    assert {r.pixel_set} == relaxed
    assert r.z == 4 and r.id == 9


def test_rescue_seed_must_be_within_tolerance():
    img = np.full((H, W), 255, np.uint8)
    img[2:4, 2:4] = 50
    assert rescue_grow(img, (15.0, 15.0), GROW, TRACK) is None


def test_rescue_oversize_region_is_none():
    img = np.full((H, W), 255, np.uint8)
    img[10, :] = 50
    assert rescue_grow(img, (10.0, 10.0), GROW, TRACK) is None


def test_rescue_seed_out_of_bounds():
    with pytest.raises(ValueError):
        rescue_grow(np.zeros((4, 4), np.uint8), (9.0, 1.0), GROW, TRACK)


def test_persistent_components_confirmed_and_linked():
    ann = _annotations(10, [(z, _square(10, 10)) for z in (4, 5, 6)])
    out, tracks = track_volume(Volume(_bright()), ann, GROW, TRACK)
    assert all(c.status == Status.CONFIRMED for c in out)
    assert len(tracks) == 1
    assert tracks[0].members == ((4, 0), (5, 1), (6, 2))
    assert {c.track_id for c in out} == {0}


def test_lone_interior_component_deleted():
    ann = _annotations(10, [(5, _square(10, 10))])
    out, tracks = track_volume(Volume(_bright()), ann, GROW, TRACK)
    assert [c.status for c in out] == [Status.DELETED]
    assert tracks == []


@pytest.mark.parametrize("z", [0, 9])
def test_boundary_components_are_not_deleted(z):
    ann = _annotations(10, [(z, _square(10, 10))])
    out, tracks = track_volume(Volume(_bright()), ann, GROW, TRACK)
    assert [c.status for c in out] == [Status.CONFIRMED]
    assert tracks == []


def test_rescue_adds_component_in_neighbour_slice():
    vox = _bright()
    vox[5, 9:12, 9:12] = 40
    vox[6, 9:12, 9:12] = GROW.dark_threshold + TRACK.rescue_threshold_delta - 1
    ann = _annotations(10, [(5, _square(10, 10))])
    out, tracks = track_volume(Volume(vox), ann, GROW, TRACK)
    assert len(out) == 2
    rescued = [c for c in out if c.source == Source.RESCUE]
    assert len(rescued) == 1 and rescued[0].z == 6 and rescued[0].id == 1
    assert rescued[0].pixel_set == frozenset(_square(10, 10))
    assert all(c.status == Status.CONFIRMED for c in out)
    assert len(tracks) == 1 and tracks[0].members == ((5, 0), (6, 1))


def test_shared_rescue_region_added_once():
    vox = _bright()
    vox[5, 9:12, 9:12] = 100
    ann = _annotations(10, [(4, _square(10, 10)), (6, _square(10, 10))])
    out, tracks = track_volume(Volume(vox), ann, GROW, TRACK)
    assert len(out) == 3
    assert [c.z for c in out if c.source == Source.RESCUE] == [5]
    assert len(tracks) == 1 and [z for z, _ in tracks[0].members] == [4, 5, 6]


def test_rescue_overlapping_existing_detection_is_not_added():
    vox = _bright()
    # relaxed region at z=6 spans x 9..16 and already holds a far-off detection at x 14..16
    vox[6, 9:12, 9:17] = 100
    ann = _annotations(10, [(5, _square(10, 10)), (6, _square(15, 10))])
    out, _ = track_volume(Volume(vox), ann, GROW, TRACK)
    assert not any(c.source == Source.RESCUE for c in out)
    assert out.get(0).status == Status.DELETED


def test_each_component_rescues_on_its_own():
    vox = _bright()
    vox[5, 9:12, 9:12] = 100
    vox[5, 9:12, 14:17] = 100
    ann = _annotations(10, [(4, _square(10, 10)), (6, _square(15, 10))])
    out, _ = track_volume(Volume(vox), ann, GROW, TRACK)
    assert out.get(0).status == Status.CONFIRMED
    assert out.get(1).status == Status.CONFIRMED
    assert sum(c.source == Source.RESCUE for c in out) == 2


def test_match_preferred_over_rescue():
    vox = _bright()
    vox[6, 9:12, 9:12] = 100
    ann = _annotations(10, [(4, _square(10, 10)), (5, _square(10, 10))])
    out, _ = track_volume(Volume(vox), ann, GROW, TRACK)
    assert not any(c.source == Source.RESCUE for c in out)


def test_track_is_idempotent_and_order_independent():
    rng = np.random.default_rng(3)
    vox = rng.integers(120, 256, (8, H, W)).astype(np.uint8)
    comps = []
    for z in range(8):
        for _ in range(rng.integers(0, 3)):
            x, y = rng.integers(2, 18, 2)
            comps.append((z, _square(int(x), int(y))))
    vol = Volume(vox)
    ann = _annotations(8, comps)
    out1, tracks1 = track_volume(vol, ann, GROW, TRACK)
    again, tracks2 = track_volume(vol, out1, GROW, TRACK)
    assert list(again) == list(out1) and tracks1 == tracks2

    # same components inserted in reverse slice order
    rev = AnnotationSet(W, H, 8)
    for c in sorted(ann, key=lambda c: -c.z):
        rev.add(c)
    out_rev, tracks_rev = track_volume(vol, rev, GROW, TRACK)
    assert sorted(out_rev, key=lambda c: c.id) == sorted(out1, key=lambda c: c.id)
    assert tracks_rev == tracks1


def test_track_rejects_mismatched_volume():
    with pytest.raises(ValueError):
        track_volume(Volume(_bright(5)), AnnotationSet(W, H, 6), GROW, TRACK)


def test_link_tracks_is_one_to_one():
    ann = AnnotationSet(W, H, 2)
    ann.add(Component(0, 0, tuple(_square(10, 10)), status=Status.CONFIRMED))
    ann.add(Component(1, 0, tuple(_square(11, 10)), status=Status.CONFIRMED))
    ann.add(Component(2, 1, tuple(_square(10, 10)), status=Status.CONFIRMED))
    out, tracks = link_tracks(ann, 3.0)
    assert len(tracks) == 1 and tracks[0].members == ((0, 0), (1, 2))
    assert out.get(1).track_id is None
    for t in tracks:
        for (_, a), (_, b) in itertools.pairwise(t.members):
            assert out.get(a).distance_to(out.get(b)) <= 3.0
