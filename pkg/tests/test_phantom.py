import hashlib

import numpy as np
import pytest
from scipy import ndimage

from reticula.config import reference_phantom_spec
from reticula.phantom import PhantomError, PhantomSpec, SplitMix64, generate_phantom


def test_splitmix64_reference_vector():
    rng = SplitMix64(0)
    first = [int(v) for v in rng.next_u64(3)]
    assert first == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert int(SplitMix64(0).next_u64(1)[0]) == first[0]
    rng = SplitMix64(0)
    rng.next_u64(2)
    assert int(rng.next_u64(1)[0]) == first[2]


def test_splitmix64_draw_ranges():
    rng = SplitMix64(42)
    u = rng.uniform(10000)
    assert u.min() >= 0 and u.max() < 1
    ints = rng.integers(-1, 1, 3000)
    assert set(ints.tolist()) == {-1, 0, 1}
    n = rng.normal(20001)
    assert abs(n.mean()) < 0.05 and abs(n.std() - 1) < 0.05


def test_empty_noise_free_phantom_is_constant():
    spec = PhantomSpec(width=16, height=12, depth=4, n_reticula=0, n_distractors=0, noise_sigma=0)
    vol, truth, tracks = generate_phantom(spec)
    assert (vol.voxels == spec.background_intensity).all()
    assert len(truth) == 0 and tracks == []


def test_single_reticulum_spans_its_length():
    spec = PhantomSpec(width=24, height=24, depth=8, n_reticula=1, reticulum_length_range=(5, 5), n_distractors=0)
    _, truth, tracks = generate_phantom(spec)
    zs = [c.z for c in truth]
    assert len(zs) == 5 and zs == list(range(zs[0], zs[0] + 5))
    assert len(tracks) == 1 and len(tracks[0].members) == 5


def _hash(spec):
    vol, _, _ = generate_phantom(spec)
    return hashlib.sha256(vol.voxels.tobytes()).hexdigest()


def test_same_seed_is_byte_identical():
    spec = PhantomSpec(width=48, height=48, depth=6, n_reticula=5, n_distractors=2, rng_seed=99)
    assert _hash(spec) == _hash(spec)


def test_different_seeds_differ():
    hashes = {_hash(PhantomSpec(width=48, height=48, depth=6, n_reticula=5, n_distractors=2, rng_seed=s)) for s in range(10)}
    assert len(hashes) == 10


@pytest.mark.parametrize("seed", range(5))
def test_truth_geometry(seed):
    spec = PhantomSpec(width=48, height=48, depth=10, n_reticula=10, n_distractors=3, noise_sigma=0, rng_seed=seed)
    vol, truth, tracks = generate_phantom(spec)
    for c in truth:
        assert c.extent <= spec.max_diameter
        mask = np.zeros((spec.height, spec.width), bool)
        for x, y in c.pixels:
            mask[y, x] = True
            assert vol.voxel(x, y, c.z) == spec.reticulum_intensity
        assert ndimage.label(mask, structure=np.ones((3, 3)))[1] == 1
    lo, hi = spec.reticulum_length_range
    for t in tracks:
        assert lo <= len(t.members) <= hi
        comps = [truth.get(cid) for _, cid in t.members]
        for a, b in zip(comps, comps[1:]):
            assert abs(a.centroid[0] - b.centroid[0]) <= spec.drift_per_slice
            assert abs(a.centroid[1] - b.centroid[1]) <= spec.drift_per_slice


@pytest.mark.parametrize("seed", range(5))
def test_distractors_exceed_the_diameter_bound(seed):
    spec = PhantomSpec(width=64, height=64, depth=6, n_reticula=0, n_distractors=6, noise_sigma=0, rng_seed=seed)
    vol, _, _ = generate_phantom(spec)
    for z in range(spec.depth):
        labels, n = ndimage.label(vol.slice(z) < 100, structure=np.ones((3, 3)))
        for sl in ndimage.find_objects(labels):
            extent = max(sl[0].stop - sl[0].start, sl[1].stop - sl[1].start)
            assert extent > spec.max_diameter + 2


def test_reticula_keep_clear_of_each_other():
    spec = PhantomSpec(width=64, height=64, depth=8, n_reticula=20, n_distractors=4, noise_sigma=0, rng_seed=5)
    vol, truth, _ = generate_phantom(spec)
    # every truth component is its own dark connected region, untouched by others
    for z in range(spec.depth):
        labels, _ = ndimage.label(vol.slice(z) < 100, structure=np.ones((3, 3)))
        for c in truth.on_slice(z):
            ids = {labels[y, x] for x, y in c.pixels}
            assert len(ids) == 1
            assert (labels == ids.pop()).sum() == c.area


def test_unplaceable_geometry():
    with pytest.raises(PhantomError, match="unplaceable"):
        generate_phantom(PhantomSpec(width=16, height=16, depth=4, n_reticula=60, n_distractors=0,
                                     reticulum_length_range=(3, 4)))


def test_spec_validation():
    with pytest.raises(ValueError, match="darker"):
        PhantomSpec(reticulum_intensity=200, background_intensity=100)
    with pytest.raises(ValueError, match="max_diameter"):
        PhantomSpec(reticulum_radius_range=(1, 6))
    with pytest.raises(ValueError, match="unknown"):
        PhantomSpec.from_dict({"widht": 3})


def test_reference_spec_matches_acceptance_setup():
    spec = reference_phantom_spec()
    assert (spec.width, spec.height, spec.depth) == (64, 64, 20)
    assert spec.n_reticula == 30 and spec.n_distractors == 10
    assert spec.reticulum_radius_range == (1, 3) and spec.reticulum_length_range == (3, 8)
    assert spec.noise_sigma == 8
    assert PhantomSpec.from_dict(spec.to_dict()) == spec
