import math

import numpy as np
import pytest

from realdeconv.dataset import (
    DatasetManifest,
    box_downsample,
    fixture_sources,
    make_dataset,
    motion_kernel,
    realistic_params,
)
from realdeconv.forward import gamma_expand
from realdeconv.imaging import convolve_valid, load_image


@pytest.fixture
def sources():
    rng = np.random.default_rng(0)
    y, x = np.mgrid[0:40, 0:40] / 39
    smooth = 0.5 + 0.4 * np.sin(5 * x) * np.cos(3 * y)
    return [np.clip(smooth, 0, 1), rng.random((40, 40))]


def test_box_downsample():
    img = np.arange(16.0).reshape(4, 4)
    np.testing.assert_array_equal(box_downsample(img), [[2.5, 4.5], [10.5, 12.5]])
    assert box_downsample(np.zeros((5, 7, 3))).shape == (2, 3, 3)


def test_motion_kernel_is_valid():
    for seed in range(5):
        k = motion_kernel(9, seed)
        assert k.shape == (9, 9)
        assert np.all(k >= 0) and abs(k.sum() - 1) < 1e-12
        assert np.count_nonzero(k) > 5
    with pytest.raises(ValueError):
        motion_kernel(8)


def test_single_entry_manifest_and_determinism(tmp_path, sources):
    k = motion_kernel(5, 1)
    m1 = make_dataset(sources[:1], [k], realistic_params(3), tmp_path / "a")
    m2 = make_dataset(sources[:1], [k], realistic_params(3), tmp_path / "b")
    assert len(m1.entries) == 1
    for name in ("gt_000.pgm", "obs_000.pgm", "k00.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    back = DatasetManifest.read(tmp_path / "a" / "manifest.ini")
    assert back.entries[0].params == m1.entries[0].params
    assert back.entries[0].params.sigma == pytest.approx(math.sqrt(5) / 255)
    assert back.settings["clip_percentile"] == "98.0"


def test_saturation_level_is_98th_percentile(tmp_path, sources):
    k = motion_kernel(5, 2)
    m = make_dataset(sources, [k], realistic_params(0), tmp_path)
    for e, src in zip(m.entries, sources):
        linear = box_downsample(gamma_expand(src, 2.2))
        expected = np.percentile(convolve_valid(linear, k), 98)
        assert e.params.c == pytest.approx(expected, rel=1e-12)


def test_entries_load_with_consistent_shapes(tmp_path, sources):
    k = motion_kernel(5, 3)
    m = make_dataset(sources, [k, motion_kernel(3, 4)], realistic_params(0), tmp_path)
    assert len(m.entries) == 4
    assert [e.params.seed for e in m.entries] == [0, 1, 2, 3]
    gt, v, kk = m.entries[0].load()
    assert gt.shape == v.shape == (16, 16)
    # observations keep their 1/256 quantization through the 16-bit file
    np.testing.assert_allclose(v * 256, np.round(v * 256), atol=256 / 65535)


def test_cycle_pairing(tmp_path, sources):
    m = make_dataset(sources, [motion_kernel(3, 0)], realistic_params(), tmp_path, pairing="cycle")
    assert [(e.source, e.kernel_id) for e in m.entries] == [("src00", "k00"), ("src01", "k00")]


def test_empty_inputs_rejected(tmp_path):
    with pytest.raises(ValueError):
        make_dataset([], [np.ones((1, 1))], realistic_params(), tmp_path)


def test_fixture_sources():
    pytest.importorskip("skimage")
    names, imgs = fixture_sources(2, 64)
    assert names == ["camera", "astronaut"]
    assert all(i.shape == (64, 64) and 0 <= i.min() and i.max() <= 1 for i in imgs)


def test_observation_file_matches_memory(tmp_path, sources):
    m = make_dataset(sources[:1], [motion_kernel(5, 5)], realistic_params(1), tmp_path)
    e = m.entries[0]
    linear = box_downsample(gamma_expand(sources[0], 2.2))
    from realdeconv.forward import degrade

    v = degrade(linear, e.load()[2], e.params)
    assert np.max(np.abs(load_image(tmp_path / e.observation) - v)) <= 0.5 / 65535 + 1e-12
