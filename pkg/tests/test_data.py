"""PGM/PPM I/O, synthetic generation, augmentation, folds and batching."""

import filecmp
import os

import numpy as np
import pytest

from dtrattunet.data import (
    AugmentationConfig,
    AugmentDraw,
    PNMFormatError,
    SegmentationSample,
    apply_draw,
    augment,
    batch_iter,
    generate_samples,
    generate_synthetic,
    kfold_split,
    read_manifest,
    read_pgm,
    read_ppm,
    write_pgm,
    write_ppm,
)
from dtrattunet.data.pgm import read_pgm_bytes
from dtrattunet.tensor import stream_rng


# --- PGM / PPM ---------------------------------------------------------------------


def test_pgm_header_and_scaling(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    raw = read_pgm(path, "mask")
    assert raw.shape == (2, 2)
    np.testing.assert_allclose(read_pgm(path).ravel(), [0, 1, 128 / 255, 64 / 255], rtol=1e-7)


def test_pgm_header_with_comment():
    assert read_pgm_bytes(b"P5 # made by hand\n3 1 255\n\x01\x02\x03").tolist() == [[1, 2, 3]]


def test_mask_round_trip(tmp_path, rng):
    m = rng.integers(0, 256, size=(7, 5)).astype(np.uint8)
    write_pgm(tmp_path / "m.pgm", m, "mask")
    np.testing.assert_array_equal(read_pgm(tmp_path / "m.pgm", "mask"), m)


def test_image_quantization_error(tmp_path, rng):
    img = rng.uniform(size=(9, 11))
    write_pgm(tmp_path / "i.pgm", img)
    assert np.abs(read_pgm(tmp_path / "i.pgm") - img).max() <= 1 / 510 + 1e-7


@pytest.mark.parametrize(
    "blob",
    [b"P6\n2 2\n255\n" + bytes(12), b"P5\n2 2\n255\n\x00", b"P5\n2 x\n255\n", b"P5\n2 2\n65535\n" + bytes(8)],
)
def test_malformed_pgm(blob):
    with pytest.raises(PNMFormatError):
        read_pgm_bytes(blob)


def test_ppm_round_trip(tmp_path, rng):
    rgb = rng.integers(0, 256, size=(4, 6, 3)).astype(np.uint8)
    write_ppm(tmp_path / "o.ppm", rgb)
    np.testing.assert_array_equal(read_ppm(tmp_path / "o.ppm"), rgb)
    assert (tmp_path / "o.ppm").read_bytes().startswith(b"P6\n6 4\n255\n")


# --- synthetic ---------------------------------------------------------------------


def test_generation_is_byte_identical(tmp_path):
    generate_synthetic(tmp_path / "a", 10, 32, seed=7)
    generate_synthetic(tmp_path / "b", 10, 32, seed=7)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    names = []
    for sub in ("", "images", "lesion", "organ"):
        files = sorted(os.listdir(tmp_path / "a" / sub)) if sub else ["manifest.tsv"]
        for f in files:
            pa, pb = tmp_path / "a" / sub / f, tmp_path / "b" / sub / f
            assert pa.read_bytes() == pb.read_bytes()
            names.append(f)
    assert len(names) == 31 and not cmp.diff_files


@pytest.mark.parametrize("classes", ["binary", "multi"])
def test_containment_and_histogram(classes):
    samples = generate_samples(60, 32, classes, seed=3)
    free = 0
    for s in samples:
        les = s.lesion > 0
        assert not np.any(les & (s.organ == 0))
        assert les.sum() < s.organ.sum() < s.organ.size
        assert s.image.min() >= 0 and s.image.max() <= 1
        free += not les.any()
        if classes == "binary":
            assert set(np.unique(s.lesion)) <= {0, 1}
        else:
            assert set(np.unique(s.lesion)) <= {0, 1, 2}
    assert 3 <= free <= 25  # about a fifth of the samples


def test_generation_rejects_bad_size():
    with pytest.raises(ValueError):
        generate_samples(2, 40)


def test_manifest_format(tmp_path):
    m = generate_synthetic(tmp_path, 10, 32, seed=1)
    lines = (tmp_path / "manifest.tsv").read_text().splitlines()
    assert lines[0] == "dtrattunet-manifest v1"
    assert len(lines) == 11 and all(len(l.split("\t")) == 5 for l in lines[1:])
    back = read_manifest(tmp_path)
    assert back.records == m.records
    assert back.num_folds == 5


def test_manifest_errors(tmp_path):
    generate_synthetic(tmp_path, 5, 32, seed=1)
    path = tmp_path / "manifest.tsv"
    text = path.read_text()
    path.write_text(text.replace("dtrattunet-manifest v1", "other"))
    with pytest.raises(ValueError):
        read_manifest(path)
    path.write_text(text)
    os.remove(tmp_path / "organ" / "s00002.pgm")
    with pytest.raises(FileNotFoundError):
        read_manifest(path)


def test_samples_match_files(tmp_path):
    m = generate_synthetic(tmp_path, 4, 32, seed=9)
    mem = generate_samples(4, 32, seed=9)
    for rec, s in zip(m.records, mem):
        loaded = m.load_sample(rec)
        np.testing.assert_array_equal(loaded.image, s.image)
        np.testing.assert_array_equal(loaded.lesion, s.lesion)


# --- augmentation ------------------------------------------------------------------


def _sample(rng):
    return generate_samples(1, 32, "multi", seed=int(rng.integers(1000)))[0]


def test_identity_draw(rng):
    s = _sample(rng)
    out = apply_draw(s, AugmentDraw(None, False, False))
    np.testing.assert_array_equal(out.image, s.image)
    out = apply_draw(s, AugmentDraw(0.0, False, False))
    np.testing.assert_array_equal(out.lesion, s.lesion)


def test_flip_is_involution(rng):
    s = _sample(rng)
    for d in (AugmentDraw(None, True, False), AugmentDraw(None, False, True)):
        twice = apply_draw(apply_draw(s, d), d)
        np.testing.assert_array_equal(twice.image, s.image)
        np.testing.assert_array_equal(twice.organ, s.organ)
    h = apply_draw(s, AugmentDraw(None, True, False))
    np.testing.assert_array_equal(h.lesion, s.lesion[:, ::-1])


def test_rotation_keeps_classes_and_fills_zero(rng):
    s = _sample(rng)
    r = apply_draw(s, AugmentDraw(30.0, False, False))
    assert set(np.unique(r.lesion)) <= set(np.unique(s.lesion))
    assert r.image[0, 0, 0] == 0 and r.organ[0, 0] == 0


def test_containment_survives_augmentation():
    cfg = AugmentationConfig(p_rotate=0.5, p_hflip=0.5, p_vflip=0.5)
    samples = generate_samples(40, 32, "multi", seed=11)
    for k in range(1000):
        s = samples[k % len(samples)]
        out = augment(s, cfg, stream_rng(k, "aug"))
        assert not np.any((out.lesion > 0) & (out.organ == 0))


def test_augment_is_deterministic_per_stream(rng):
    s = _sample(rng)
    cfg = AugmentationConfig(p_rotate=1.0)
    a = augment(s, cfg, stream_rng(1, "x"))
    b = augment(s, cfg, stream_rng(1, "x"))
    np.testing.assert_array_equal(a.image, b.image)


def test_augmentation_config_validation():
    with pytest.raises(ValueError):
        AugmentationConfig(p_hflip=1.5)
    cfg = AugmentationConfig()
    assert (cfg.p_rotate, cfg.max_angle, cfg.p_hflip, cfg.p_vflip) == (0.10, 35.0, 0.20, 0.20)


def test_draw_frequencies():
    cfg = AugmentationConfig()
    draws = [AugmentDraw.sample(cfg, stream_rng(i, "f")) for i in range(4000)]
    rot = np.mean([d.angle is not None for d in draws])
    hf = np.mean([d.hflip for d in draws])
    assert abs(rot - 0.1) < 0.02 and abs(hf - 0.2) < 0.03
    assert all(-35 <= d.angle <= 35 for d in draws if d.angle is not None)


# --- folds and batches -------------------------------------------------------------


def test_kfold_examples():
    f = kfold_split(10, 5, seed=0)
    assert np.bincount(f).tolist() == [2] * 5
    np.testing.assert_array_equal(f, kfold_split(10, 5, seed=0))
    with pytest.raises(ValueError):
        kfold_split(3, 5)


def test_kfold_partition_property(rng):
    for _ in range(30):
        k = int(rng.integers(2, 8))
        n = int(rng.integers(k, 60))
        f = kfold_split(n, k, int(rng.integers(1 << 30)))
        counts = np.bincount(f, minlength=k)
        assert counts.sum() == n and counts.max() - counts.min() <= 1
        assert f.min() >= 0 and f.max() < k


def test_batch_sizes():
    samples = generate_samples(50, 32, seed=0)
    sizes = [len(b.ids) for b in batch_iter(samples, 16, train=False)]
    assert sizes == [16, 16, 16, 2]
    b = next(batch_iter(samples, 4, train=False, channels=3))
    assert b.images.shape == (4, 3, 32, 32) and b.images.dtype == np.float32
    np.testing.assert_array_equal(b.images[:, 0], b.images[:, 2])
    with pytest.raises(ValueError):
        next(batch_iter([], 4, train=False))


def test_eval_batches_are_repeatable():
    samples = generate_samples(10, 32, seed=0)
    a = [b.images for b in batch_iter(samples, 4, train=False)]
    b = [b.images for b in batch_iter(samples, 4, train=False)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_train_order_varies_by_epoch_but_reproduces():
    samples = generate_samples(20, 32, seed=0)
    order = lambda e: [i for b in batch_iter(samples, 8, train=True, seed=3, epoch=e) for i in b.ids]  # noqa: E731
    assert order(1) == order(1)
    assert order(1) != order(2)
    assert sorted(order(1)) == sorted(s.id for s in samples)


def test_sample_shape_check():
    with pytest.raises(ValueError):
        SegmentationSample("x", np.zeros((4, 4)), np.zeros((4, 5)), np.zeros((4, 4)))
