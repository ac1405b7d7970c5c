import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from distillkit.data_io import (Dataset, SyntheticSpec, generate_smooth_covers, generate_synthetic,
                                load_image, load_manifest, read_manifest, resize, save_image, split,
                                split_indices, write_manifest)
from distillkit.errors import ConfigError, DataError, FormatError


class TestImages:
    def test_single_pixel_pgm(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n1 1\n255\n\x00")
        assert np.array_equal(load_image(p), [[0]])

    def test_known_bytes(self, tmp_path):
        p = tmp_path / "b.pgm"
        p.write_bytes(b"P5\n2 2\n255\n\x01\x02\xfe\xff")
        img = load_image(p)
        assert img.dtype == np.uint8
        assert np.array_equal(img, [[1, 2], [254, 255]])

    @pytest.mark.parametrize("ext", [".pgm", ".png"])
    def test_round_trip(self, tmp_path, rng, ext):
        img = rng.integers(0, 256, (7, 5)).astype(np.uint8)
        p = tmp_path / f"x{ext}"
        save_image(p, img)
        assert np.array_equal(load_image(p), img)

    def test_colour_converted(self, tmp_path):
        p = tmp_path / "c.png"
        Image.new("RGB", (2, 2), (90, 90, 90)).save(p)
        assert np.array_equal(load_image(p), np.full((2, 2), 90))

    def test_corrupt(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"not an image")
        with pytest.raises(FormatError, match="bad.pgm"):
            load_image(p)
        with pytest.raises(FormatError):
            load_image(tmp_path / "missing.png")


def bilinear_oracle(img, th, tw):
    h, w = img.shape
    out = np.empty((th, tw))
    for i in range(th):
        for j in range(tw):
            y = min(max((i + 0.5) * h / th - 0.5, 0), h - 1)
            x = min(max((j + 0.5) * w / tw - 0.5, 0), w - 1)
            y0, x0 = int(y), int(x)
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            dy, dx = y - y0, x - x0
            out[i, j] = ((1 - dy) * ((1 - dx) * img[y0, x0] + dx * img[y0, x1])
                         + dy * ((1 - dx) * img[y1, x0] + dx * img[y1, x1]))
    return np.floor(out + 0.5)


class TestResize:
    def test_identity(self, rng):
        img = rng.integers(0, 256, (6, 6)).astype(np.uint8)
        assert np.array_equal(resize(img, 6), img)

    @given(st.integers(0, 255), st.integers(1, 12))
    def test_constant(self, v, t):
        assert np.all(resize(np.full((5, 3), v, np.uint8), t) == v)

    def test_checkerboard(self):
        board = np.array([[0, 255], [255, 0]], np.uint8)
        out = resize(board, 4)
        assert np.array_equal(out, bilinear_oracle(board.astype(float), 4, 4))
        assert out[1, 1] == 96 and out[0, 0] == 0

    def test_random_against_oracle(self, rng):
        img = rng.integers(0, 256, (5, 7)).astype(np.uint8)
        assert np.array_equal(resize(img, (9, 4)), bilinear_oracle(img.astype(float), 9, 4))


class TestSplit:
    def test_one_to_ten(self):
        labels = np.arange(110) % 2
        tr, te = split_indices(labels, 1 / 11, seed=0)
        assert (len(te), len(tr)) == (10, 100)

    def test_published_split_counts(self):
        labels = np.array([1] * (394 + 3922) + [0] * (236 + 1363))
        _, te = split_indices(labels, 630 / 5915, seed=0)
        assert len(te) == 630

    @settings(max_examples=50)
    @given(st.integers(2, 60), st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 100))
    def test_partition_and_stratified(self, n0, n1, f, seed):
        labels = np.array([0] * n0 + [1] * n1)
        tr, te = split_indices(labels, f, seed)
        assert sorted(np.concatenate([tr, te]).tolist()) == list(range(n0 + n1))
        assert abs(len(te) - int(np.floor(f * (n0 + n1) + 0.5))) <= 1
        for c, n in ((0, n0), (1, n1)):
            assert abs((labels[te] == c).sum() - f * n) <= 1
        tr2, te2 = split_indices(labels, f, seed)
        assert np.array_equal(te, te2) and np.array_equal(tr, tr2)

    def test_tiny_class(self):
        with pytest.raises(DataError):
            split_indices(np.array([0, 0, 0, 1]), 0.5, 0)

    def test_bad_fraction(self):
        with pytest.raises(ConfigError):
            split_indices(np.array([0, 0, 1, 1]), 1.0, 0)

    def test_dataset_split(self):
        ds = generate_synthetic(SyntheticSpec(size=8), 12)
        tr, te = split(ds, 0.25, seed=1)
        assert len(tr) + len(te) == 24 and te.split == "test"


class TestManifest:
    def test_round_trip_and_disagreement(self, tmp_path, rng):
        for i in range(4):
            save_image(tmp_path / f"{i}.pgm", rng.integers(0, 256, (4, 4)).astype(np.uint8))
        (tmp_path / "m.csv").write_text("path,label_a,label_b\n0.pgm,0,0\n1.pgm,1,1\n2.pgm,0,1\n3.pgm,1,1\n")
        items, report = read_manifest(tmp_path / "m.csv")
        assert [lbl for _, lbl in items] == [0, 1, 1]
        assert report.excluded_disagreement == 1
        ds, _ = load_manifest(tmp_path / "m.csv")
        assert len(ds) == 3 and ds.images.shape == (3, 4, 4)
        write_manifest(tmp_path / "n.csv", items)
        assert read_manifest(tmp_path / "n.csv")[0] == items

    def test_empty(self, tmp_path):
        (tmp_path / "e.csv").write_text("path,label\n")
        with pytest.raises(ConfigError):
            load_manifest(tmp_path / "e.csv")

    def test_bad_label(self, tmp_path):
        (tmp_path / "b.csv").write_text("path,label\nx.pgm,3\n")
        with pytest.raises(DataError):
            read_manifest(tmp_path / "b.csv")


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(seed=3), 5)
        b = generate_synthetic(SyntheticSpec(seed=3), 5)
        assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)

    def test_range_and_labels(self):
        ds = generate_synthetic(SyntheticSpec(), 20)
        assert ds.images.dtype == np.uint8 and set(ds.labels.tolist()) == {0, 1}

    def test_bright_blobs_raise_mean(self):
        ds = generate_synthetic(SyntheticSpec(), 200)
        means = ds.images.reshape(len(ds), -1).mean(axis=1)
        assert means[ds.labels == 1].mean() > means[ds.labels == 0].mean()

    def test_threshold_on_mean_beats_chance(self):
        train = generate_synthetic(SyntheticSpec(seed=0), 200)
        test = generate_synthetic(SyntheticSpec(seed=1), 200)
        m_tr = train.images.reshape(len(train), -1).mean(axis=1)
        thr = 0.5 * (m_tr[train.labels == 0].mean() + m_tr[train.labels == 1].mean())
        m_te = test.images.reshape(len(test), -1).mean(axis=1)
        assert np.mean((m_te > thr) == test.labels) > 0.6

    def test_degenerate_warns(self):
        with pytest.warns(UserWarning):
            SyntheticSpec(blob_intensity=0.0).validate()
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            SyntheticSpec().validate()

    def test_smooth_covers(self):
        covers = generate_smooth_covers(3, 16, seed=0)
        assert covers.shape == (3, 16, 16) and covers.dtype == np.uint8
        # low-noise gradients: neighbouring pixels rarely differ by more than a couple of levels
        assert np.abs(np.diff(covers.astype(int), axis=1)).mean() < 3


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 3, 3), np.uint8), [0, 2])
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 3, 3), np.uint8), [0])
    ds = Dataset(np.full((1, 2, 2), 128, np.uint8), [1])
    assert np.array_equal(ds.as_batch(), np.zeros((1, 1, 2, 2)))
