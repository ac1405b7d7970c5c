import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from distillkit.data_io import generate_smooth_covers
from distillkit.errors import ConfigError, DataError
from distillkit.nn import Conv2D, conv_forward, conv_output_size
from distillkit.residuals import (Predictor, QuantizerParams, cooccurrence_features, detect,
                                  directional_residual, embed, extract_features, load_filter_spec,
                                  quantize_truncate, residual_first_order, residual_map_scan,
                                  residual_minmax, residual_predict, residual_second_order)

images = arrays(np.float64, st.tuples(st.integers(5, 9), st.integers(5, 9)), elements=st.floats(-100, 100))


class TestEmbed:
    def test_decomposition_and_count(self, rng):
        cover = rng.integers(0, 256, (16, 16)).astype(np.uint8)
        stego, sig = embed(cover, 0.3, seed=1)
        assert np.array_equal(stego.astype(int) - cover.astype(int), sig.changes)
        assert np.count_nonzero(sig.changes) == int(0.3 * 256) == sig.sigma
        assert set(np.unique(sig.changes)) <= {-1, 0, 1}

    def test_positions_match_support(self, rng):
        cover = rng.integers(0, 256, (8, 8)).astype(np.uint8)
        _, sig = embed(cover, 0.5, seed=3)
        mask = np.zeros((8, 8), bool)
        mask[sig.positions[:, 0], sig.positions[:, 1]] = True
        assert np.array_equal(mask, sig.changes != 0)

    def test_overflow_rule(self):
        cover = np.zeros((6, 6), np.uint8)
        cover[:3] = 255
        stego, sig = embed(cover, 1.0, seed=0)
        assert np.all(sig.changes[:3] == -1) and np.all(sig.changes[3:] == 1)
        assert stego.min() >= 0 and stego.max() <= 255

    def test_empty_selection_rejected(self):
        with pytest.raises(ConfigError):
            embed(np.full((3, 3), 9, np.uint8), 0.1)

    def test_empty_image_rejected(self):
        with pytest.raises(DataError):
            embed(np.zeros((0, 0), np.uint8), 0.5)

    @pytest.mark.parametrize("mode", ["uniform", "texture"])
    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), rate=st.floats(0.05, 1.0))
    def test_signs_balanced(self, mode, seed, rate):
        cover = np.random.default_rng(seed).integers(1, 255, (12, 12)).astype(np.uint8)
        _, sig = embed(cover, rate, seed=seed, mode=mode)
        q = sig.sigma
        assert abs(int((sig.changes == 1).sum()) - int((sig.changes == -1).sum())) <= max(1, 0.05 * q)

    def test_texture_mode_prefers_busy_regions(self, rng):
        cover = np.full((16, 16), 128, np.uint8)
        cover[:, 8:] = rng.integers(0, 256, (16, 8))
        _, sig = embed(cover, 0.25, mode="texture")
        assert (sig.changes[:, 8:] != 0).sum() > (sig.changes[:, :8] != 0).sum()


class TestPredictor:
    vertical = Predictor([(-1, 0), (1, 0)], [0.5, 0.5])

    def test_constant_image(self):
        p = Predictor([(-1, -1), (0, 1), (1, 0)], [0.2, 1.3, -0.4])
        assert not residual_predict(np.full((6, 6), 37.0), p).any()

    def test_column_linear_image(self):
        z = np.tile(np.arange(7.0)[:, None] * 3 + 1, (1, 5))
        assert not residual_predict(z, self.vertical).any()

    def test_centre_rejected(self):
        with pytest.raises(ConfigError):
            Predictor([(0, 0), (0, 1)], [1, 1])
        with pytest.raises(ConfigError):
            directional_residual(np.zeros((4, 4)), [(0, 0)], [1.0])

    def test_window_too_large(self):
        with pytest.raises(ConfigError):
            residual_predict(np.zeros((2, 5)), self.vertical)

    def test_stego_residual_is_signal_residual(self, rng):
        # cover exactly predicted by the vertical pair, so residual(Z) = f(M^E) - lam E
        cover = np.tile(np.arange(10)[:, None] * 10 + 30, (1, 10)).astype(np.uint8)
        stego, sig = embed(cover, 0.4, seed=2)
        lhs = residual_predict(stego, self.vertical)
        e = sig.changes.astype(np.float64)
        rhs = np.empty_like(lhs)
        for i in range(lhs.shape[0]):
            for j in range(lhs.shape[1]):
                rhs[i, j] = 0.5 * e[i, j + 1] + 0.5 * e[i + 2, j + 1] - 1.0 * e[i + 1, j + 1]
        assert np.array_equal(lhs, rhs)

    @given(images, images, st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, z1, z2, a, b):
        shape = (min(z1.shape[0], z2.shape[0]), min(z1.shape[1], z2.shape[1]))
        z1, z2 = z1[:shape[0], :shape[1]], z2[:shape[0], :shape[1]]
        p = Predictor([(-1, 0), (0, 1), (1, 1)], [0.3, -1.2, 0.7])
        lhs = residual_predict(a * z1 + b * z2, p)
        rhs = a * residual_predict(z1, p) + b * residual_predict(z2, p)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-9)


class TestHandcrafted:
    def test_first_order(self, rng):
        assert not residual_first_order(np.full((3, 4), 8)).any()
        ramp = np.tile(np.arange(6.0), (3, 1))
        np.testing.assert_array_equal(residual_first_order(ramp), np.ones((3, 5)))
        z = rng.integers(0, 256, (4, 4))
        oracle = [[float(z[i, j + 1]) - float(z[i, j]) for j in range(3)] for i in range(4)]
        np.testing.assert_array_equal(residual_first_order(z), oracle)
        with pytest.raises(DataError):
            residual_first_order(np.zeros((3, 1)))

    def test_second_order_constant(self):
        v = 13.0
        coeffs = 2 - 1 - 1 + 2 - 4
        np.testing.assert_array_equal(residual_second_order(np.full((5, 5), v)), np.full((3, 3), coeffs * v))
        assert coeffs * v == -2 * v

    def test_second_order_oracle(self, rng):
        z = rng.integers(0, 256, (5, 5)).astype(np.float64)
        assert not residual_second_order(np.zeros((4, 4))).any()
        out = residual_second_order(z)
        for i in range(1, 4):
            for j in range(1, 4):
                expect = (2 * z[i, j - 1] - z[i - 1, j - 1] - z[i + 1, j - 1] + 2 * z[i + 1, j] - 4 * z[i, j])
                assert out[i - 1, j - 1] == expect
        with pytest.raises(DataError):
            residual_second_order(np.zeros((2, 5)))

    def test_minmax(self):
        assert not residual_minmax(np.full((4, 4), 5.0), "min").any()
        assert not residual_minmax(np.tile(np.arange(5.0), (4, 1)), "max").any()
        saddle = np.outer(np.arange(3.0), np.arange(3.0)) + np.array([[0, 0, 0], [0, 0, 3], [0, 0, 0]])
        h = saddle[1, 0] + saddle[1, 2] - 2 * saddle[1, 1]
        v = saddle[0, 1] + saddle[2, 1] - 2 * saddle[1, 1]
        assert residual_minmax(saddle, "min")[0, 0] == min(h, v)
        assert residual_minmax(saddle, "max")[0, 0] == max(h, v)
        with pytest.raises(ConfigError):
            residual_minmax(saddle, "median")

    def test_directional_reductions(self, rng):
        z = rng.normal(size=(6, 7))
        assert not directional_residual(np.full((5, 5), 4.0), [(0, 1), (1, 1)], [2.0, -3.0]).any()
        single = directional_residual(z, [(0, 1)], [2.5])
        np.testing.assert_allclose(single, 2.5 * residual_first_order(z)[1:-1, 1:], rtol=0, atol=1e-12)


class TestQuantizer:
    def test_spot_values(self):
        assert quantize_truncate(np.array([7.0]), QuantizerParams(2.0, 2))[0] == 2
        assert quantize_truncate(np.array([0.0]), QuantizerParams(1.5, 4))[0] == 0
        np.testing.assert_array_equal(quantize_truncate(np.array([0.5, -0.5, 1.5, -2.5]), QuantizerParams(1, 5)),
                                      [1, -1, 2, -3])

    @given(arrays(np.float64, 50, elements=st.floats(-1e6, 1e6)), st.floats(0.1, 10), st.integers(1, 6))
    def test_bounded_and_odd(self, r, c, t):
        q = QuantizerParams(c, t)
        out = quantize_truncate(r, q)
        assert out.dtype == np.int64
        assert np.all(np.abs(out) <= t)
        assert np.array_equal(quantize_truncate(-r, q), -out)

    def test_strict_step_rule(self):
        QuantizerParams(3.0, 2).validate(lam=2.0, strict=True)
        QuantizerParams(2.0, 2).validate(lam=1.0, strict=True)
        with pytest.raises(ConfigError):
            QuantizerParams(1.5, 2).validate(lam=1.0, strict=True)
        with pytest.raises(ConfigError):
            QuantizerParams(2.5, 2).validate(lam=2.0, strict=True)
        with pytest.raises(ConfigError):
            QuantizerParams(0.0, 2).validate()


class TestScan:
    def test_identity_filter(self, rng):
        z = rng.integers(0, 256, (5, 6))
        np.testing.assert_array_equal(residual_map_scan(z, [[1.0]]), z)

    def test_dims(self, rng):
        assert residual_map_scan(rng.normal(size=(6, 6)), np.ones((3, 3)), 2).shape == (2, 2)

    def test_equals_conv_forward(self, rng):
        z = rng.normal(size=(9, 8))
        f = rng.normal(size=(3, 3))
        layer = Conv2D(1, 1, 3, stride=2)
        layer.params["weight"] = f[None, None].copy()
        assert np.array_equal(residual_map_scan(z, f, 2), conv_forward(z[None], layer)[0])

    def test_too_large(self):
        with pytest.raises(ConfigError):
            residual_map_scan(np.zeros((3, 3)), np.ones((4, 4)))

    def test_filter_spec_file(self, tmp_path, rng):
        path = tmp_path / "f.json"
        path.write_text(json.dumps({"offsets": [[0, 1], [1, 0]], "weights": [0.5, 0.5]}))
        p = load_filter_spec(path)
        assert p.lam == 1.0
        path.write_text(json.dumps({"offsets": [[0, 1]], "weights": [1], "colour": 1}))
        with pytest.raises(ConfigError):
            load_filter_spec(path)


def enumerate_tuples(rq, t, d, horizontal):
    counts = np.zeros((2 * t + 1) ** d)
    h, w = rq.shape
    for i in range(h):
        for j in range(w):
            cells = [(i, j + p) if horizontal else (i + p, j) for p in range(d)]
            if all(a < h and b < w for a, b in cells):
                idx = 0
                for a, b in cells:
                    idx = idx * (2 * t + 1) + rq[a, b] + t
                counts[idx] += 1
    return counts / counts.sum()


class TestCooccurrence:
    def test_all_zero(self):
        f = cooccurrence_features(np.zeros((4, 4), np.int64), order=2, t_trunc=2)
        assert f.shape == (25,) and f[12] == 1.0 and f.sum() == 1.0

    def test_default_bins(self):
        assert cooccurrence_features(np.zeros((3, 3), np.int64)).shape == (125,)

    @pytest.mark.parametrize("direction", ["horizontal", "vertical"])
    def test_known_map(self, direction):
        rq = np.array([[0, 1, -1, 2], [2, 2, 0, -2], [-1, 0, 0, 1], [1, -2, 2, 0]])
        f = cooccurrence_features(rq, order=3, direction=direction, t_trunc=2)
        np.testing.assert_array_equal(f, enumerate_tuples(rq, 2, 3, direction == "horizontal"))

    @settings(max_examples=50)
    @given(arrays(np.int64, st.tuples(st.integers(3, 8), st.integers(3, 8)), elements=st.integers(-2, 2)),
           st.integers(2, 3))
    def test_sums_to_one(self, rq, d):
        assert abs(cooccurrence_features(rq, order=d).sum() - 1.0) <= 1e-12

    def test_errors(self):
        with pytest.raises(DataError):
            cooccurrence_features(np.zeros((4, 2), np.int64), order=3)
        with pytest.raises(DataError):
            cooccurrence_features(np.full((4, 4), 3), t_trunc=2)
        with pytest.raises(ConfigError):
            cooccurrence_features(np.zeros((4, 4), np.int64), order=1)


class TestDetect:
    def test_separable(self, rng):
        a = rng.normal(size=(20, 3))
        b = rng.normal(size=(20, 3)) + 10
        res = detect(a[:10], b[:10], np.vstack([a[10:], b[10:]]), np.repeat([0, 1], 10))
        assert res.accuracy == 1.0

    def test_identical_classes_at_chance(self, rng):
        f = rng.normal(size=(200, 4))
        res = detect(f[:50], f[:50], f[100:], np.repeat([0, 1], 50))
        assert abs(res.accuracy - 0.5) <= 0.1

    def test_single_class_rejected(self, rng):
        with pytest.raises(ConfigError):
            detect(rng.normal(size=(5, 2)), rng.normal(size=(1, 2)), rng.normal(size=(2, 2)))

    def test_extract_dimensions(self):
        cover = generate_smooth_covers(1, 16, seed=0)[0]
        f = extract_features(cover, kinds=("first", "min", "max"), order=3, directions=("horizontal", "vertical"))
        assert f.shape == (3 * 2 * 125,)


def test_residual_dims_follow_output_size_rule():
    z = np.zeros((11, 9))
    p = Predictor([(-2, 0), (1, 1)], [1, 1])
    assert residual_predict(z, p).shape == conv_output_size(11, 9, 5, 1)
    assert residual_second_order(z).shape == conv_output_size(11, 9, 3, 1)
