import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dermtriage.errors import InputError, ParameterError
from dermtriage.imaging import (
    AugmentSpec,
    BilinearResizer,
    HistogramEqualizer,
    LesionAugmenter,
    NlmDenoiser,
    NlmParams,
    augment,
    check_image,
    denoise_nlm,
    equalize_histogram,
    load_image,
    resize,
    save_image,
)

from conftest import random_image
from oracles import nlm_reference, nlm_window_bounds, window_mean_reference

# Frozen from the independent brute-force oracle: 3x3 impulse image,
# patch_radius=0, search_radius=1, h=0.5. Off-center pixels all equal
# e^-4 / (8 + e^-4); the center equals 1 / (1 + 8 e^-4).
NLM_3X3_OFF_CENTER = 0.0022842252305338984
NLM_3X3_CENTER = 0.87220069609462592


class TestCheckImage:
    def test_accepts_2d_and_3d(self):
        assert check_image(np.zeros((4, 5))).shape == (4, 5)
        assert check_image(np.zeros((4, 5, 3))).shape == (4, 5, 3)
        assert check_image(np.zeros((4, 5, 1))).shape == (4, 5, 1)

    def test_returns_float64(self):
        out = check_image(np.zeros((2, 2), dtype=np.float32))
        assert out.dtype == np.float64

    def test_rejects_bad_shapes(self):
        with pytest.raises(InputError):
            check_image(np.zeros((2, 2, 2)))
        with pytest.raises(InputError):
            check_image(np.zeros((2, 2, 3, 1)))
        with pytest.raises(InputError):
            check_image(np.zeros(5))

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            check_image(np.zeros((0, 4)))

    def test_rejects_out_of_range(self):
        with pytest.raises(InputError):
            check_image(np.full((2, 2), 1.5))
        with pytest.raises(InputError):
            check_image(np.full((2, 2), -0.1))

    def test_rejects_non_finite(self):
        bad = np.zeros((2, 2))
        bad[0, 0] = np.nan
        with pytest.raises(InputError):
            check_image(bad)


class TestNlmParams:
    def test_defaults(self):
        params = NlmParams()
        assert (params.patch_radius, params.search_radius, params.h) == (3, 10, 0.1)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"patch_radius": -1},
            {"patch_radius": 3, "search_radius": 2},
            {"h": 0.0},
            {"h": -1.0},
        ],
    )
    def test_rejects_bad_params(self, kwargs):
        with pytest.raises(ParameterError):
            NlmParams(**kwargs)


class TestDenoiseNlm:
    def test_frozen_3x3_impulse(self):
        img = np.zeros((3, 3))
        img[1, 1] = 1.0
        out = denoise_nlm(img, NlmParams(patch_radius=0, search_radius=1, h=0.5))
        expected = np.full((3, 3), NLM_3X3_OFF_CENTER)
        expected[1, 1] = NLM_3X3_CENTER
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-9)

    def test_matches_bruteforce_on_random_images(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            img = random_image(rng)
            r = int(rng.integers(0, 3))
            s = int(rng.integers(r, 4))
            h = float(rng.uniform(0.05, 2.0))
            params = NlmParams(patch_radius=r, search_radius=s, h=h)
            expected = np.asarray(nlm_reference(img.tolist(), r, s, h))
            out = denoise_nlm(img, params)
            np.testing.assert_allclose(out, expected, rtol=0, atol=1e-9)

    def test_constant_image_fixed_point(self):
        img = np.full((6, 7), 0.42)
        out = denoise_nlm(img, NlmParams(patch_radius=1, search_radius=2, h=0.3))
        np.testing.assert_allclose(out, img, rtol=0, atol=1e-12)

    def test_large_h_window_mean_limit(self):
        rng = np.random.default_rng(11)
        img = rng.random((7, 5))
        out = denoise_nlm(img, NlmParams(patch_radius=1, search_radius=2, h=1e9))
        expected = np.asarray(window_mean_reference(img.tolist(), 2))
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-6)

    def test_flip_equivariance_is_exact(self):
        rng = np.random.default_rng(13)
        img = rng.random((8, 6))
        params = NlmParams(patch_radius=1, search_radius=3, h=0.2)
        denoised = denoise_nlm(img, params)
        assert np.array_equal(
            denoise_nlm(img[:, ::-1].copy(), params), denoised[:, ::-1]
        )
        assert np.array_equal(
            denoise_nlm(img[::-1, :].copy(), params), denoised[::-1, :]
        )

    def test_weights_normalize_to_one(self):
        # Recompute the normalized weight field per pixel from the oracle
        # pieces: sum_y w(x, y) must be 1 once Z divides out.
        import math

        rng = np.random.default_rng(17)
        img = rng.random((4, 4))
        r, s, h = 1, 2, 0.4

        def at(i, j):
            return img[min(max(i, 0), 3), min(max(j, 0), 3)]

        for i in range(4):
            for j in range(4):
                raw = []
                for di in range(-s, s + 1):
                    for dj in range(-s, s + 1):
                        dist = 0.0
                        for pi in range(-r, r + 1):
                            for pj in range(-r, r + 1):
                                dist += (at(i + pi, j + pj) - at(i + di + pi, j + dj + pj)) ** 2
                        raw.append(math.exp(-dist / (h * h)))
                z = sum(raw)
                assert sum(w / z for w in raw) == pytest.approx(1.0, abs=1e-9)

    def test_range_preservation(self):
        rng = np.random.default_rng(19)
        img = rng.random((6, 6))
        params = NlmParams(patch_radius=1, search_radius=2, h=0.15)
        out = denoise_nlm(img, params)
        bounds = nlm_window_bounds(img.tolist(), 2)
        for i in range(6):
            for j in range(6):
                low, high = bounds[i][j]
                assert low - 1e-12 <= out[i, j] <= high + 1e-12

    def test_pure_and_deterministic(self):
        rng = np.random.default_rng(23)
        img = rng.random((5, 5))
        snapshot = img.copy()
        params = NlmParams(patch_radius=1, search_radius=2, h=0.3)
        first = denoise_nlm(img, params)
        second = denoise_nlm(img, params)
        assert np.array_equal(first, second)
        assert np.array_equal(img, snapshot)

    def test_channels_processed_independently(self):
        rng = np.random.default_rng(29)
        a = rng.random((5, 4))
        b = rng.random((5, 4))
        c = rng.random((5, 4))
        stacked = np.stack([a, b, c], axis=2)
        params = NlmParams(patch_radius=1, search_radius=1, h=0.5)
        out = denoise_nlm(stacked, params)
        assert out.shape == stacked.shape
        for index, channel in enumerate((a, b, c)):
            np.testing.assert_array_equal(out[:, :, index], denoise_nlm(channel, params))

    def test_preserves_input_ndim(self):
        params = NlmParams(patch_radius=0, search_radius=1, h=0.5)
        assert denoise_nlm(np.zeros((3, 3)), params).ndim == 2
        assert denoise_nlm(np.zeros((3, 3, 1)), params).ndim == 3

    def test_default_params_used_when_omitted(self):
        img = np.full((2, 2), 0.5)
        out = denoise_nlm(img)
        np.testing.assert_allclose(out, img, atol=1e-12)


class TestEqualizeHistogram:
    def test_hand_computed_2x2(self):
        img = np.array([[0.0, 0.25], [0.5, 1.0]])
        out = equalize_histogram(img)
        expected = np.array([[0.0, 1.0 / 3.0], [2.0 / 3.0, 1.0]])
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    def test_constant_image_maps_to_zero(self):
        out = equalize_histogram(np.full((4, 4), 0.7))
        np.testing.assert_array_equal(out, np.zeros((4, 4)))

    def test_uniform_histogram_is_near_identity(self):
        # One pixel per bin at the bin center: already equalized, so the
        # output may move each value by at most one quantization step.
        values = (np.arange(256, dtype=np.float64) + 0.5) / 256.0
        img = values.reshape(16, 16)
        out = equalize_histogram(img)
        assert np.max(np.abs(out - img)) <= 1.0 / 255.0

    def test_output_in_unit_range(self):
        rng = np.random.default_rng(31)
        img = rng.random((9, 9))
        out = equalize_histogram(img)
        assert out.min() >= 0.0
        assert out.max() <= 1.0

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_rank_preservation(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.random((6, 6))
        out = equalize_histogram(img)
        flat_in = img.ravel()
        flat_out = out.ravel()
        order = np.argsort(flat_in, kind="mergesort")
        sorted_out = flat_out[order]
        assert np.all(np.diff(sorted_out) >= -1e-15)

    def test_per_channel(self):
        rng = np.random.default_rng(37)
        a = rng.random((5, 5))
        b = rng.random((5, 5))
        stacked = np.stack([a, b, a], axis=2)
        out = equalize_histogram(stacked)
        np.testing.assert_array_equal(out[:, :, 0], equalize_histogram(a))
        np.testing.assert_array_equal(out[:, :, 1], equalize_histogram(b))


class TestResize:
    def test_checkerboard_to_3x3(self):
        img = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = resize(img, 3, 3)
        expected = np.array(
            [[0.0, 0.5, 1.0], [0.5, 0.5, 0.5], [1.0, 0.5, 0.0]]
        )
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    def test_identity_resize_exact(self):
        rng = np.random.default_rng(41)
        img = rng.random((5, 7))
        assert np.array_equal(resize(img, 7, 5), img)

    def test_upscale_from_single_pixel(self):
        out = resize(np.array([[0.3]]), 4, 3)
        np.testing.assert_array_equal(out, np.full((3, 4), 0.3))

    def test_zero_target_rejected(self):
        with pytest.raises(ParameterError):
            resize(np.zeros((2, 2)), 0, 3)
        with pytest.raises(ParameterError):
            resize(np.zeros((2, 2)), 3, 0)

    def test_channels_and_range(self):
        rng = np.random.default_rng(43)
        img = rng.random((6, 5, 3))
        out = resize(img, 11, 9)
        assert out.shape == (9, 11, 3)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_corner_alignment_on_downscale(self):
        rng = np.random.default_rng(47)
        img = rng.random((7, 9))
        out = resize(img, 4, 3)
        assert out[0, 0] == pytest.approx(img[0, 0], abs=1e-12)
        assert out[0, -1] == pytest.approx(img[0, -1], abs=1e-12)
        assert out[-1, 0] == pytest.approx(img[-1, 0], abs=1e-12)
        assert out[-1, -1] == pytest.approx(img[-1, -1], abs=1e-12)


class TestAugment:
    def test_zero_probability_is_identity(self, gradient_image):
        spec = AugmentSpec(per_transform_probability=0.0, seed=5)
        np.testing.assert_array_equal(augment(gradient_image, spec), gradient_image)

    def test_flips_only_give_point_reflection(self, gradient_rgb):
        spec = AugmentSpec(
            rotation_max_degrees=0.0,
            zoom_range=(1.0, 1.0),
            brightness_delta=0.0,
            per_transform_probability=1.0,
            seed=3,
        )
        out = augment(gradient_rgb, spec)
        np.testing.assert_allclose(out, gradient_rgb[::-1, ::-1], rtol=0, atol=1e-12)

    def test_same_seed_same_output(self, gradient_image):
        spec = AugmentSpec(seed=42)
        first = augment(gradient_image, spec)
        second = augment(gradient_image, spec)
        assert np.array_equal(first, second)

    def test_different_seeds_differ(self, gradient_image):
        a = augment(gradient_image, AugmentSpec(seed=1, per_transform_probability=1.0))
        b = augment(gradient_image, AugmentSpec(seed=2, per_transform_probability=1.0))
        assert not np.array_equal(a, b)

    def test_golden_seed_42(self, gradient_image):
        import pathlib

        golden_path = pathlib.Path(__file__).parent / "data" / "augment_seed42.npy"
        out = augment(gradient_image, AugmentSpec(seed=42))
        golden = np.load(golden_path)
        assert np.array_equal(out, golden)

    def test_output_stays_in_range(self, gradient_image):
        for seed in range(10):
            out = augment(
                gradient_image, AugmentSpec(seed=seed, per_transform_probability=1.0)
            )
            assert out.min() >= 0.0 and out.max() <= 1.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"rotation_max_degrees": -1.0},
            {"zoom_range": (0.0, 1.2)},
            {"zoom_range": (1.3, 1.2)},
            {"brightness_delta": -0.5},
            {"per_transform_probability": 1.5},
        ],
    )
    def test_bad_spec_rejected(self, kwargs):
        with pytest.raises(ParameterError):
            AugmentSpec(**kwargs)


class TestTransformers:
    def test_denoiser_matches_function(self):
        rng = np.random.default_rng(53)
        img = rng.random((4, 4))
        est = NlmDenoiser(patch_radius=1, search_radius=2, h=0.3)
        expected = denoise_nlm(img, NlmParams(1, 2, 0.3))
        np.testing.assert_array_equal(est.fit_transform(img), expected)

    def test_get_set_params_roundtrip(self):
        est = NlmDenoiser(patch_radius=2, search_radius=4, h=0.7)
        params = est.get_params()
        assert params == {"patch_radius": 2, "search_radius": 4, "h": 0.7}
        est.set_params(h=0.9)
        assert est.h == 0.9

    def test_sklearn_clone(self):
        from sklearn.base import clone

        est = BilinearResizer(width=32, height=16)
        copy = clone(est)
        assert copy.get_params() == est.get_params()

    def test_bad_params_raise_on_fit(self):
        with pytest.raises(ParameterError):
            NlmDenoiser(patch_radius=-1).fit()
        with pytest.raises(ParameterError):
            BilinearResizer(width=0).fit()

    def test_list_batch(self):
        rng = np.random.default_rng(59)
        frames = [rng.random((3, 3)), rng.random((4, 4))]
        out = HistogramEqualizer().fit_transform(frames)
        assert isinstance(out, list)
        assert out[0].shape == (3, 3) and out[1].shape == (4, 4)

    def test_4d_batch(self):
        rng = np.random.default_rng(61)
        batch = rng.random((3, 5, 5, 3))
        out = BilinearResizer(width=4, height=4).fit_transform(batch)
        assert out.shape == (3, 4, 4, 3)

    def test_augmenter_offsets_seed_per_item(self):
        rng = np.random.default_rng(67)
        img = rng.random((6, 6))
        est = LesionAugmenter(seed=9)
        out = est.fit_transform([img, img])
        np.testing.assert_array_equal(out[0], augment(img, AugmentSpec(seed=9)))
        np.testing.assert_array_equal(out[1], augment(img, AugmentSpec(seed=10)))

    def test_pipeline_composes(self):
        from sklearn.pipeline import Pipeline

        rng = np.random.default_rng(71)
        img = rng.random((6, 6))
        pipe = Pipeline(
            [
                ("denoise", NlmDenoiser(patch_radius=0, search_radius=1, h=0.5)),
                ("equalize", HistogramEqualizer()),
                ("resize", BilinearResizer(width=4, height=4)),
            ]
        )
        out = pipe.fit_transform(img)
        assert out.shape == (4, 4)


class TestFileRoundtrip:
    def test_png_roundtrip(self, tmp_path, gradient_image):
        path = tmp_path / "img.png"
        save_image(path, gradient_image)
        loaded = load_image(path)
        assert loaded.shape == gradient_image.shape
        assert np.max(np.abs(loaded - gradient_image)) <= 0.5 / 255.0

    def test_rgb_roundtrip(self, tmp_path, gradient_rgb):
        path = tmp_path / "img.png"
        save_image(path, gradient_rgb)
        loaded = load_image(path)
        assert loaded.shape == gradient_rgb.shape
        assert np.max(np.abs(loaded - gradient_rgb)) <= 0.5 / 255.0

    def test_jpeg_loads(self, tmp_path, gradient_rgb):
        path = tmp_path / "img.jpg"
        save_image(path, gradient_rgb)
        loaded = load_image(path)
        assert loaded.shape == gradient_rgb.shape
        assert loaded.min() >= 0.0 and loaded.max() <= 1.0
