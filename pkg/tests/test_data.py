"""Data pipeline tests: decoding, augmentation, preprocessing, manifests,
synthetic textures, and batch iteration determinism."""

import warnings

import numpy as np
import pytest
from PIL import Image

from resnetplus import data as D


def rand_image(rng, h=48, w=48):
    return rng.random((h, w, 3)).astype(np.float32)


def write_png(path, arr_uint8):
    Image.fromarray(arr_uint8).save(path)


class TestDecodeResize:
    def test_decode_matches_raw_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        raw = rng.integers(0, 256, size=(40, 36, 3), dtype=np.uint8)
        p = tmp_path / "img.png"
        write_png(p, raw)
        img = D.decode_image(p)
        assert img.dtype == np.float32
        np.testing.assert_array_equal(img, raw.astype(np.float32) / 255.0)

    def test_decode_bad_file_raises(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"this is not an image")
        with pytest.raises(D.DataError, match="junk.png"):
            D.decode_image(p)

    def test_resize_same_size_is_identity(self):
        img = rand_image(np.random.default_rng(1))
        out = D.resize_bilinear(img, 48, 48)
        assert out is img

    def test_resize_constant_stays_constant(self):
        img = np.full((40, 40, 3), 0.37, np.float32)
        out = D.resize_bilinear(img, 64, 56)
        assert out.shape == (64, 56, 3)
        np.testing.assert_allclose(out, 0.37, atol=1e-6)

    def test_resize_preserves_linear_ramp(self):
        # bilinear interpolation reproduces an affine function of position,
        # so away from the clamped border the upsampled ramp matches the
        # half-pixel-center coordinate map exactly
        h, w = 40, 40
        ramp = np.linspace(0.0, 1.0, w, dtype=np.float32)
        img = np.stack([np.broadcast_to(ramp, (h, w))] * 3, axis=2)
        out = D.resize_bilinear(img.astype(np.float32), 40, 80)
        xs = (np.arange(80) + 0.5) * w / 80 - 0.5
        expect = xs / (w - 1)
        np.testing.assert_allclose(out[5, 2:-2, 0], expect[2:-2], atol=1e-5)
        assert np.all(np.diff(out[0, :, 0]) >= -1e-6)


class TestAugment:
    def test_hflip_is_involution(self):
        img = rand_image(np.random.default_rng(2))
        pol = D.AugmentPolicy(enabled=("hflip",), probs={"hflip": 1.0})
        once = D.augment(img, pol, np.random.default_rng(0))
        twice = D.augment(once, pol, np.random.default_rng(0))
        np.testing.assert_array_equal(twice, img)

    def test_zero_probability_is_identity(self):
        img = rand_image(np.random.default_rng(3))
        pol = D.AugmentPolicy(probs={t: 0.0 for t in D.ALL_TRANSFORMS})
        out = D.augment(img, pol, np.random.default_rng(0))
        np.testing.assert_array_equal(out, img)

    def test_disabled_policy_is_identity(self):
        img = rand_image(np.random.default_rng(4))
        out = D.augment(img, D.AugmentPolicy.none(), np.random.default_rng(0))
        np.testing.assert_array_equal(out, img)

    def test_fixed_seed_replays_exactly(self):
        img = rand_image(np.random.default_rng(5))
        pol = D.AugmentPolicy()
        a = D.augment(img, pol, np.random.default_rng(123))
        b = D.augment(img, pol, np.random.default_rng(123))
        assert a.tobytes() == b.tobytes()

    def test_pixels_stay_in_unit_range(self):
        pol = D.AugmentPolicy(probs={t: 1.0 for t in D.ALL_TRANSFORMS})
        rng = np.random.default_rng(6)
        for trial in range(10):
            img = rand_image(rng)
            out = D.augment(img, pol, np.random.default_rng(trial))
            assert out.shape == img.shape
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_unknown_transform_rejected(self):
        with pytest.raises(ValueError, match="sharpen"):
            D.AugmentPolicy(enabled=("hflip", "sharpen"))


class TestPreprocess:
    def test_eval_is_deterministic_and_shaped(self):
        img = rand_image(np.random.default_rng(7), 60, 80)
        a = D.preprocess(img, "eval", 48)
        b = D.preprocess(img, "eval", 48)
        assert a.shape == (3, 48, 48)
        assert a.dtype == np.float32
        assert a.flags["C_CONTIGUOUS"]
        assert a.tobytes() == b.tobytes()

    def test_normalize_centers_gray(self):
        # (0.5 - 0.5) / 0.25 == 0 everywhere, even through the eval resize
        img = np.full((64, 64, 3), 0.5, np.float32)
        out = D.preprocess(img, "eval", 32, mean=(0.5, 0.5, 0.5),
                           std=(0.25, 0.25, 0.25))
        np.testing.assert_allclose(out, 0.0, atol=1e-5)

    def test_per_channel_stats_applied(self):
        img = np.zeros((64, 64, 3), np.float32)
        img[:, :, 0], img[:, :, 1], img[:, :, 2] = 0.2, 0.5, 0.8
        out = D.preprocess(img, "eval", 32, mean=(0.2, 0.5, 0.8),
                           std=(0.1, 0.2, 0.4))
        np.testing.assert_allclose(out, 0.0, atol=1e-5)

    def test_train_without_policy_is_plain_resize(self):
        img = rand_image(np.random.default_rng(8), 32, 32)
        out = D.preprocess(img, "train", 32, mean=(0.0, 0.0, 0.0),
                           std=(1.0, 1.0, 1.0), policy=D.AugmentPolicy.none())
        np.testing.assert_array_equal(out, img.transpose(2, 0, 1))

    def test_train_replay_with_same_stream(self):
        img = rand_image(np.random.default_rng(9), 64, 64)
        pol = D.AugmentPolicy()
        a = D.preprocess(img, "train", 48, policy=pol,
                         rng=np.random.default_rng(42))
        b = D.preprocess(img, "train", 48, policy=pol,
                         rng=np.random.default_rng(42))
        assert a.tobytes() == b.tobytes()

    def test_small_image_error_names_file(self):
        img = np.zeros((16, 64, 3), np.float32)
        with pytest.raises(D.DataError, match="lesion_007.png"):
            D.preprocess(img, "eval", 32, name="lesion_007.png")

    def test_wrong_channel_count_rejected(self):
        img = np.zeros((64, 64, 4), np.float32)
        with pytest.raises(D.DataError, match="expected"):
            D.preprocess(img, "eval", 32)

    def test_bad_mode_rejected(self):
        img = np.zeros((64, 64, 3), np.float32)
        with pytest.raises(ValueError, match="mode"):
            D.preprocess(img, "test", 32)

    def test_train_needs_rng_for_random_crop(self):
        img = np.zeros((64, 64, 3), np.float32)
        with pytest.raises(ValueError, match="rng"):
            D.preprocess(img, "train", 32, policy=D.AugmentPolicy())


class TestSynth:
    def test_balanced_counts_and_range(self):
        ds = D.synth_dataset(3, 20, size=32, seed=0)
        assert len(ds) == 60
        assert ds.class_counts() == [20, 20, 20]
        for s in ds.samples[:6]:
            assert s.image.shape == (32, 32, 3)
            assert s.image.min() >= 0.0 and s.image.max() <= 1.0

    def test_deterministic_generation(self):
        a = D.synth_dataset(3, 5, size=32, seed=7)
        b = D.synth_dataset(3, 5, size=32, seed=7)
        for sa, sb in zip(a.samples, b.samples):
            assert sa.image.tobytes() == sb.image.tobytes()
        c = D.synth_dataset(3, 5, size=32, seed=8)
        assert any(sa.image.tobytes() != sc.image.tobytes()
                   for sa, sc in zip(a.samples, c.samples))

    def test_patch_means_are_linearly_separable(self):
        # coarse 8x8 patch means must already separate the classes, so a
        # closed-form least squares probe should score >90%
        train = D.synth_dataset(3, 40, size=32, seed=1)
        test = D.synth_dataset(3, 20, size=32, seed=99)

        def feats(ds):
            rows = []
            for s in ds.samples:
                g = s.image.mean(axis=2)
                patches = g.reshape(4, 8, 4, 8).mean(axis=(1, 3))
                rows.append(patches.reshape(-1))
            return np.array(rows)

        xtr = np.hstack([feats(train), np.ones((len(train), 1))])
        ytr = np.eye(3)[[s.label for s in train.samples]]
        w, *_ = np.linalg.lstsq(xtr, ytr, rcond=None)
        xte = np.hstack([feats(test), np.ones((len(test), 1))])
        pred = np.argmax(xte @ w, axis=1)
        truth = np.array([s.label for s in test.samples])
        assert (pred == truth).mean() > 0.90

    def test_three_split_manifest_sizes(self):
        m = D.make_synth_manifest(3, 60, size=32, seed=0)
        assert len(m.split("train")) == 60
        assert len(m.split("val")) == 30
        assert len(m.split("test")) == 30
        assert m.class_names == ["class0", "class1", "class2"]
        with pytest.raises(ValueError, match="divide"):
            D.make_synth_manifest(3, 50)

    def test_validation(self):
        with pytest.raises(ValueError):
            D.synth_dataset(1, 5)
        with pytest.raises(ValueError):
            D.synth_dataset(3, 0)
        with pytest.raises(ValueError):
            D.synth_dataset(3, 5, size=16)


class TestManifest:
    @pytest.fixture
    def tree(self, tmp_path):
        rng = np.random.default_rng(0)
        for split, count in (("train", 4), ("val", 2)):
            for cls in ("bcc", "akiec"):
                d = tmp_path / "ds" / split / cls
                d.mkdir(parents=True)
                for i in range(count):
                    raw = rng.integers(0, 256, (40, 40, 3), dtype=np.uint8)
                    write_png(d / f"img{i:02d}.png", raw)
        return tmp_path / "ds"

    def test_scan_orders_and_counts(self, tree):
        m = D.scan_dataset(tree)
        assert m.class_names == ["akiec", "bcc"]  # sorted
        train = m.split("train")
        assert len(train) == 8
        names = [s.name for s in train.samples]
        assert names == sorted(names)
        assert train.samples[0].label == 0

    def test_train_stats_match_direct_average(self, tree):
        m = D.scan_dataset(tree)
        imgs = [D.decode_image(s.image) for s in m.split("train").samples]
        stack = np.concatenate([i.reshape(-1, 3) for i in imgs], axis=0)
        np.testing.assert_allclose(m.mean, stack.mean(axis=0), atol=1e-5)
        np.testing.assert_allclose(m.std, stack.std(axis=0), atol=1e-5)

    def test_save_load_round_trip(self, tree, tmp_path):
        m = D.scan_dataset(tree, input_size=64, balance="augment")
        p = D.save_manifest(m, tmp_path / "manifest.cfg")
        m2 = D.load_manifest(p)
        assert m2.class_names == m.class_names
        assert m2.input_size == 64
        assert m2.balance == "augment"
        assert m2.mean == m.mean and m2.std == m.std
        assert m2.policy.enabled == m.policy.enabled
        assert len(m2.split("train")) == len(m.split("train"))

    def test_load_directory_directly(self, tree):
        m = D.load_manifest(tree)
        assert len(m.split("val")) == 4

    def test_unreadable_image_skipped_with_warning(self, tree):
        bad = tree / "train" / "bcc" / "corrupt.png"
        bad.write_bytes(b"nope")
        with pytest.warns(UserWarning, match="corrupt.png"):
            m = D.scan_dataset(tree)
        assert any("corrupt.png" in s for s in m.skipped)
        assert all("corrupt" not in s.name for s in m.split("train").samples)

    def test_empty_class_warns(self, tmp_path):
        for cls in ("a", "b"):
            (tmp_path / "t" / "train" / cls).mkdir(parents=True)
        rng = np.random.default_rng(0)
        write_png(tmp_path / "t" / "train" / "a" / "x.png",
                  rng.integers(0, 256, (40, 40, 3), dtype=np.uint8))
        with pytest.warns(UserWarning, match="empty class"):
            D.scan_dataset(tmp_path / "t")

    def test_missing_root_raises(self, tmp_path):
        with pytest.raises(D.DataError, match="not a directory"):
            D.scan_dataset(tmp_path / "absent")
        with pytest.raises(D.DataError, match="neither"):
            D.load_manifest(tmp_path / "absent.cfg")

    def test_balanced_oversampling(self):
        # samples are generated class-major, so truncating drops class2 to 2
        ds = D.synth_dataset(3, 6, size=32, seed=0)
        skewed = D.Dataset(ds.samples[:6 + 6 + 2], ds.class_names, "train")
        assert skewed.class_counts() == [6, 6, 2]
        bal = D.balanced(skewed)
        assert bal.class_counts() == [6, 6, 6]
        again = D.balanced(skewed)
        assert [s.name for s in bal.samples] == [s.name for s in again.samples]


class TestBatchIter:
    @pytest.fixture
    def ds(self):
        return D.synth_dataset(2, 5, size=32, seed=0)  # 10 samples

    def test_batch_sizes_split_4_4_2(self, ds):
        batches = list(D.batch_iter(ds, 4, input_size=32))
        assert [b[0].shape[0] for b in batches] == [4, 4, 2]
        assert batches[0][0].shape == (4, 3, 32, 32)
        assert batches[0][1].dtype == np.int64

    def test_no_shuffle_keeps_scan_order(self, ds):
        labels = np.concatenate([y for _, y in D.batch_iter(ds, 3, input_size=32)])
        np.testing.assert_array_equal(labels, [s.label for s in ds.samples])

    def test_every_sample_once_per_epoch(self, ds):
        labels = np.concatenate([
            y for _, y in D.batch_iter(ds, 4, shuffle=True, seed=3, epoch=1,
                                       input_size=32)])
        assert sorted(labels.tolist()) == sorted(s.label for s in ds.samples)

    def test_shuffle_replays_by_epoch(self, ds):
        def epoch_bytes(epoch):
            return b"".join(x.tobytes() for x, _ in D.batch_iter(
                ds, 4, shuffle=True, seed=5, epoch=epoch, input_size=32,
                train=True, policy=D.AugmentPolicy()))
        assert epoch_bytes(2) == epoch_bytes(2)
        assert epoch_bytes(2) != epoch_bytes(3)

    def test_eval_batches_identical_across_calls(self, ds):
        a = [x.tobytes() for x, _ in D.batch_iter(ds, 4, input_size=32)]
        b = [x.tobytes() for x, _ in D.batch_iter(ds, 4, input_size=32)]
        assert a == b

    def test_workers_do_not_change_bytes(self, ds):
        one = b"".join(x.tobytes() for x, _ in D.batch_iter(
            ds, 4, shuffle=True, seed=2, epoch=0, input_size=32,
            train=True, policy=D.AugmentPolicy(), workers=1))
        four = b"".join(x.tobytes() for x, _ in D.batch_iter(
            ds, 4, shuffle=True, seed=2, epoch=0, input_size=32,
            train=True, policy=D.AugmentPolicy(), workers=4))
        assert one == four

    def test_env_caps_workers(self, monkeypatch):
        monkeypatch.setenv(D.THREADS_ENV, "2")
        assert D.effective_workers(8) == 2
        assert D.effective_workers(None) == 2
        assert D.effective_workers(1) == 1
        monkeypatch.delenv(D.THREADS_ENV)
        assert D.effective_workers(None) == 1
        assert D.effective_workers(6) == 6

    def test_bad_batch_size(self, ds):
        with pytest.raises(ValueError, match="batch_size"):
            next(D.batch_iter(ds, 0, input_size=32))
