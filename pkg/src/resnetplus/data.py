"""Dataset scanning, augmentation, preprocessing, and batch iteration.

Datasets live in a directory tree ``root/<split>/<class>/<image>``; class
names are the sorted class directory names and file order within a class is
lexicographic, so two scans of the same tree always agree.  A manifest
(INI text) captures the root, class names, input size, per-channel
normalization statistics (computed from the train split, or the synthetic
fallback 0.5/0.25), an optional oversampling flag, and the augmentation
policy.

Determinism contract: every random decision is keyed by explicit integers.
Batch shuffling derives from (seed, epoch); each sample's augmentation
stream derives from (seed, epoch, position), so run N of a training job and
run N of its twin see byte-identical pixels.
"""

from __future__ import annotations

import configparser
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

__all__ = [
    "Sample", "Dataset", "Manifest", "AugmentPolicy",
    "ALL_TRANSFORMS", "GRAY_MEAN", "GRAY_STD",
    "decode_image", "resize_bilinear", "augment", "preprocess",
    "scan_dataset", "load_manifest", "save_manifest", "balanced",
    "synth_dataset", "make_synth_manifest", "save_image_tree",
    "batch_iter", "effective_workers", "DataError",
]

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}
ALL_TRANSFORMS = ("hflip", "affine", "gaussian_blur",
                  "additive_gaussian_noise", "crop", "linear_contrast")
GRAY_MEAN = (0.5, 0.5, 0.5)
GRAY_STD = (0.25, 0.25, 0.25)
MIN_SIDE = 32
EVAL_RESIZE_FACTOR = 1.14
THREADS_ENV = "RESNETPLUS_THREADS"


class DataError(ValueError):
    """Raised for unreadable datasets, bad layouts, or degenerate images."""


@dataclass
class Sample:
    image: "np.ndarray | str"   # inline pixels (H,W,3 float32) or a file path
    label: int
    name: str                   # stable display name for reports and errors


@dataclass
class Dataset:
    samples: list[Sample]
    class_names: list[str]
    split: str

    def __len__(self) -> int:
        return len(self.samples)

    def class_counts(self) -> list[int]:
        counts = [0] * len(self.class_names)
        for s in self.samples:
            counts[s.label] += 1
        return counts


@dataclass
class AugmentPolicy:
    """Which photometric/geometric transforms run, and their ranges.

    Each enabled transform fires independently with probability
    ``probs[name]``.  Parameter ranges are clamped at use rather than
    validated, so a slightly out-of-range config degrades gracefully.
    """

    enabled: tuple[str, ...] = ALL_TRANSFORMS
    probs: dict = field(default_factory=lambda: {t: 0.5 for t in ALL_TRANSFORMS})
    rotate_deg: float = 15.0
    translate_frac: float = 0.10
    scale_low: float = 0.9
    scale_high: float = 1.1
    blur_sigma_high: float = 1.5
    noise_sigma_high: float = 0.05
    crop_frac: float = 0.10
    contrast_low: float = 0.8
    contrast_high: float = 1.2
    random_resized_crop: bool = True
    rrc_low: float = 0.7

    def __post_init__(self):
        unknown = set(self.enabled) - set(ALL_TRANSFORMS)
        if unknown:
            raise ValueError(f"unknown transforms: {sorted(unknown)}")

    @classmethod
    def none(cls) -> "AugmentPolicy":
        return cls(enabled=(), random_resized_crop=False)

    def prob(self, name: str) -> float:
        return min(1.0, max(0.0, float(self.probs.get(name, 0.5))))


@dataclass
class Manifest:
    root: str | None
    class_names: list[str]
    input_size: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    balance: str = "none"            # "none" or "augment"
    policy: AugmentPolicy = field(default_factory=AugmentPolicy)
    splits: dict = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)

    def split(self, name: str) -> Dataset:
        if name not in self.splits:
            raise DataError(
                f"split {name!r} not present; have {sorted(self.splits)}")
        return self.splits[name]

    def train_dataset(self) -> Dataset:
        ds = self.split("train")
        if self.balance == "augment":
            return balanced(ds)
        return ds


# ---------------------------------------------------------------------------
# image primitives


def decode_image(path) -> np.ndarray:
    """Read an image file to float32 (H, W, 3) in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode {path}: {exc}") from exc
    return arr


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers; identity when sizes match."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * w / out_w - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    out = np.empty((out_h, out_w, img.shape[2]), dtype=np.float32)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.map_coordinates(
            img[:, :, c].astype(np.float64), [grid_y, grid_x],
            order=1, mode="nearest")
    return out


def _hflip(img, rng, policy):
    return img[:, ::-1].copy()


def _affine(img, rng, policy):
    h, w = img.shape[:2]
    rot = max(0.0, float(policy.rotate_deg))
    theta = np.deg2rad(rng.uniform(-rot, rot))
    lo = min(policy.scale_low, policy.scale_high)
    hi = max(policy.scale_low, policy.scale_high)
    s = rng.uniform(max(0.05, lo), hi)
    tf = max(0.0, float(policy.translate_frac))
    ty = rng.uniform(-tf, tf) * h
    tx = rng.uniform(-tf, tf) * w
    # output -> input map: rotate by -theta and divide by scale, about center
    c, si = np.cos(theta), np.sin(theta)
    inv = np.array([[c, si], [-si, c]], dtype=np.float64) / s
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - inv @ (center + np.array([ty, tx]))
    out = np.empty_like(img)
    for ch in range(img.shape[2]):
        out[:, :, ch] = ndimage.affine_transform(
            img[:, :, ch].astype(np.float64), inv, offset=offset,
            order=1, mode="constant", cval=0.0).astype(img.dtype)
    return out


def _gaussian_blur(img, rng, policy):
    sigma = rng.uniform(0.0, max(0.0, policy.blur_sigma_high))
    if sigma < 1e-4:
        return img
    return ndimage.gaussian_filter(
        img.astype(np.float64), sigma=(sigma, sigma, 0.0),
        mode="nearest").astype(img.dtype)


def _additive_noise(img, rng, policy):
    sigma = rng.uniform(0.0, max(0.0, policy.noise_sigma_high))
    noisy = img + rng.normal(0.0, sigma, img.shape)
    return np.clip(noisy, 0.0, 1.0).astype(img.dtype)


def _crop_resize(img, rng, policy):
    h, w = img.shape[:2]
    frac = min(0.45, max(0.0, policy.crop_frac))
    cut = rng.uniform(0.0, frac, size=4)
    y0 = int(round(cut[0] * h))
    y1 = h - int(round(cut[1] * h))
    x0 = int(round(cut[2] * w))
    x1 = w - int(round(cut[3] * w))
    if y1 - y0 < 2 or x1 - x0 < 2:
        return img
    return resize_bilinear(img[y0:y1, x0:x1], h, w)


def _linear_contrast(img, rng, policy):
    lo = min(policy.contrast_low, policy.contrast_high)
    hi = max(policy.contrast_low, policy.contrast_high)
    alpha = rng.uniform(max(0.0, lo), hi)
    return np.clip((img - 0.5) * alpha + 0.5, 0.0, 1.0).astype(img.dtype)


_TRANSFORM_FNS = {
    "hflip": _hflip,
    "affine": _affine,
    "gaussian_blur": _gaussian_blur,
    "additive_gaussian_noise": _additive_noise,
    "crop": _crop_resize,
    "linear_contrast": _linear_contrast,
}


def augment(image: np.ndarray, policy: AugmentPolicy,
            rng: np.random.Generator) -> np.ndarray:
    """Apply the policy's enabled transforms, each firing independently.

    Transforms run in the fixed order of ALL_TRANSFORMS; shape and dtype are
    preserved and pixels stay inside [0, 1].
    """
    img = np.asarray(image, dtype=np.float32)
    for name in ALL_TRANSFORMS:
        if name not in policy.enabled:
            continue
        if rng.random() < policy.prob(name):
            img = _TRANSFORM_FNS[name](img, rng, policy)
    return img


# ---------------------------------------------------------------------------
# preprocessing


def _validate_pixels(img: np.ndarray, name: str | None) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    label = name or "<array>"
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"{label}: expected (H, W, 3) pixels, got {img.shape}")
    if min(img.shape[0], img.shape[1]) < MIN_SIDE:
        raise DataError(
            f"{label}: image {img.shape[0]}x{img.shape[1]} is smaller than "
            f"the {MIN_SIDE} px minimum side")
    return np.clip(img, 0.0, 1.0)


def preprocess(image: np.ndarray, mode: str, size: int,
               mean=GRAY_MEAN, std=GRAY_STD,
               policy: AugmentPolicy | None = None,
               rng: np.random.Generator | None = None,
               name: str | None = None) -> np.ndarray:
    """Turn raw pixels into a normalized (3, size, size) float32 tensor.

    ``train`` mode takes a random resized crop (when the policy asks for
    one) and then augments; ``eval`` resizes the shorter side to
    1.14 * size and center-crops, with no randomness at all.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    img = _validate_pixels(image, name)
    h, w = img.shape[:2]

    if mode == "train":
        policy = policy if policy is not None else AugmentPolicy.none()
        if policy.random_resized_crop:
            if rng is None:
                raise ValueError("train preprocessing with a random crop needs rng")
            lo = min(1.0, max(0.05, policy.rrc_low))
            s = rng.uniform(lo, 1.0)
            ch = max(MIN_SIDE // 2, int(round(h * s)))
            cw = max(MIN_SIDE // 2, int(round(w * s)))
            ch, cw = min(ch, h), min(cw, w)
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            img = img[top:top + ch, left:left + cw]
        img = resize_bilinear(img, size, size)
        if policy.enabled:
            if rng is None:
                raise ValueError("train preprocessing with augmentation needs rng")
            img = augment(img, policy, rng)
    else:
        short = min(h, w)
        target = max(size, int(round(EVAL_RESIZE_FACTOR * size)))
        scale = target / short
        img = resize_bilinear(img, max(size, int(round(h * scale))),
                              max(size, int(round(w * scale))))
        top = (img.shape[0] - size) // 2
        left = (img.shape[1] - size) // 2
        img = img[top:top + size, left:left + size]

    mean = np.asarray(mean, dtype=np.float32).reshape(1, 1, 3)
    std = np.asarray(std, dtype=np.float32).reshape(1, 1, 3)
    if np.any(std <= 0):
        raise ValueError("std must be positive")
    out = (img - mean) / std
    return np.ascontiguousarray(out.transpose(2, 0, 1), dtype=np.float32)


# ---------------------------------------------------------------------------
# directory scanning and manifests


def _scan_split(split_dir: Path, class_names: list[str], skipped: list[str]
                ) -> list[Sample]:
    samples: list[Sample] = []
    for label, cls in enumerate(class_names):
        cls_dir = split_dir / cls
        if not cls_dir.is_dir():
            continue
        files = sorted(p for p in cls_dir.iterdir()
                       if p.suffix.lower() in IMAGE_EXTENSIONS)
        if not files:
            warnings.warn(f"empty class directory: {cls_dir}", stacklevel=3)
        for p in files:
            samples.append(Sample(image=str(p), label=label,
                                  name=str(p.relative_to(split_dir.parent))))
    return samples


def _train_stats(samples: list[Sample]) -> tuple[tuple, tuple]:
    """Per-channel mean/std accumulated in float64 across all train pixels."""
    total = np.zeros(3, np.float64)
    total_sq = np.zeros(3, np.float64)
    count = 0
    for s in samples:
        img = s.image if isinstance(s.image, np.ndarray) else decode_image(s.image)
        img = np.asarray(img, dtype=np.float64)
        total += img.sum(axis=(0, 1))
        total_sq += (img * img).sum(axis=(0, 1))
        count += img.shape[0] * img.shape[1]
    if count == 0:
        return GRAY_MEAN, GRAY_STD
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 1e-8)
    return tuple(round(float(v), 6) for v in mean), \
        tuple(round(float(v), 6) for v in np.sqrt(var))


def scan_dataset(root, input_size: int = 224, balance: str = "none",
                 policy: AugmentPolicy | None = None,
                 compute_stats: bool = True) -> Manifest:
    """Walk ``root/<split>/<class>/*`` into a Manifest.

    Class names are the sorted union of class directories across splits.
    Unreadable images are skipped with a warning and listed in
    ``manifest.skipped``.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    split_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not split_dirs:
        raise DataError(f"dataset root {root} has no split directories")
    class_names = sorted({c.name for sd in split_dirs
                          for c in sd.iterdir() if c.is_dir()})
    if not class_names:
        raise DataError(f"dataset root {root} has no class directories")
    if balance not in ("none", "augment"):
        raise DataError(f"balance must be 'none' or 'augment', got {balance!r}")

    skipped: list[str] = []
    splits: dict[str, Dataset] = {}
    for sd in split_dirs:
        samples = _scan_split(sd, class_names, skipped)
        kept = []
        for s in samples:
            try:
                with Image.open(s.image) as im:
                    im.verify()
                kept.append(s)
            except (OSError, ValueError):
                skipped.append(s.name)
                warnings.warn(f"skipping unreadable image: {s.name}",
                              stacklevel=2)
        splits[sd.name] = Dataset(kept, class_names, sd.name)

    if compute_stats and "train" in splits and len(splits["train"]) > 0:
        mean, std = _train_stats(splits["train"].samples)
    else:
        mean, std = GRAY_MEAN, GRAY_STD
    return Manifest(root=str(root), class_names=class_names,
                    input_size=input_size, mean=mean, std=std,
                    balance=balance,
                    policy=policy if policy is not None else AugmentPolicy(),
                    splits=splits, skipped=skipped)


def save_manifest(manifest: Manifest, path) -> Path:
    """Serialize manifest metadata (not sample lists) as INI text."""
    cp = configparser.ConfigParser()
    cp["dataset"] = {
        "root": manifest.root or "",
        "classes": ", ".join(manifest.class_names),
        "input_size": str(manifest.input_size),
        "balance": manifest.balance,
    }
    cp["normalize"] = {
        "mean": " ".join(repr(v) for v in manifest.mean),
        "std": " ".join(repr(v) for v in manifest.std),
    }
    p = manifest.policy
    cp["augment"] = {
        "enabled": ", ".join(p.enabled),
        "probs": " ".join(f"{t}:{p.prob(t)}" for t in p.enabled),
        "rotate_deg": repr(p.rotate_deg),
        "translate_frac": repr(p.translate_frac),
        "scale": f"{p.scale_low!r} {p.scale_high!r}",
        "blur_sigma_high": repr(p.blur_sigma_high),
        "noise_sigma_high": repr(p.noise_sigma_high),
        "crop_frac": repr(p.crop_frac),
        "contrast": f"{p.contrast_low!r} {p.contrast_high!r}",
        "random_resized_crop": str(p.random_resized_crop).lower(),
        "rrc_low": repr(p.rrc_low),
    }
    path = Path(path)
    with open(path, "w") as fh:
        cp.write(fh)
    return path


def _parse_policy(cp: configparser.ConfigParser) -> AugmentPolicy:
    if not cp.has_section("augment"):
        return AugmentPolicy()
    sec = cp["augment"]
    enabled = tuple(t.strip() for t in sec.get("enabled", "").split(",")
                    if t.strip())
    probs = {}
    for pair in sec.get("probs", "").split():
        name, _, val = pair.partition(":")
        probs[name] = float(val)
    for t in enabled:
        probs.setdefault(t, 0.5)
    scale = sec.get("scale", "0.9 1.1").split()
    contrast = sec.get("contrast", "0.8 1.2").split()
    return AugmentPolicy(
        enabled=enabled,
        probs=probs,
        rotate_deg=sec.getfloat("rotate_deg", 15.0),
        translate_frac=sec.getfloat("translate_frac", 0.10),
        scale_low=float(scale[0]), scale_high=float(scale[-1]),
        blur_sigma_high=sec.getfloat("blur_sigma_high", 1.5),
        noise_sigma_high=sec.getfloat("noise_sigma_high", 0.05),
        crop_frac=sec.getfloat("crop_frac", 0.10),
        contrast_low=float(contrast[0]), contrast_high=float(contrast[-1]),
        random_resized_crop=sec.getboolean("random_resized_crop", True),
        rrc_low=sec.getfloat("rrc_low", 0.7),
    )


def load_manifest(path) -> Manifest:
    """Load a dataset: a directory is scanned directly, an INI file is
    parsed for metadata and its root rescanned."""
    path = Path(path)
    if path.is_dir():
        return scan_dataset(path)
    if not path.is_file():
        raise DataError(f"{path} is neither a dataset directory nor a manifest")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise DataError(f"{path}: bad manifest: {exc}") from exc
    if not cp.has_section("dataset"):
        raise DataError(f"{path}: manifest has no [dataset] section")
    sec = cp["dataset"]
    root = sec.get("root", "")
    root_path = Path(root)
    if not root_path.is_absolute():
        root_path = (path.parent / root_path).resolve()
    policy = _parse_policy(cp)
    manifest = scan_dataset(root_path,
                            input_size=sec.getint("input_size", 224),
                            balance=sec.get("balance", "none"),
                            policy=policy,
                            compute_stats=not cp.has_section("normalize"))
    if cp.has_section("normalize"):
        manifest.mean = tuple(float(v) for v in cp["normalize"]["mean"].split())
        manifest.std = tuple(float(v) for v in cp["normalize"]["std"].split())
        if len(manifest.mean) != 3 or len(manifest.std) != 3:
            raise DataError(f"{path}: normalize stats must have 3 channels")
    declared = [c.strip() for c in sec.get("classes", "").split(",") if c.strip()]
    if declared and declared != manifest.class_names:
        raise DataError(
            f"{path}: declared classes {declared} do not match tree "
            f"{manifest.class_names}")
    return manifest


def balanced(dataset: Dataset) -> Dataset:
    """Oversample minority classes to parity by cycling their sample lists."""
    counts = dataset.class_counts()
    target = max(counts) if counts else 0
    by_class: list[list[Sample]] = [[] for _ in dataset.class_names]
    for s in dataset.samples:
        by_class[s.label].append(s)
    extra: list[Sample] = []
    for label, bucket in enumerate(by_class):
        if not bucket:
            continue
        need = target - len(bucket)
        for i in range(need):
            src = bucket[i % len(bucket)]
            extra.append(replace(src, name=f"{src.name}#dup{i}"))
    return Dataset(dataset.samples + extra, dataset.class_names, dataset.split)


# ---------------------------------------------------------------------------
# synthetic data


def _stripe_image(size: int, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Low-frequency oriented stripes: about two cycles across the image,
    so coarse patch means still encode the orientation."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    u = np.cos(theta) * xx + np.sin(theta) * yy
    cycles = 2.0 * (1.0 + rng.uniform(-0.1, 0.1))
    phase = rng.uniform(-0.3, 0.3)
    base = 0.5 + 0.4 * np.sin(2.0 * np.pi * cycles * u + phase)
    img = np.repeat(base[:, :, None], 3, axis=2)
    img = img + rng.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_dataset(num_classes: int, per_class: int, size: int = 32,
                  seed: int = 0, split: str = "train") -> Dataset:
    """Balanced synthetic texture classes: class k's stripes run at angle
    k * pi / num_classes (with a small per-sample jitter)."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if size < MIN_SIDE:
        raise ValueError(f"size must be >= {MIN_SIDE}, got {size}")
    class_names = [f"class{k}" for k in range(num_classes)]
    samples: list[Sample] = []
    for k in range(num_classes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        for i in range(per_class):
            theta = k * np.pi / num_classes + rng.uniform(-0.04, 0.04)
            img = _stripe_image(size, theta, rng)
            samples.append(Sample(image=img, label=k,
                                  name=f"{split}/class{k}/synth{i:04d}"))
    return Dataset(samples, class_names, split)


def make_synth_manifest(num_classes: int, train_total: int, size: int = 32,
                        seed: int = 0) -> Manifest:
    """Three-split synthetic manifest: ``train_total`` training samples and
    half-sized val/test splits, all class balanced."""
    if train_total % num_classes != 0:
        raise ValueError(
            f"train size {train_total} must divide evenly by {num_classes} classes")
    per_train = train_total // num_classes
    per_eval = max(1, per_train // 2)
    splits = {
        "train": synth_dataset(num_classes, per_train, size, seed, "train"),
        "val": synth_dataset(num_classes, per_eval, size, seed + 1, "val"),
        "test": synth_dataset(num_classes, per_eval, size, seed + 2, "test"),
    }
    return Manifest(root=None, class_names=splits["train"].class_names,
                    input_size=size, mean=GRAY_MEAN, std=GRAY_STD,
                    balance="none", policy=AugmentPolicy.none(), splits=splits)


def save_image_tree(manifest: Manifest, out_dir) -> Path:
    """Write every split's samples as PNG files plus a manifest.cfg."""
    out_dir = Path(out_dir)
    for split_name, ds in manifest.splits.items():
        for s in ds.samples:
            if not isinstance(s.image, np.ndarray):
                continue
            cls = ds.class_names[s.label]
            dest = out_dir / split_name / cls
            dest.mkdir(parents=True, exist_ok=True)
            arr = (np.clip(s.image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
            Image.fromarray(arr).save(dest / (Path(s.name).name + ".png"))
    written = replace(manifest, root=str(out_dir))
    save_manifest(written, out_dir / "manifest.cfg")
    return out_dir


# ---------------------------------------------------------------------------
# batching


def effective_workers(requested: int | None = None) -> int:
    """Worker count for preprocessing, capped by the threads env var."""
    cap = os.environ.get(THREADS_ENV)
    cap = int(cap) if cap else None
    if cap is not None and cap < 1:
        cap = 1
    w = requested if requested is not None else (cap or 1)
    if cap is not None:
        w = min(w, cap)
    return max(1, w)


def batch_iter(dataset: Dataset, batch_size: int, *, shuffle: bool = False,
               seed: int = 0, epoch: int = 0, input_size: int = 224,
               mean=GRAY_MEAN, std=GRAY_STD,
               policy: AugmentPolicy | None = None, train: bool = False,
               workers: int | None = None):
    """Yield (images (N,3,T,T) float32, labels (N,) int64) batches.

    Every sample appears exactly once per epoch; the final batch may be
    short.  Shuffling permutes with a (seed, epoch) generator so epoch
    replays are exact; each sample's augmentation stream is keyed by
    (seed, epoch, position in dataset).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if seed < 0 or epoch < 0:
        raise ValueError("seed and epoch must be non-negative")
    n = len(dataset.samples)
    order = np.arange(n)
    if shuffle and n > 1:
        order = np.random.default_rng(
            np.random.SeedSequence([seed, epoch])).permutation(n)

    def prepare(i: int) -> np.ndarray:
        s = dataset.samples[int(i)]
        img = s.image if isinstance(s.image, np.ndarray) else decode_image(s.image)
        rng = np.random.default_rng(np.random.SeedSequence([seed, epoch, int(i)]))
        return preprocess(img, "train" if train else "eval", input_size,
                          mean, std, policy if train else None, rng,
                          name=s.name)

    w = effective_workers(workers)
    pool = ThreadPoolExecutor(max_workers=w) if w > 1 else None
    try:
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            if pool is not None:
                arrays = list(pool.map(prepare, idx))
            else:
                arrays = [prepare(i) for i in idx]
            labels = np.array([dataset.samples[int(i)].label for i in idx],
                              dtype=np.int64)
            yield np.stack(arrays), labels
    finally:
        if pool is not None:
            pool.shutdown(wait=False)
