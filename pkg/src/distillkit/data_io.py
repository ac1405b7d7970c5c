"""Grayscale image I/O, manifests, stratified splits and synthetic data."""

import csv
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataError, FormatError

CLASS_NAMES = ("normal", "pneumonia")


@dataclass
class Dataset:
    """Equal-sized 8-bit grayscale images with binary labels."""

    images: np.ndarray
    labels: np.ndarray
    paths: list = None
    split: str = "train"
    class_names: tuple = CLASS_NAMES

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3:
            raise DataError(f"images must be [N, H, W], got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if self.paths is not None and len(set(self.paths)) != len(self.paths):
            raise DataError("duplicate paths in dataset")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx, split=None):
        idx = np.asarray(idx, dtype=np.int64)
        paths = [self.paths[i] for i in idx] if self.paths is not None else None
        return Dataset(self.images[idx], self.labels[idx], paths, split or self.split, self.class_names)

    def as_batch(self):
        """Images as a float64 ``[N, 1, H, W]`` batch, centred and scaled to about [-2, 2]."""
        return (self.images[:, None, :, :].astype(np.float64) - 128.0) / 64.0


# -- image files ------------------------------------------------------------


def load_image(path):
    """Read a PGM/PNG (or any Pillow-readable) file as a uint8 matrix.

    Color inputs are reduced to luminance.
    """
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                peak = 65535.0 if arr.max() > 255 else 255.0
                return np.clip(np.floor(arr * 255.0 / peak + 0.5), 0, 255).astype(np.uint8)
            if im.mode != "L":
                im = im.convert("L")
            return np.array(im, dtype=np.uint8)
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: unsupported or corrupt image ({exc})") from None


def save_image(path, image):
    """Write a uint8 matrix as 8-bit grayscale; format from the extension (.pgm or .png)."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise DataError("pixel values outside [0, 255]")
        arr = arr.astype(np.uint8)
    ext = os.path.splitext(str(path))[1].lower()
    fmt = {".pgm": "PPM", ".png": "PNG"}.get(ext)
    if fmt is None:
        raise FormatError(f"{path}: only .pgm and .png are written")
    Image.fromarray(arr).save(path, format=fmt)


def resize(image, target):
    """Bilinear resize (half-pixel centres, edge-clamped) to ``target x target``.

    ``target`` may also be an ``(height, width)`` pair.
    """
    img = np.asarray(image, dtype=np.float64)
    th, tw = (target, target) if np.isscalar(target) else target
    if th < 1 or tw < 1:
        raise ConfigError(f"resize target must be >= 1, got {target}")
    h, w = img.shape
    if (th, tw) == (h, w):
        return np.asarray(image).astype(np.uint8, copy=True)

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    r0, r1, fr = axis_weights(h, th)
    c0, c1, fc = axis_weights(w, tw)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bottom = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    out = top * (1 - fr)[:, None] + bottom * fr[:, None]
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


# -- manifests --------------------------------------------------------------


@dataclass
class ManifestReport:
    loaded: int = 0
    excluded_disagreement: int = 0
    excluded_paths: list = field(default_factory=list)


def read_manifest(path):
    """Parse a ``path,label`` (or ``path,label_a,label_b``) CSV.

    Returns ``(rows, report)`` where rows are ``(resolved_path, label)``.
    Items whose two annotator labels disagree are dropped and counted.
    """
    base = os.path.dirname(os.path.abspath(path))
    report = ManifestReport()
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return rows, report
            header = [h.strip() for h in header]
            if header[:1] != ["path"] or len(header) not in (2, 3):
                raise DataError(f"{path}: manifest header must be 'path,label' or 'path,label_a,label_b'")
            seen = set()
            for lineno, rec in enumerate(reader, start=2):
                if not rec or not "".join(rec).strip():
                    continue
                if len(rec) != len(header):
                    raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
                try:
                    labels = [int(v) for v in rec[1:]]
                except ValueError:
                    raise DataError(f"{path}:{lineno}: non-integer label") from None
                if any(v not in (0, 1) for v in labels):
                    raise DataError(f"{path}:{lineno}: labels must be 0 or 1")
                item = rec[0].strip()
                if item in seen:
                    raise DataError(f"{path}:{lineno}: duplicate path {item}")
                seen.add(item)
                if len(labels) == 2 and labels[0] != labels[1]:
                    report.excluded_disagreement += 1
                    report.excluded_paths.append(item)
                    continue
                rows.append((os.path.join(base, item), labels[0]))
    except OSError as exc:
        raise FormatError(f"{path}: cannot read manifest ({exc})") from None
    report.loaded = len(rows)
    return rows, report


def write_manifest(path, items):
    """Write ``(relative_path, label)`` rows with a ``path,label`` header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label"])
        for p, label in items:
            w.writerow([p, int(label)])


def load_manifest(path, size=None, split="train"):
    """Load every image listed in a manifest into a :class:`Dataset`.

    Images are resized to ``size`` when given; otherwise they must share one shape.
    """
    rows, report = read_manifest(path)
    if not rows:
        raise ConfigError(f"{path}: manifest lists no usable images")
    images = []
    for p, _ in rows:
        img = load_image(p)
        if size is not None:
            img = resize(img, size)
        images.append(img)
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise DataError(f"{path}: images have differing shapes {sorted(shapes)}; set a resize target")
    ds = Dataset(np.stack(images), [lab for _, lab in rows], [p for p, _ in rows], split)
    return ds, report


# -- splitting --------------------------------------------------------------


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def split_indices(labels, test_fraction, seed):
    """Stratified, seeded train/test index split.

    The total test count is ``round(test_fraction * N)``; it is shared among the
    classes by largest remainder, so each class gets within one item of its
    proportional share.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    counts = {c: int(np.sum(labels == c)) for c in classes}
    for c, n in counts.items():
        if n < 2:
            raise DataError(f"class {c} has {n} item(s); at least 2 are needed to split")
    total = _round_half_up(test_fraction * len(labels))
    raw = {c: test_fraction * counts[c] for c in classes}
    alloc = {c: int(np.floor(raw[c])) for c in classes}
    order = sorted(classes, key=lambda c: (-(raw[c] - alloc[c]), c))
    for c in order[: total - sum(alloc.values())]:
        alloc[c] += 1
    rng = np.random.default_rng(seed)
    test_idx, train_idx = [], []
    for c in classes:
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(len(members))]
        test_idx.append(members[: alloc[c]])
        train_idx.append(members[alloc[c]:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def split(dataset, test_fraction, seed):
    train_idx, test_idx = split_indices(dataset.labels, test_fraction, seed)
    return dataset.subset(train_idx, "train"), dataset.subset(test_idx, "test")


# -- synthetic data ---------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Two-class image generator.

    Both classes are a random linear intensity gradient plus Gaussian noise.
    Class 1 additionally carries bright elliptical blobs.
    """

    size: int = 32
    background: float = 110.0
    gradient: float = 60.0
    noise_sigma: float = 10.0
    blob_count: tuple = (1, 2)
    blob_radius: tuple = (1.5, 3.0)
    blob_intensity: float = 80.0
    seed: int = 0

    def validate(self):
        if self.size < 1:
            raise ConfigError("synthetic size must be >= 1")
        lo, hi = self.blob_count
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad blob_count range {self.blob_count}")
        rlo, rhi = self.blob_radius
        if rlo <= 0 or rhi < rlo:
            raise ConfigError(f"bad blob_radius range {self.blob_radius}")
        if self.blob_intensity == 0 or hi == 0:
            warnings.warn("synthetic spec is degenerate: both classes share one distribution", stacklevel=2)


def _background(rng, size, spec):
    ii, jj = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    theta = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(theta) * ii + np.sin(theta) * jj) * spec.gradient
    return spec.background + ramp - ramp.mean() + rng.normal(0.0, spec.noise_sigma, (size, size))


def _blobs(rng, size, spec):
    ii, jj = np.mgrid[0:size, 0:size].astype(np.float64)
    layer = np.zeros((size, size))
    for _ in range(rng.integers(spec.blob_count[0], spec.blob_count[1] + 1)):
        ci, cj = rng.uniform(2, size - 3, 2)
        ra, rb = rng.uniform(*spec.blob_radius, 2)
        phi = rng.uniform(0, np.pi)
        u = (ii - ci) * np.cos(phi) + (jj - cj) * np.sin(phi)
        v = -(ii - ci) * np.sin(phi) + (jj - cj) * np.cos(phi)
        layer += spec.blob_intensity * np.exp(-0.5 * ((u / ra) ** 2 + (v / rb) ** 2))
    return layer


def generate_synthetic(spec=None, count_per_class=100):
    """Deterministic labelled dataset: ``count_per_class`` images of each class, interleaved."""
    spec = spec or SyntheticSpec()
    spec.validate()
    if count_per_class < 1:
        raise ConfigError("count_per_class must be >= 1")
    rng = np.random.default_rng(spec.seed)
    images, labels = [], []
    for _ in range(count_per_class):
        for label in (0, 1):
            img = _background(rng, spec.size, spec)
            if label == 1:
                img = img + _blobs(rng, spec.size, spec)
            images.append(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))
            labels.append(label)
    return Dataset(np.stack(images), labels)


def generate_smooth_covers(count, size=32, seed=0, noise_sigma=0.5):
    """Low-noise gradient images used as steganography covers."""
    rng = np.random.default_rng(seed)
    ii, jj = np.mgrid[0:size, 0:size].astype(np.float64)
    covers = []
    for _ in range(count):
        a, b = rng.uniform(-2.0, 2.0, 2)
        c = rng.uniform(80, 176)
        img = c + a * (ii - size / 2) + b * (jj - size / 2) + rng.normal(0.0, noise_sigma, (size, size))
        covers.append(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))
    return np.stack(covers)
