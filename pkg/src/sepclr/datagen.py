"""Synthetic contrastive-analysis datasets with exact ground truth, plus the
stochastic view-generating augmentation pipeline.

Three generators, all seeded and bit-reproducible:

  vector_ca       nonlinear map of labelled cluster latents (fast sanity data)
  colored_shapes  16x16x3: grayscale shapes (background) vs hue-painted
                  shapes (target); shape class is the common factor, hue the
                  salient one
  attr_sprites    16x16x3 grayscale: procedural texture grids (background) vs
                  texture + one sprite with 5 recorded attributes
                  (shape, zoom, rotation, x, y)

Augmentations are dataset-aware: the default spec of each generator only
contains transforms that preserve that dataset's ground-truth factors
(e.g. no translation for attr_sprites, it would corrupt the x/y attributes;
no hue jitter anywhere near colored_shapes).

Dataset directory layout (see save/load): manifest.csv with id, origin and
factor/attribute columns; inputs.f64 holding the flat input matrix as
row-major little-endian float64; dataset.json with shapes and column roles.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BACKGROUND, TARGET = 0, 1
ORIGIN_NAMES = {BACKGROUND: "background", TARGET: "target"}

DATASET_KINDS = ("vector_ca", "colored_shapes", "attr_sprites")

HUES = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
])


def hue_palette(saturation=0.45):
    """Hue class prototypes blended towards mid-gray by `saturation`."""
    gray_point = np.full(3, 0.6)
    return gray_point[None, :] * (1 - saturation) + HUES * saturation

SPRITE_SHAPES = ("ellipse", "bar", "parallelogram")
SPRITE_MAX_RADIUS = 5.0
SPRITE_MARGIN = 5.5
_SS = 4  # supersampling factor for anti-aliased masks


class AugmentationError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentationSpec:
    """Ordered transform chain: translate -> hflip -> brightness -> noise."""

    translate_px: int = 0
    hflip_prob: float = 0.0
    brightness_range: tuple | None = None
    noise_std: float = 0.0

    def validate(self, image_shape):
        if self.translate_px < 0 or self.noise_std < 0:
            raise AugmentationError("negative transform magnitude")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise AugmentationError("hflip_prob must be in [0, 1]")
        if self.brightness_range is not None:
            lo, hi = self.brightness_range
            if not (0 < lo <= hi):
                raise AugmentationError(f"bad brightness range {self.brightness_range}")
        needs_image = (
            self.translate_px > 0
            or self.hflip_prob > 0
            or self.brightness_range is not None
        )
        if needs_image and image_shape is None:
            raise AugmentationError("image transforms configured for non-image data")
        if image_shape is not None and self.translate_px >= min(image_shape[:2]) // 2:
            raise AugmentationError(
                f"translate_px={self.translate_px} exceeds image bounds {image_shape[:2]}"
            )


def default_augmentations(kind):
    if kind == "vector_ca":
        return AugmentationSpec(noise_std=0.05)
    if kind == "colored_shapes":
        return AugmentationSpec(
            translate_px=2, hflip_prob=0.5, brightness_range=(0.85, 1.15),
            noise_std=0.02,
        )
    if kind == "attr_sprites":
        return AugmentationSpec(brightness_range=(0.9, 1.1), noise_std=0.02)
    raise ValueError(f"unknown dataset kind {kind!r}")


@dataclass
class CASample:
    id: int
    input: np.ndarray
    origin: str
    common_factor: dict
    salient_factor: dict
    attributes: np.ndarray | None = None
    image_shape: tuple | None = None


@dataclass
class CADataset:
    kind: str
    inputs: np.ndarray                      # (N, D) float64
    origin: np.ndarray                      # (N,) 0=background 1=target
    factors: dict                           # name -> (N,) float64, NaN absent
    factor_kinds: dict                      # name -> categorical | continuous
    factor_roles: dict                      # name -> common | salient
    seed: int
    attributes: np.ndarray | None = None    # (N, D_S), NaN rows for background
    attribute_names: list = field(default_factory=list)
    image_shape: tuple | None = None

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    def indices(self, origin):
        return np.flatnonzero(self.origin == origin)

    def sample(self, i):
        role = self.factor_roles
        common = {
            k: self.factors[k][i] for k in self.factors
            if role[k] == "common" and not np.isnan(self.factors[k][i])
        }
        salient = {
            k: self.factors[k][i] for k in self.factors
            if role[k] == "salient" and not np.isnan(self.factors[k][i])
        }
        attrs = None
        if self.attributes is not None and not np.isnan(self.attributes[i]).any():
            attrs = self.attributes[i]
        return CASample(
            id=i,
            input=self.inputs[i],
            origin=ORIGIN_NAMES[int(self.origin[i])],
            common_factor=common,
            salient_factor=salient,
            attributes=attrs,
            image_shape=self.image_shape,
        )

    def save(self, out_dir, force=False):
        out = Path(out_dir)
        manifest = out / "manifest.csv"
        if manifest.exists() and not force:
            raise FileExistsError(f"{manifest} exists; pass force to overwrite")
        out.mkdir(parents=True, exist_ok=True)
        meta = {
            "kind": self.kind,
            "n": int(self.n),
            "input_dim": int(self.input_dim),
            "image_shape": list(self.image_shape) if self.image_shape else None,
            "factor_kinds": self.factor_kinds,
            "factor_roles": self.factor_roles,
            "attribute_names": self.attribute_names,
            "seed": int(self.seed),
            "inputs_file": "inputs.f64",
            "dtype": "float64",
            "byte_order": "little",
            "layout": "row-major (n, input_dim)",
        }
        (out / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        (out / "inputs.f64").write_bytes(
            np.ascontiguousarray(self.inputs, dtype="<f8").tobytes()
        )
        factor_names = sorted(self.factors)
        with open(manifest, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["id", "origin"]
            header += [f"factor_{k}" for k in factor_names]
            header += [f"attr_{k}" for k in self.attribute_names]
            writer.writerow(header)
            for i in range(self.n):
                row = [i, ORIGIN_NAMES[int(self.origin[i])]]
                for k in factor_names:
                    v = self.factors[k][i]
                    row.append("" if np.isnan(v) else repr(float(v)))
                if self.attributes is not None:
                    for j in range(self.attributes.shape[1]):
                        v = self.attributes[i, j]
                        row.append("" if np.isnan(v) else repr(float(v)))
                writer.writerow(row)

    @classmethod
    def load(cls, in_dir):
        src = Path(in_dir)
        meta = json.loads((src / "dataset.json").read_text())
        n, dim = meta["n"], meta["input_dim"]
        inputs = np.frombuffer(
            (src / meta["inputs_file"]).read_bytes(), dtype="<f8"
        ).reshape(n, dim).astype(np.float64)
        origin = np.zeros(n, dtype=np.uint8)
        factor_names = sorted(meta["factor_kinds"])
        factors = {k: np.full(n, np.nan) for k in factor_names}
        attr_names = meta["attribute_names"]
        attributes = np.full((n, len(attr_names)), np.nan) if attr_names else None
        with open(src / "manifest.csv", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                i = int(row[0])
                origin[i] = TARGET if row[1] == "target" else BACKGROUND
                for j, k in enumerate(factor_names):
                    cell = row[2 + j]
                    if cell:
                        factors[k][i] = float(cell)
                for j in range(len(attr_names)):
                    cell = row[2 + len(factor_names) + j]
                    if cell:
                        attributes[i, j] = float(cell)
        return cls(
            kind=meta["kind"],
            inputs=inputs,
            origin=origin,
            factors=factors,
            factor_kinds=meta["factor_kinds"],
            factor_roles=meta["factor_roles"],
            seed=meta["seed"],
            attributes=attributes,
            attribute_names=attr_names,
            image_shape=tuple(meta["image_shape"]) if meta["image_shape"] else None,
        )


def _balanced_labels(rng, n, n_classes):
    """Exact round-robin class counts (within one), shuffled order."""
    labels = np.arange(n) % n_classes
    return labels[rng.permutation(n)]


# ---------------------------------------------------------------------------
# vector dataset

def gen_vector_ca(n_bg, n_tg, d_c_factors=3, d_s_factors=4, noise_std=0.05,
                  seed=0, input_dim=32):
    """Cluster latents pushed through a fixed seeded two-layer nonlinear map."""
    if n_bg <= 0 or n_tg <= 0:
        raise ValueError("counts must be positive")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 3001)))
    zc_dim, zs_dim = 4, 2
    centers_c = rng.normal(0.0, 3.0, (d_c_factors, zc_dim))
    centers_s = rng.normal(0.0, 3.0, (d_s_factors, zs_dim))
    w1 = rng.normal(0.0, 0.5 / np.sqrt(zc_dim + zs_dim), (zc_dim + zs_dim, 64))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(64), (64, input_dim))

    n = n_bg + n_tg
    labels_c = _balanced_labels(rng, n, d_c_factors)
    labels_s_tg = _balanced_labels(rng, n_tg, d_s_factors)

    z_c = centers_c[labels_c] + rng.normal(0.0, 0.3, (n, zc_dim))
    z_s = np.zeros((n, zs_dim))
    z_s[n_bg:] = centers_s[labels_s_tg] + rng.normal(0.0, 0.3, (n_tg, zs_dim))

    clean = np.tanh(np.concatenate([z_c, z_s], axis=1) @ w1) @ w2
    inputs = clean + rng.normal(0.0, noise_std, clean.shape) if noise_std > 0 else clean

    origin = np.zeros(n, dtype=np.uint8)
    origin[n_bg:] = TARGET
    salient = np.full(n, np.nan)
    salient[n_bg:] = labels_s_tg
    return CADataset(
        kind="vector_ca",
        inputs=inputs.astype(np.float64),
        origin=origin,
        factors={"common_cluster": labels_c.astype(np.float64), "salient_cluster": salient},
        factor_kinds={"common_cluster": "categorical", "salient_cluster": "categorical"},
        factor_roles={"common_cluster": "common", "salient_cluster": "salient"},
        seed=seed,
    )


# ---------------------------------------------------------------------------
# image rendering helpers

def _pixel_grid(img_size):
    step = 1.0 / _SS
    coords = (np.arange(img_size * _SS) + 0.5) * step
    return np.meshgrid(coords, coords, indexing="xy")  # (xx, yy) in pixel units


def _downsample(mask, img_size):
    return mask.reshape(img_size, _SS, img_size, _SS).mean(axis=(1, 3))


def _shape_mask(shape, cx, cy, r, img_size):
    xx, yy = _pixel_grid(img_size)
    u, v = xx - cx, yy - cy
    if shape == "square":
        inside = (np.abs(u) <= r) & (np.abs(v) <= r)
    elif shape == "disc":
        inside = u * u + v * v <= r * r
    elif shape == "triangle":
        # isoceles, apex up, symmetric about the vertical axis
        top, base, halfw = -r, 0.8 * r, 0.95 * r
        frac = (v - top) / (base - top)
        inside = (v >= top) & (v <= base) & (np.abs(u) <= halfw * frac)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return _downsample(inside.astype(np.float64), img_size)


def render_sprite(shape_idx, zoom, rotation_deg, x, y, img_size=16):
    """Anti-aliased coverage mask of one sprite; placement (x, y) in [0, 1]
    maps to the bounding-box centre in pixel units within the margins.

    All three sprite silhouettes are centrally symmetric, so the rendered
    bounding-box centre stays at the placement point under any rotation.
    """
    span = img_size - 2 * SPRITE_MARGIN
    cx = SPRITE_MARGIN + x * span
    cy = SPRITE_MARGIN + y * span
    r = SPRITE_MAX_RADIUS * zoom
    theta = np.deg2rad(rotation_deg)
    xx, yy = _pixel_grid(img_size)
    du, dv = xx - cx, yy - cy
    u = du * np.cos(theta) + dv * np.sin(theta)
    v = -du * np.sin(theta) + dv * np.cos(theta)
    shape = SPRITE_SHAPES[shape_idx]
    if shape == "ellipse":
        a, b = r, 0.48 * r
        inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    elif shape == "bar":
        a, b = r, 0.2 * r
        inside = (np.abs(u) <= a) & (np.abs(v) <= b)
    else:  # parallelogram: strongly sheared rectangle, centrally symmetric
        a, b = 0.62 * r, 0.42 * r
        inside = (np.abs(v) <= b) & (np.abs(u - v) <= a)
    return _downsample(inside.astype(np.float64), img_size)


def gen_colored_shapes(n_bg, n_tg, seed=0, img_size=16, hue_saturation=0.45,
                       size_range=(3.0, 5.0)):
    """Grayscale shapes (background) vs hue-painted shapes (target).

    Hues are partially desaturated towards gray by default: the class stays
    exactly recoverable from mean channels while color stops dominating the
    pixel variance, which keeps the common space from leaning on it.
    """
    if n_bg <= 0 or n_tg <= 0:
        raise ValueError("counts must be positive")
    if not 0.0 < hue_saturation <= 1.0:
        raise ValueError("hue_saturation must be in (0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 3002)))
    n = n_bg + n_tg
    shape_names = ("square", "disc", "triangle")
    shape_labels = _balanced_labels(rng, n, len(shape_names))
    hue_labels = _balanced_labels(rng, n_tg, len(HUES))
    palette = hue_palette(hue_saturation)

    inputs = np.zeros((n, img_size * img_size * 3))
    center = img_size / 2.0
    for i in range(n):
        cx = center + rng.uniform(-2.0, 2.0)
        cy = center + rng.uniform(-2.0, 2.0)
        r = rng.uniform(*size_range)
        mask = _shape_mask(shape_names[shape_labels[i]], cx, cy, r, img_size)
        if i < n_bg:
            gray = rng.uniform(0.55, 0.95)
            img = mask[:, :, None] * gray * np.ones(3)
        else:
            intensity = rng.uniform(0.7, 1.0)
            img = mask[:, :, None] * (palette[hue_labels[i - n_bg]] * intensity)
        inputs[i] = img.ravel()

    origin = np.zeros(n, dtype=np.uint8)
    origin[n_bg:] = TARGET
    hue = np.full(n, np.nan)
    hue[n_bg:] = hue_labels
    return CADataset(
        kind="colored_shapes",
        inputs=inputs,
        origin=origin,
        factors={"shape": shape_labels.astype(np.float64), "hue": hue},
        factor_kinds={"shape": "categorical", "hue": "categorical"},
        factor_roles={"shape": "common", "hue": "salient"},
        seed=seed,
        image_shape=(img_size, img_size, 3),
    )


_TEXTURE_PERIODS = (2, 2, 3, 3)


def _texture(tex_class, phase, base, amp, img_size):
    ii, jj = np.meshgrid(np.arange(img_size), np.arange(img_size), indexing="ij")
    p = _TEXTURE_PERIODS[tex_class]
    if tex_class == 0:
        stripe = (jj // p + phase) % 2
    elif tex_class == 1:
        stripe = (ii // p + phase) % 2
    elif tex_class == 2:
        stripe = (ii // p + jj // p + phase) % 2
    else:
        stripe = ((ii + jj) // p + phase) % 2
    return base + amp * stripe


def gen_attr_sprites(n_bg, n_tg, seed=0, img_size=16):
    """Procedural texture grids; targets carry one sprite with 5 attributes."""
    if n_bg <= 0 or n_tg <= 0:
        raise ValueError("counts must be positive")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 3003)))
    n = n_bg + n_tg
    tex_labels = _balanced_labels(rng, n, 4)
    shape_labels = _balanced_labels(rng, n_tg, len(SPRITE_SHAPES))

    attr_names = ["shape", "zoom", "rotation", "pos_x", "pos_y"]
    attributes = np.full((n, 5), np.nan)
    inputs = np.zeros((n, img_size * img_size * 3))
    for i in range(n):
        phase = int(rng.integers(0, 2))
        base = rng.uniform(0.05, 0.12)
        amp = rng.uniform(0.18, 0.28)
        img = _texture(tex_labels[i], phase, base, amp, img_size)
        if i >= n_bg:
            k = i - n_bg
            zoom = rng.uniform(0.5, 1.0)
            rotation = rng.uniform(-45.0, 45.0)
            x, y = rng.uniform(0.0, 1.0, 2)
            attributes[i] = (shape_labels[k], zoom, rotation, x, y)
            mask = render_sprite(shape_labels[k], zoom, rotation, x, y, img_size)
            img = img * (1.0 - mask) + mask  # sprite painted at intensity 1
        inputs[i] = np.repeat(img[:, :, None], 3, axis=2).ravel()

    origin = np.zeros(n, dtype=np.uint8)
    origin[n_bg:] = TARGET
    factors = {"texture": tex_labels.astype(np.float64)}
    factor_kinds = {"texture": "categorical"}
    factor_roles = {"texture": "common"}
    for j, name in enumerate(attr_names):
        col = np.full(n, np.nan)
        col[n_bg:] = attributes[n_bg:, j]
        factors[f"sprite_{name}"] = col
        factor_kinds[f"sprite_{name}"] = "categorical" if name == "shape" else "continuous"
        factor_roles[f"sprite_{name}"] = "salient"
    return CADataset(
        kind="attr_sprites",
        inputs=inputs,
        origin=origin,
        factors=factors,
        factor_kinds=factor_kinds,
        factor_roles=factor_roles,
        seed=seed,
        attributes=attributes,
        attribute_names=attr_names,
        image_shape=(img_size, img_size, 3),
    )


# ---------------------------------------------------------------------------
# views

_SHIFT_TABLES = {}


def _shift_table(n, d):
    key = (n, d)
    table = _SHIFT_TABLES.get(key)
    if table is None:
        table = np.clip(np.arange(n) + d, 0, n - 1)
        _SHIFT_TABLES[key] = table
    return table


def make_views(sample, spec, k, seed):
    """k independent draws of the transform chain for one sample.

    Deterministic given (sample id, seed, view index): one stream is opened
    per (seed, sample id) and views consume it in index order with a fixed
    draw layout. seed may be an int or a tuple of non-negative ints.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    spec.validate(sample.image_shape)
    seed_tuple = seed if isinstance(seed, tuple) else (int(seed),)
    rng = np.random.default_rng((*seed_tuple, int(sample.id)))
    views = []
    for _ in range(k):
        x = np.array(sample.input, dtype=np.float64)
        if sample.image_shape is not None:
            img = x.reshape(sample.image_shape)
            t = spec.translate_px
            if t > 0:
                dy, dx = rng.integers(-t, t + 1, size=2)
                h, w = sample.image_shape[:2]
                # shift with edge replication, via clipped index lookup
                img = img[_shift_table(h, int(dy))[:, None], _shift_table(w, int(dx))[None, :]]
            if spec.hflip_prob > 0 and rng.random() < spec.hflip_prob:
                img = img[:, ::-1]
            if spec.brightness_range is not None:
                lo, hi = spec.brightness_range
                img = img * rng.uniform(lo, hi)
                np.clip(img, 0.0, 1.0, out=img)
            x = np.ascontiguousarray(img).ravel()
        if spec.noise_std > 0:
            x = x + rng.normal(0.0, spec.noise_std, x.shape)
        views.append(x)
    return views
