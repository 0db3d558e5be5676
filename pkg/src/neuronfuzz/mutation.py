"""Semantics-preserving image mutation with reference-image tracking.

Eight transformations in two classes: pixel-value transforms (contrast,
brightness, blur, noise) may be applied repeatedly; affine transforms
(translation, scaling, shear, rotation) at most once per lineage, since
stacked geometry changes quickly destroy the image's meaning.

Every retained mutant satisfies the pixel-change constraint against its
reference image: either fewer than alpha * size pixels changed (any
magnitude), or the maximum per-pixel change stays below beta * 255.
When an affine transform is accepted, the reference becomes the same
transform applied to the lineage's original image, so later pixel
comparisons line up spatially.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

AFFINE_TRANSFORMS = ("translation", "scaling", "shear", "rotation")
PIXEL_TRANSFORMS = ("contrast", "brightness", "blur", "noise")
ALL_TRANSFORMS = AFFINE_TRANSFORMS + PIXEL_TRANSFORMS


@dataclass
class MutationConfig:
    alpha: float = 0.02  # changed-pixel count threshold, fraction of image size
    beta: float = 0.20  # max per-pixel change threshold, fraction of 255
    try_num: int = 50  # mutation attempts before giving up on a seed
    translation_frac: float = 0.10  # |shift| bound as fraction of each dimension
    scaling_range: tuple[float, float] = (0.9, 1.1)
    shear_range: tuple[float, float] = (-0.1, 0.1)
    rotation_range: tuple[float, float] = (-15.0, 15.0)  # degrees
    contrast_range: tuple[float, float] = (0.8, 1.2)  # multiplicative gain
    brightness_range: tuple[float, float] = (-20.0, 20.0)  # additive delta
    blur_sigma_range: tuple[float, float] = (0.5, 1.5)  # 3x3 gaussian sigma
    noise_sigma_range: tuple[float, float] = (1.0, 8.0)  # additive gaussian, u8 scale

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError(f"alpha and beta must be in (0, 1), got {self.alpha}, {self.beta}")
        if self.try_num < 1:
            raise ValueError(f"try_num must be >= 1, got {self.try_num}")


@dataclass
class Seed:
    """One image plus its mutation lineage.

    ``original`` is the ancestor from the initial corpus, ``reference``
    the affine-transformed original (or the original itself) that the
    pixel-change constraint is computed against, and ``state`` is 1 iff
    an affine transform has been used.
    """

    image: np.ndarray
    original: np.ndarray
    reference: np.ndarray
    state: int
    label: int
    transform_log: tuple[tuple[str, object], ...] = ()

    @classmethod
    def from_image(cls, image: np.ndarray, label: int) -> "Seed":
        return cls(image=image, original=image, reference=image, state=0, label=int(label))


def _warp(image: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    h, w, c = image.shape
    src = image[:, :, 0] if c == 1 else image
    out = cv2.warpAffine(
        src,
        matrix,
        (w, h),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )
    return out.reshape(h, w, c)


def _clip_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def apply_transform(
    image: np.ndarray, transform: str, param, rng: np.random.Generator
) -> np.ndarray:
    """Apply one named transform; output has the same shape, clamped to [0, 255].

    Affine transforms use bilinear interpolation with zero fill for
    out-of-frame samples. Only "noise" consumes the RNG.
    """
    if image.ndim != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected u8 [H, W, C] image, got {image.dtype} {image.shape}")
    h, w, _ = image.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    if transform == "contrast":
        return _clip_u8(image.astype(np.float32) * np.float32(param))
    if transform == "brightness":
        return _clip_u8(image.astype(np.float32) + np.float32(param))
    if transform == "blur":
        out = cv2.GaussianBlur(image, (3, 3), sigmaX=float(param))
        return out.reshape(image.shape)
    if transform == "noise":
        noise = rng.normal(0.0, float(param), size=image.shape)
        return _clip_u8(image.astype(np.float64) + noise)
    if transform == "translation":
        tx, ty = param
        matrix = np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]], dtype=np.float64)
        return _warp(image, matrix)
    if transform == "scaling":
        f = float(param)
        matrix = np.array(
            [[f, 0.0, (1.0 - f) * cx], [0.0, f, (1.0 - f) * cy]], dtype=np.float64
        )
        return _warp(image, matrix)
    if transform == "shear":
        s = float(param)
        matrix = np.array([[1.0, s, -s * cy], [0.0, 1.0, 0.0]], dtype=np.float64)
        return _warp(image, matrix)
    if transform == "rotation":
        matrix = cv2.getRotationMatrix2D((cx, cy), float(param), 1.0)
        return _warp(image, matrix)
    raise ValueError(f"unknown transform {transform!r}")


def pick_param(transform: str, shape: tuple, cfg: MutationConfig, rng: np.random.Generator):
    h, w = shape[:2]
    if transform == "translation":
        return (
            float(rng.uniform(-cfg.translation_frac * w, cfg.translation_frac * w)),
            float(rng.uniform(-cfg.translation_frac * h, cfg.translation_frac * h)),
        )
    ranges = {
        "scaling": cfg.scaling_range,
        "shear": cfg.shear_range,
        "rotation": cfg.rotation_range,
        "contrast": cfg.contrast_range,
        "brightness": cfg.brightness_range,
        "blur": cfg.blur_sigma_range,
        "noise": cfg.noise_sigma_range,
    }
    lo, hi = ranges[transform]
    return float(rng.uniform(lo, hi))


def constraint_satisfied(
    reference: np.ndarray, candidate: np.ndarray, cfg: MutationConfig
) -> bool:
    """Pixel-change constraint between a candidate and its reference image.

    True iff fewer than alpha * size pixels changed (then any magnitude
    up to 255 is allowed), or the max per-pixel change is below beta * 255.
    """
    if reference.shape != candidate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {candidate.shape}")
    diff = np.abs(reference.astype(np.int16) - candidate.astype(np.int16))
    l0 = int(np.count_nonzero(diff))
    linf = int(diff.max()) if diff.size else 0
    if l0 < cfg.alpha * diff.size:
        return linf <= 255
    return linf < cfg.beta * 255.0


def mutate(seed: Seed, cfg: MutationConfig, rng: np.random.Generator) -> Seed:
    """Try up to ``try_num`` random transforms; return the first valid mutant.

    Affine transforms are only eligible while state == 0; an accepted
    affine sets state to 1 and rebases the reference to the transformed
    original, and the constraint is checked against that rebased
    reference so compared pixels correspond. Returns the input seed
    unchanged if every trial fails.
    """
    choices = ALL_TRANSFORMS if seed.state == 0 else PIXEL_TRANSFORMS
    for _ in range(cfg.try_num):
        transform = choices[int(rng.integers(len(choices)))]
        param = pick_param(transform, seed.image.shape, cfg, rng)
        candidate = apply_transform(seed.image, transform, param, rng)
        if transform in AFFINE_TRANSFORMS:
            reference = apply_transform(seed.original, transform, param, rng)
            state = 1
        else:
            reference = seed.reference
            state = seed.state
        if constraint_satisfied(reference, candidate, cfg):
            return Seed(
                image=candidate,
                original=seed.original,
                reference=reference,
                state=state,
                label=seed.label,
                transform_log=seed.transform_log + ((transform, param),),
            )
    return seed


def mutation_potential(seed: Seed, cfg: MutationConfig) -> float:
    """Remaining pixel-change budget: beta * 255 * size - sum |image - reference|."""
    used = np.abs(seed.image.astype(np.int64) - seed.reference.astype(np.int64)).sum()
    return float(cfg.beta * 255.0 * seed.image.size - used)
