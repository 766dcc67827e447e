"""Image ingestion, the synthetic desk-scale dataset, and the 8:1:1 split."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from torch import Tensor

from ..config import ExperimentConfig

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}


def to_unit(img: np.ndarray) -> Tensor:
    """``uint8 (H, W, 3)`` -> float32 ``(3, H, W)`` in ``[0, 1]``."""
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).float() / 255.0


def to_uint8(x: Tensor) -> np.ndarray:
    return (x.detach().clamp(0, 1) * 255.0).round().to(torch.uint8).permute(1, 2, 0).numpy()


def read_image(path: str | Path, size: int | None = None) -> Tensor:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.BICUBIC)
        return to_unit(np.asarray(im))


def write_image(path: str | Path, x: Tensor) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(x)).save(path)


def render_shapes(
    index: int,
    size: int = 32,
    seed: int = 0,
    supersample: int = 4,
    max_shapes: int = 3,
    background: str = "gradient",
) -> np.ndarray:
    """One synthetic RGB image: a two-colour gradient (or flat fill) with 1 to ``max_shapes`` flat shapes.

    Shapes are anti-aliased by supersampling, so edges carry real sub-pixel
    detail for the null space to recover. Deterministic in ``(seed, index)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    n = size * supersample
    yy, xx = (np.mgrid[0:n, 0:n] + 0.5) / supersample
    c0, c1 = rng.uniform(0, 1, (2, 3))
    theta = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(theta) * (xx - size / 2) + np.sin(theta) * (yy - size / 2)) / size + 0.5
    if background == "flat":
        img = np.broadcast_to(c0, (n, n, 3)).copy()
    else:
        img = c0 + np.clip(ramp, 0, 1)[..., None] * (c1 - c0)
    for _ in range(rng.integers(1, max_shapes + 1)):
        colour = rng.uniform(0, 1, 3)
        kind = rng.integers(0, 3)
        cx, cy = rng.uniform(0.15 * size, 0.85 * size, 2)
        if kind == 0:
            r = rng.uniform(0.1, 0.3) * size
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r**2
        elif kind == 1:
            hw, hh = rng.uniform(0.08, 0.3, 2) * size
            mask = (np.abs(xx - cx) <= hw) & (np.abs(yy - cy) <= hh)
        else:
            # triangle as the intersection of three half-planes
            r = rng.uniform(0.15, 0.35) * size
            phase = rng.uniform(0, 2 * np.pi)
            pts = [(cx + r * np.cos(phase + k * 2 * np.pi / 3), cy + r * np.sin(phase + k * 2 * np.pi / 3)) for k in range(3)]
            mask = np.ones_like(xx, dtype=bool)
            for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
                mask &= (x2 - x1) * (yy - y1) - (y2 - y1) * (xx - x1) >= 0
        img[mask] = colour
    img = img.reshape(size, supersample, size, supersample, 3).mean(axis=(1, 3))
    return (np.clip(img, 0, 1) * 255).round().astype(np.uint8)


def make_shapes(n: int, size: int = 32, seed: int = 0, **style) -> Tensor:
    """``n`` rendered images; ``style`` forwards ``max_shapes`` and ``background``."""
    return torch.stack([to_unit(render_shapes(i, size, seed, **style)) for i in range(n)])


def write_shapes_dataset(out_dir: str | Path, n: int, size: int = 32, seed: int = 0) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        Image.fromarray(render_shapes(i, size, seed)).save(out_dir / f"{i:06d}.png")
    return out_dir


def ingest_folder(root: str | Path, size: int) -> tuple[Tensor, list[str]]:
    """Decode every image under ``root`` (sorted by path) to ``(N, 3, size, size)``.

    Unreadable files are skipped and returned by name.
    """
    files = sorted(p for p in Path(root).rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
    images, skipped = [], []
    for p in files:
        try:
            images.append(read_image(p, size))
        except (OSError, UnidentifiedImageError, ValueError):
            skipped.append(str(p))
    if skipped:
        log.warning("skipped %d unreadable image(s): %s", len(skipped), ", ".join(skipped))
    if not images:
        raise ValueError(f"no readable images under {root}")
    return torch.stack(images), skipped


def split_indices(n: int, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded disjoint, exhaustive train/val/test index sets.

    Validation and test sizes are rounded and kept nonempty once ``n >= 3``;
    training takes the remainder.
    """
    if n < 1:
        raise ValueError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(ratios[1] * n))
    n_test = int(round(ratios[2] * n))
    if n >= 3:
        n_val, n_test = max(n_val, 1), max(n_test, 1)
    n_train = n - n_val - n_test
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def load_dataset(cfg: ExperimentConfig) -> Tensor:
    d = cfg.dataset
    if d.name == "shapes":
        return make_shapes(d.n_images, d.image_size, d.seed, max_shapes=d.max_shapes, background=d.background)
    images, _ = ingest_folder(cfg.dataset_root(), d.image_size)
    return images


def load_and_split(cfg: ExperimentConfig) -> tuple[Tensor, Tensor, Tensor]:
    images = load_dataset(cfg)
    tr, va, te = split_indices(len(images), cfg.split_ratios, cfg.split_seed)
    log.info("dataset %s: %d train / %d val / %d test", cfg.dataset.name, len(tr), len(va), len(te))
    return images[torch.from_numpy(tr)], images[torch.from_numpy(va)], images[torch.from_numpy(te)]
