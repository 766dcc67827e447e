"""Versioned on-disk checkpoints shared by the JSCC and DDPM models.

A checkpoint is a ``torch.save`` of a plain dict::

    {"format": "jsccdiff-checkpoint", "version": 1, "kind": "jscc" | "ddpm",
     "model": {...architecture...}, "state_dict": {...},
     "train_config": {...}, "seeds": {...}, "history": [...]}

Only tensors and builtin containers are stored, so files load with
``weights_only=True``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import torch

from .errors import MissingArtifactError

FORMAT = "jsccdiff-checkpoint"
VERSION = 1


def save_checkpoint(
    path: str | Path,
    kind: str,
    model_meta: dict,
    state_dict: dict,
    train_config: dict | None = None,
    seeds: dict | None = None,
    history: list | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "model": model_meta,
        "state_dict": {k: v.detach().cpu().clone() for k, v in state_dict.items()},
        "train_config": train_config or {},
        "seeds": seeds or {},
        "history": history or [],
    }
    torch.save(payload, path)
    return path


def read_checkpoint(path: str | Path, kind: str | None = None) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise ValueError(f"{path} is not a jsccdiff checkpoint")
    if payload["version"] > VERSION:
        raise ValueError(f"{path} has checkpoint version {payload['version']}, newest supported is {VERSION}")
    if kind is not None and payload["kind"] != kind:
        raise ValueError(f"{path} holds a {payload['kind']!r} model, expected {kind!r}")
    return payload
