"""Dataset ingestion: sparse text parsing and synthetic generation."""

from typing import List, Optional

import numpy as np

from .data import Sample
from .errors import EmptyDataset, IoError, ParseError


def _parse_label(token: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"bad label {token!r}", line_no) from None
    if value in (1.0,):
        return 1.0
    if value in (0.0, -1.0):
        return -1.0
    raise ParseError(f"label must be 0, 1, +1 or -1, got {token!r}",
                     line_no)


def parse_sparse_dataset(path) -> List[Sample]:
    """Read "label idx:val idx:val ..." lines with 1-based ascending
    indices into samples with 0-based indices."""
    try:
        with open(path, "r") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    samples: List[Sample] = []
    for line_no, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        label = _parse_label(tokens[0], line_no)
        feats = []
        prev = 0
        for token in tokens[1:]:
            idx_str, _, val_str = token.partition(":")
            try:
                idx = int(idx_str)
                val = float(val_str)
            except ValueError:
                raise ParseError(f"bad feature token {token!r}",
                                 line_no) from None
            if idx < 1:
                raise ParseError(f"index {idx} is not 1-based", line_no)
            if idx <= prev:
                raise ParseError(
                    f"indices must be strictly ascending, got {idx} "
                    f"after {prev}", line_no)
            prev = idx
            feats.append((idx - 1, val))
        samples.append(Sample(len(samples), tuple(feats), label))
    if not samples:
        raise EmptyDataset(f"no samples in {path}")
    return samples


def serialize_sparse_dataset(samples) -> str:
    """Canonical text form; parsing it back yields an equal dataset."""
    lines = []
    for sample in samples:
        parts = ["+1" if sample.label > 0 else "-1"]
        parts.extend(f"{idx + 1}:{val!r}" for idx, val in sample.features)
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def generate_synthetic(n: int, d: int, margin: float,
                       noise_fraction: float, seed: int) -> List[Sample]:
    """Two Gaussian blobs along a seeded random unit direction.

    The along-direction component is folded away from the separating
    hyperplane, so the closest points of the two blobs sit exactly
    2*margin apart and the clean dataset is linearly separable, while
    distances from the hyperplane still vary sample to sample.
    noise_fraction flips that share of labels."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if margin <= 0:
        raise ValueError("margin must be positive")
    if not 0.0 <= noise_fraction < 1.0:
        raise ValueError("noise_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    labels = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    noise = rng.normal(size=(n, d))
    noise -= np.outer(noise @ direction, direction)
    along = margin + np.abs(rng.normal(size=n))
    points = noise + (labels * along)[:, None] * direction
    n_flip = int(noise_fraction * n)
    if n_flip:
        flip = rng.choice(n, size=n_flip, replace=False)
        labels[flip] = -labels[flip]
    samples = []
    for i in range(n):
        feats = tuple((j, float(points[i, j])) for j in range(d)
                      if points[i, j] != 0.0)
        samples.append(Sample(i, feats, float(labels[i])))
    return samples
