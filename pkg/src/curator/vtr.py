"""Visual-token reduction as a pure array transformation.

A k-frame grid of (p + 1) tokens per frame (patch tokens plus the index-0
classification token) is reduced to the full token set of a few anchor
frames plus only the classification token of every other frame. With the
default mode that's k + p output tokens instead of k * (p + 1), which is
what lets the frame count scale up without blowing up the sequence fed to
a language decoder. Also houses the generation/matching loss combiner of
the multi-task variant.
"""

from __future__ import annotations

import numpy as np

from .model import CorpusError, TokenGrid

REDUCTION_MODES = ("middle_only", "middle_first_last")


def middle_frame_index(k: int) -> int:
    # 0-based floor(k/2): for even k this picks the later of the two central frames.
    return k // 2


def reduce_tokens(grid: TokenGrid, mode: str = "middle_only"
                  ) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Select the reduced token set and report each row's provenance.

    middle_only: all p+1 tokens of the middle frame (a contiguous prefix in
    original order), then the classification token of every other frame in
    ascending frame order; k + p rows.

    middle_first_last: all tokens of the first, middle and last frames
    (ascending frame blocks), then the classification token of the rest;
    k + 3p rows, requires k >= 3.

    Every output row is a copy, bit-identical to the input row named by its
    provenance (frame, token_index) entry.
    """
    if mode not in REDUCTION_MODES:
        raise CorpusError(f"unknown reduction mode {mode!r}")
    mid = middle_frame_index(grid.k)
    if mode == "middle_only":
        full_frames = [mid]
    else:
        if grid.k < 3:
            raise CorpusError("middle_first_last needs at least 3 frames")
        full_frames = sorted({0, mid, grid.k - 1})

    provenance: list[tuple[int, int]] = []
    if mode == "middle_only":
        provenance.extend((mid, t) for t in range(grid.p + 1))
        provenance.extend((f, 0) for f in range(grid.k) if f != mid)
    else:
        for f in full_frames:
            provenance.extend((f, t) for t in range(grid.p + 1))
        provenance.extend((f, 0) for f in range(grid.k) if f not in full_frames)

    rows = np.stack([grid.values[f, t] for f, t in provenance]).copy()
    return rows, provenance


def combine_losses(w: float, l_gen: float, l_match: float) -> float:
    """Weighted sum of the caption-generation and video-text-matching losses."""
    if not 0.0 <= w <= 1.0:
        raise CorpusError(f"loss weight {w} outside [0, 1]")
    return w * l_gen + (1.0 - w) * l_match
