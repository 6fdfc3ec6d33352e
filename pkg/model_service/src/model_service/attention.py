"""Attention capture and aggregation for the inpainting engine.

Engines report per-step, per-layer cross-attention maps (one per prompt
token) and optionally a per-step self-attention matrix over latent cells.
Aggregation keeps the final N steps, averages the subject-token maps across
steps and layers, min-max normalizes to [0, 1], and (when affordable)
propagates the result through the averaged self-attention for a boundary-
refined variant.
"""
from __future__ import annotations

from typing import Optional

import numpy as np


def minmax(grid: np.ndarray) -> np.ndarray:
    lo, hi = float(grid.min()), float(grid.max())
    if hi <= lo:
        return np.zeros_like(grid, dtype=np.float32)
    return ((grid - lo) / (hi - lo)).astype(np.float32)


class AttentionCapture:
    def __init__(
        self,
        latent_w: int,
        latent_h: int,
        subject_tokens: list[int],
        total_steps: int,
        last_n: int,
        collect_self: bool = True,
    ):
        self.latent_w = latent_w
        self.latent_h = latent_h
        self.subject_tokens = list(subject_tokens)
        self.first_kept_step = max(0, total_steps - last_n)
        self.collect_self = collect_self
        self._cross_sum = np.zeros((latent_h, latent_w), dtype=np.float64)
        self._cross_count = 0
        self._self_sum: Optional[np.ndarray] = None
        self._self_count = 0

    def record_cross(self, step: int, layer: int, token_maps: np.ndarray) -> None:
        """token_maps: (n_tokens, latent_h, latent_w) for one step and layer."""
        if step < self.first_kept_step:
            return
        if token_maps.shape[1:] != (self.latent_h, self.latent_w):
            raise ValueError("token map grid does not match the advertised latent grid")
        subject = token_maps[self.subject_tokens]
        self._cross_sum += subject.mean(axis=0)
        self._cross_count += 1

    def record_self(self, step: int, matrix: np.ndarray) -> None:
        """matrix: (cells, cells) row-stochastic self-attention over latent cells."""
        if not self.collect_self or step < self.first_kept_step:
            return
        cells = self.latent_w * self.latent_h
        if matrix.shape != (cells, cells):
            raise ValueError("self-attention matrix does not match the latent grid")
        if self._self_sum is None:
            self._self_sum = np.zeros((cells, cells), dtype=np.float64)
        self._self_sum += matrix
        self._self_count += 1

    def finalize(self) -> tuple[np.ndarray, Optional[np.ndarray]]:
        if self._cross_count == 0:
            cross = np.zeros((self.latent_h, self.latent_w), dtype=np.float32)
        else:
            cross = minmax(self._cross_sum / self._cross_count)
        refined = None
        if self._self_sum is not None and self._self_count:
            mean_self = self._self_sum / self._self_count
            propagated = (mean_self @ cross.astype(np.float64).ravel()).reshape(
                self.latent_h, self.latent_w
            )
            refined = minmax(propagated)
        return cross, refined
