"""Semantic grouping: suppress redundant phrases, then align frames to the
survivors.

Suppression compares phrases through their word-attention rows: R = A A^T,
where r[i,j] measures how similar the composition of phrases i and j is.
Off-diagonal pairs (i < j, row-major) whose similarity exceeds tau trigger a
discard of the member with the larger row sum (the one more similar to
everything else); ties discard j. Pairs where either member is already gone
are skipped, and row sums include the diagonal, computed once from the full
R. At least one phrase always survives.

The kept/discarded decision is discrete and treated as a constant during
backpropagation: gradients flow through the surviving rows only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .datamodel import NumericError


@dataclass
class AlignerParams:
    """Eq-style additive attention parameters shared by the aligner and the
    contrastive loss: score(p, v) = u^T tanh(U p + H v + b)."""

    u: ad.Tensor      # [d_joint x 1]
    U: ad.Tensor      # [d_word x d_joint]
    H: ad.Tensor      # [d_video x d_joint]
    b: ad.Tensor      # [1 x d_joint]

    def named(self, prefix: str = "aligner") -> dict[str, ad.Tensor]:
        return {f"{prefix}.u": self.u, f"{prefix}.U": self.U,
                f"{prefix}.H": self.H, f"{prefix}.b": self.b}


@dataclass
class SuppressionResult:
    kept: list[int]           # strictly increasing indices into the originals
    P_hat: ad.Tensor          # [M x d_word] surviving phrase rows
    A_hat: ad.Tensor          # [M x (t-1)] their word-attention rows
    R: np.ndarray             # [(t-1) x (t-1)] similarity matrix A A^T


@dataclass
class SemanticGroupSet:
    S: ad.Tensor              # [M x (d_word + d_video)] rows [p_hat ; aligned]
    alpha: ad.Tensor          # [M x N] frame-attention weights
    aligned: ad.Tensor        # [M x d_video] attention-weighted frame sums


def suppression_keep(R: np.ndarray, tau: float) -> list[int]:
    """Indices surviving the pairwise redundancy sweep over R."""
    k = R.shape[0]
    alive = np.ones(k, dtype=bool)
    row_sums = R.sum(axis=1)
    for i in range(k):
        for j in range(i + 1, k):
            if not (alive[i] and alive[j]):
                continue
            if R[i, j] > tau:
                if row_sums[i] > row_sums[j]:
                    alive[i] = False
                else:
                    alive[j] = False
    return [int(i) for i in np.flatnonzero(alive)]


def suppress(P: ad.Tensor, A: ad.Tensor, tau: float) -> SuppressionResult:
    """Filter redundant phrases; selection is computed on detached values."""
    R = A.data @ A.data.T
    kept = suppression_keep(R, tau)
    return SuppressionResult(
        kept=kept,
        P_hat=ad.take_rows(P, kept),
        A_hat=ad.take_rows(A, kept),
        R=R,
    )


def relevance(P_hat: ad.Tensor, frames: ad.Tensor,
              params: AlignerParams) -> ad.Tensor:
    """Raw (pre-softmax) phrase-to-frame scores, one row per phrase."""
    for t in (params.u, params.U, params.H, params.b):
        if not np.all(np.isfinite(t.data)):
            raise NumericError("non-finite aligner parameters")
    m = P_hat.shape[0]
    n = frames.shape[0]
    p_proj = ad.matmul(P_hat, params.U)            # [M x d_joint]
    f_proj = ad.matmul(frames, params.H)           # [N x d_joint]
    joint = ad.tanh(ad.repeat_rows(p_proj, n) + ad.tile_rows(f_proj, m) + params.b)
    return ad.reshape(ad.matmul(joint, params.u), (m, n))


def align(P_hat: ad.Tensor, frames: ad.Tensor,
          params: AlignerParams) -> SemanticGroupSet:
    """Softmax the relevance rows over the frames and build the groups
    s_i = [p_hat_i ; sum_j alpha_ij v_j]."""
    alpha = ad.softmax(relevance(P_hat, frames, params))
    aligned = ad.matmul(alpha, frames)
    S = ad.concat([P_hat, aligned], axis=1)
    return SemanticGroupSet(S=S, alpha=alpha, aligned=aligned)
