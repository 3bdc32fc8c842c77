"""Phrase construction from the partially decoded caption.

Single-head scaled dot-product self-attention over the prefix word
embeddings: A = rowsoftmax((W Q)(W K)^T / sqrt(d_word)), P = A (W V). Row j
of A gives the word-composition weights of phrase j; those weights are what
the suppressor compares. With more than one layer configured, the returned A
comes from the final layer.

Prefix convention: before the first word is generated the single input row is
the start-symbol embedding; from the second step on the start symbol is
dropped and the rows are the decoded words themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .datamodel import DataError


@dataclass
class PhraseEncoderParams:
    layers: list[tuple[ad.Tensor, ad.Tensor, ad.Tensor]]  # (Q, K, V) per layer
    positions: ad.Tensor | None  # learned position table [max positions x d_word]

    def named(self, prefix: str = "phrase") -> dict[str, ad.Tensor]:
        out = {}
        for i, (q, k, v) in enumerate(self.layers):
            out[f"{prefix}.q{i}"] = q
            out[f"{prefix}.k{i}"] = k
            out[f"{prefix}.v{i}"] = v
        if self.positions is not None:
            out[f"{prefix}.pos"] = self.positions
        return out


@dataclass
class PhraseState:
    """Phrase matrix P [(t-1) x d_word] and word-attention matrix A
    [(t-1) x (t-1)] for one decoding step."""

    P: ad.Tensor
    A: ad.Tensor
    t: int


def encode_phrases(W: ad.Tensor, params: PhraseEncoderParams,
                   use_positional: bool = True, t: int = 0) -> PhraseState:
    """Self-attend over prefix embeddings W [(t-1) x d_word]."""
    k_rows, d_w = W.shape
    if k_rows == 0:
        raise DataError("phrase encoder needs at least one prefix row")
    h = W
    if use_positional and params.positions is not None:
        if k_rows > params.positions.shape[0]:
            raise DataError(
                f"prefix of {k_rows} rows exceeds the positional table "
                f"({params.positions.shape[0]} rows)"
            )
        h = h + ad.take_rows(params.positions, np.arange(k_rows))
    scale = 1.0 / np.sqrt(d_w)
    A = None
    for wq, wk, wv in params.layers:
        logits = ad.scale(ad.matmul(ad.matmul(h, wq), ad.transpose(ad.matmul(h, wk))),
                          scale)
        A = ad.softmax(logits)
        h = ad.matmul(A, ad.matmul(h, wv))
    return PhraseState(P=h, A=A, t=t)
