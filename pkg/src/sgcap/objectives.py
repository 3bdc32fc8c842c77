"""Training objectives: cross-entropy over the gold caption, the contrastive
attention penalty, and their weighted combination.

The contrastive term asks each surviving phrase to place its relevance mass
on the true video's frames rather than on the frames of a sampled negative
video: raw scores against the 2N concatenated frames are softmaxed jointly,
and p_ca is the probability mass landing on the positive half. The same
scoring parameters as the aligner are used, but the 2N-way softmax is
computed separately from the N-way softmax used for alignment, so inference
never needs a negative video.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .grouping import AlignerParams, relevance

PROB_FLOOR = 1e-12

_clamp_warnings = 0


def clamp_warning_count() -> int:
    """Number of times a probability had to be floored at 1e-12."""
    return _clamp_warnings


def reset_clamp_warnings() -> None:
    global _clamp_warnings
    _clamp_warnings = 0


def _note_clamps(values: np.ndarray) -> None:
    global _clamp_warnings
    _clamp_warnings += int(np.count_nonzero(values < PROB_FLOOR))


@dataclass
class LossBreakdown:
    total: float
    ce: float
    ca: float
    ca_weight: float
    p_ca_values: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"total": self.total, "ce": self.ce, "ca": self.ca,
                "ca_weight": self.ca_weight,
                "p_ca_values": self.p_ca_values}


def _as_tensor(x) -> ad.Tensor:
    return x if isinstance(x, ad.Tensor) else ad.Tensor(np.asarray(x, dtype=np.float64))


def cross_entropy(step_probs, gold_ids) -> ad.Tensor:
    """Sum of -log p(y_t) with one probability row per gold token (EOS
    included). Probabilities below 1e-12 are floored and counted."""
    gold_ids = list(gold_ids)
    if len(step_probs) != len(gold_ids):
        raise ValueError("need exactly one probability row per gold token")
    rows = ad.concat([_as_tensor(p) for p in step_probs], axis=0)
    picked = ad.pick(rows, np.arange(len(gold_ids)), gold_ids)
    _note_clamps(picked.data)
    return ad.scale(ad.tsum(ad.log(ad.clamp_min(picked, PROB_FLOOR))), -1.0)


def ca_from_scores(pos_scores, neg_scores) -> tuple[ad.Tensor, list[float]]:
    """Contrastive penalty from raw relevance score matrices [M x N] against
    positive and negative frames. Returns (loss, per-group p_ca values)."""
    pos_scores = _as_tensor(pos_scores)
    neg_scores = _as_tensor(neg_scores)
    m, n = pos_scores.shape
    joint = ad.softmax(ad.concat([pos_scores, neg_scores], axis=1))
    p_ca = ad.tsum(ad.narrow(joint, 1, 0, n), axis=1)     # [M]
    _note_clamps(p_ca.data)
    loss = ad.scale(ad.tsum(ad.log(ad.clamp_min(p_ca, PROB_FLOOR))), -1.0)
    return loss, [float(v) for v in p_ca.data]


def contrastive_attention(P_hat: ad.Tensor, pos_frames: ad.Tensor,
                          neg_frames: ad.Tensor, params: AlignerParams
                          ) -> tuple[ad.Tensor, list[float]]:
    """One decoding step's contrastive term over the surviving phrases."""
    if pos_frames.shape[0] != neg_frames.shape[0]:
        raise ValueError("positive and negative videos must have equal frame counts")
    pos = relevance(P_hat, pos_frames, params)
    neg = relevance(P_hat, neg_frames, params)
    return ca_from_scores(pos, neg)


def combine(ce, ca, ca_weight: float):
    """Total loss ce + ca_weight * ca; works on floats or tensors."""
    if isinstance(ce, ad.Tensor) or isinstance(ca, ad.Tensor):
        return _as_tensor(ce) + ad.scale(_as_tensor(ca), ca_weight)
    return ce + ca_weight * ca
