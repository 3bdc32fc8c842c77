"""Alignment quality against planted ground truth.

For synthetic examples the generator records which frame range belongs to
which concept. During a teacher-forced pass, each surviving phrase is
attributed to the prefix word dominating its word-attention row; when that
word is one of the example's concept tokens, the phrase's "precision" is the
alpha mass it puts inside that concept's true frame range. The start symbol
and connective words carry no ground truth and are skipped.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .corpus import Example, concept_token
from .datamodel import DataError
from .decoder import DecoderState


def _dominant_positions(internals) -> list[int]:
    """Prefix position most responsible for each surviving phrase."""
    if internals.suppression is not None:
        rows = internals.suppression.A_hat.data
        return [int(np.argmax(row)) for row in rows]
    if internals.phrase_state is not None:
        rows = internals.phrase_state.A.data
        return [int(np.argmax(row)) for row in rows]
    return list(internals.kept)  # group-by-word: phrase i is word i


def alignment_precision(model, examples: list[Example]) -> float:
    """Mean alpha mass inside the true segment, over every surviving phrase
    whose dominant word is a concept token. Teacher-forced on gold captions."""
    if not model.flags.use_semantic_aligner:
        raise DataError("alignment precision needs the semantic aligner")
    vocab = model.vocab
    masses: list[float] = []
    with ad.no_grad():
        for ex in examples:
            if not ex.concept_segments:
                continue
            segment_of = {vocab.index(concept_token(c)): (lo, hi)
                          for c, (lo, hi) in ex.concept_segments}
            frames = model.frames_tensor(ex.video)
            for caption in ex.captions:
                state = model.initial_state()
                for t in range(1, caption.length + 2):
                    _, _, internals = model.forward_step(frames, state)
                    prefix = state.prefix
                    rows = [vocab.sos] if not prefix else list(prefix)
                    alpha = internals.groups.alpha.data
                    for i, pos in enumerate(_dominant_positions(internals)):
                        token = rows[pos]
                        seg = segment_of.get(token)
                        if seg is None:
                            continue
                        lo, hi = seg
                        masses.append(float(alpha[i, lo:hi].sum()))
                    if t <= caption.length:
                        state = DecoderState(h=state.h, c=state.c,
                                             prefix=tuple(caption.tokens[:t]))
    if not masses:
        raise DataError("no phrase was attributable to a planted concept")
    return float(np.mean(masses))
