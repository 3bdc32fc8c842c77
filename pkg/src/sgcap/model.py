"""The full captioning model: parameter bundles for every stage plus the
per-step forward pass that wires them together, honoring the ablation flags.

Three operating modes:

* full pipeline: prefix -> phrases -> suppression -> frame alignment ->
  group attention -> LSTM -> word head;
* group-by-word: raw word embeddings stand in for phrases (no phrase
  encoder, no suppressor), alignment and the rest unchanged;
* frame-attention baseline: no grouping at all, the decoder attends over the
  raw frames directly (the classic temporal-attention decoder).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .datamodel import Config, DataError, Rng, Vocabulary, VideoFeatures
from .decoder import (
    DecoderState,
    GroupAttentionParams,
    LstmParams,
    OutputHeadParams,
    StepOutput,
    attend_groups,
    step,
)
from .grouping import AlignerParams, SemanticGroupSet, SuppressionResult, align, suppress
from .phrase_encoder import PhraseEncoderParams, PhraseState, encode_phrases


@dataclass(frozen=True)
class AblationFlags:
    use_semantic_aligner: bool = True
    use_phrase_suppressor: bool = True
    use_ca_loss: bool = True
    group_by_word: bool = False

    def __post_init__(self):
        if self.group_by_word and self.use_phrase_suppressor:
            raise DataError("group_by_word implies use_phrase_suppressor=False")
        if not self.use_semantic_aligner:
            if self.use_phrase_suppressor or self.use_ca_loss or self.group_by_word:
                raise DataError(
                    "the frame-attention baseline has no phrases: suppressor, "
                    "contrastive loss and group_by_word all require the aligner"
                )

    @classmethod
    def full(cls) -> "AblationFlags":
        return cls()

    @classmethod
    def ta_baseline(cls) -> "AblationFlags":
        return cls(use_semantic_aligner=False, use_phrase_suppressor=False,
                   use_ca_loss=False)

    @classmethod
    def from_spec(cls, spec: str) -> "AblationFlags":
        """Parse CLI syntax: comma list of enabled parts from {sa, ps, ca, gw};
        an empty string is the frame-attention baseline."""
        parts = {p.strip() for p in spec.split(",") if p.strip()}
        unknown = parts - {"sa", "ps", "ca", "gw", "none"}
        if unknown:
            raise DataError(f"unknown ablation flags: {sorted(unknown)}")
        if parts <= {"none"}:
            return cls.ta_baseline()
        return cls(
            use_semantic_aligner="sa" in parts or "gw" in parts,
            use_phrase_suppressor="ps" in parts,
            use_ca_loss="ca" in parts,
            group_by_word="gw" in parts,
        )

    def label(self) -> str:
        if not self.use_semantic_aligner:
            return "TA baseline"
        parts = ["SA(word)" if self.group_by_word else "SA"]
        if self.use_phrase_suppressor:
            parts.append("PS")
        if self.use_ca_loss:
            parts.append("CA")
        return "+".join(parts)


@dataclass
class StepInternals:
    """Detached per-step intermediates for dumps and tests."""

    t: int
    kept: list[int]
    phrase_state: PhraseState | None
    suppression: SuppressionResult | None
    groups: SemanticGroupSet | None
    P_hat: ad.Tensor | None


def _glorot(rng: Rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, shape)


@dataclass
class CaptionModel:
    config: Config
    flags: AblationFlags
    vocab: Vocabulary
    embed: ad.Tensor
    phrase: PhraseEncoderParams
    aligner: AlignerParams
    attend: GroupAttentionParams
    lstm: LstmParams
    head: OutputHeadParams

    @property
    def d_group(self) -> int:
        """Width of the decoder's attention targets."""
        cfg = self.config
        if not self.flags.use_semantic_aligner:
            return cfg.d_video
        return cfg.d_word + cfg.d_video

    def named_parameters(self) -> dict[str, ad.Tensor]:
        out = {"embed.E": self.embed}
        if self.flags.use_semantic_aligner:
            if not self.flags.group_by_word:
                out.update(self.phrase.named())
            out.update(self.aligner.named())
        out.update(self.attend.named())
        out.update(self.lstm.named())
        out.update(self.head.named())
        return out

    def frames_tensor(self, video: VideoFeatures) -> ad.Tensor:
        if video.n_frames != self.config.n_frames:
            raise DataError(
                f"{video.video_id}: {video.n_frames} frames, model expects "
                f"{self.config.n_frames}"
            )
        return ad.constant(video.frames)

    def initial_state(self) -> DecoderState:
        d_h = self.config.d_hidden
        return DecoderState(h=ad.constant(np.zeros((1, d_h))),
                            c=ad.constant(np.zeros((1, d_h))), prefix=())

    def prefix_rows(self, prefix: tuple[int, ...]) -> list[int]:
        """Embedding rows feeding the phrase encoder: the start symbol alone
        before the first word; afterwards the decoded words without it."""
        return [self.vocab.sos] if not prefix else list(prefix)

    def build_groups(self, frames: ad.Tensor, prefix: tuple[int, ...]):
        """Phrase -> suppression -> alignment for one step; returns
        (group set, internals)."""
        t = len(prefix) + 1
        rows = self.prefix_rows(prefix)
        W = ad.take_rows(self.embed, rows)
        phrase_state = None
        suppression = None
        if self.flags.group_by_word:
            P_hat = W
            kept = list(range(len(rows)))
        else:
            phrase_state = encode_phrases(
                W, self.phrase, use_positional=self.config.use_positional, t=t
            )
            if self.flags.use_phrase_suppressor:
                suppression = suppress(phrase_state.P, phrase_state.A,
                                       self.config.tau)
                P_hat = suppression.P_hat
                kept = suppression.kept
            else:
                P_hat = phrase_state.P
                kept = list(range(len(rows)))
        groups = align(P_hat, frames, self.aligner)
        internals = StepInternals(t=t, kept=kept, phrase_state=phrase_state,
                                  suppression=suppression, groups=groups,
                                  P_hat=P_hat)
        return groups, internals

    def forward_step(self, frames: ad.Tensor, state: DecoderState
                     ) -> tuple[DecoderState, StepOutput, StepInternals]:
        """One decoding step: build attention targets from the current
        prefix, attend, advance the LSTM, emit the word distribution."""
        prefix = state.prefix
        if self.flags.use_semantic_aligner:
            groups, internals = self.build_groups(frames, prefix)
            targets = groups.S
        else:
            targets = frames
            internals = StepInternals(t=len(prefix) + 1, kept=[],
                                      phrase_state=None, suppression=None,
                                      groups=None, P_hat=None)
        beta, x = attend_groups(state.h, targets, self.attend)
        w_prev = prefix[-1] if prefix else self.vocab.sos
        new_state, out = step(state, x, w_prev, self.embed, self.lstm, self.head,
                              beta=beta)
        return new_state, out, internals


def init_model(config: Config, flags: AblationFlags, vocab: Vocabulary,
               rng: Rng | None = None,
               embed_matrix: np.ndarray | None = None) -> CaptionModel:
    """Build a model with freshly initialized parameters.

    The draw order is fixed (embedding, positions, phrase layers, aligner,
    group attention, LSTM, head) so identical seeds give identical models.
    """
    rng = rng or Rng(config.seed)
    n_vocab = len(vocab)
    d_w, d_h, d_v = config.d_word, config.d_hidden, config.d_video
    d_s = config.d_joint
    d_g = d_v if not flags.use_semantic_aligner else d_w + d_v

    if embed_matrix is None:
        embed_matrix = rng.uniform(-0.1, 0.1, (n_vocab, d_w))
    elif embed_matrix.shape != (n_vocab, d_w):
        raise DataError("embedding matrix shape mismatch")
    embed = ad.parameter(embed_matrix)

    positions = ad.parameter(rng.uniform(-0.1, 0.1, (config.max_len + 1, d_w)))
    layers = [
        tuple(ad.parameter(_glorot(rng, d_w, d_w, (d_w, d_w))) for _ in range(3))
        for _ in range(config.phrase_layers)
    ]
    phrase = PhraseEncoderParams(layers=layers, positions=positions)

    aligner = AlignerParams(
        u=ad.parameter(_glorot(rng, d_s, 1, (d_s, 1))),
        U=ad.parameter(_glorot(rng, d_w, d_s, (d_w, d_s))),
        H=ad.parameter(_glorot(rng, d_v, d_s, (d_v, d_s))),
        b=ad.parameter(np.zeros((1, d_s))),
    )
    attend = GroupAttentionParams(
        u=ad.parameter(_glorot(rng, d_s, 1, (d_s, 1))),
        U=ad.parameter(_glorot(rng, d_h, d_s, (d_h, d_s))),
        H=ad.parameter(_glorot(rng, d_g, d_s, (d_g, d_s))),
        b=ad.parameter(np.zeros((1, d_s))),
    )

    d_in = d_g + d_w
    bias = np.zeros((1, 4 * d_h))
    bias[0, d_h:2 * d_h] = 1.0  # forget-gate bias
    lstm = LstmParams(
        w_in=ad.parameter(_glorot(rng, d_in, 4 * d_h, (d_in, 4 * d_h))),
        w_rec=ad.parameter(_glorot(rng, d_h, 4 * d_h, (d_h, 4 * d_h))),
        bias=ad.parameter(bias),
    )
    head = OutputHeadParams(
        w=ad.parameter(_glorot(rng, d_h, n_vocab, (d_h, n_vocab))),
        b=ad.parameter(np.zeros((1, n_vocab))),
    )
    return CaptionModel(config=config, flags=flags, vocab=vocab, embed=embed,
                        phrase=phrase, aligner=aligner, attend=attend,
                        lstm=lstm, head=head)
