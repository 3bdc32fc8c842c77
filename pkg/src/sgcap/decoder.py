"""Decoding: attention over semantic groups, the recurrent cell, the word
head, and greedy/beam caption search.

Group attention mirrors the aligner's additive form: a score per group from
the previous hidden state, softmax over groups, and a convex combination x of
the group vectors. The cell is a standard single-layer LSTM over
[x ; E[w_prev]]; word logits are a linear head over the new hidden state.

Beam search is length-normalized by default (total log-prob divided by the
number of emitted tokens, EOS included) and recomputes phrase encoding and
grouping per hypothesis per step, since groups depend on each hypothesis's
own prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .datamodel import Caption


@dataclass
class GroupAttentionParams:
    u: ad.Tensor      # [d_joint x 1]
    U: ad.Tensor      # [d_hidden x d_joint]
    H: ad.Tensor      # [d_group x d_joint]
    b: ad.Tensor      # [1 x d_joint]

    def named(self, prefix: str = "attend") -> dict[str, ad.Tensor]:
        return {f"{prefix}.u": self.u, f"{prefix}.U": self.U,
                f"{prefix}.H": self.H, f"{prefix}.b": self.b}


@dataclass
class LstmParams:
    w_in: ad.Tensor   # [d_input x 4*d_hidden], gate order i, f, g, o
    w_rec: ad.Tensor  # [d_hidden x 4*d_hidden]
    bias: ad.Tensor   # [1 x 4*d_hidden]

    def named(self, prefix: str = "lstm") -> dict[str, ad.Tensor]:
        return {f"{prefix}.w_in": self.w_in, f"{prefix}.w_rec": self.w_rec,
                f"{prefix}.bias": self.bias}


@dataclass
class OutputHeadParams:
    w: ad.Tensor      # [d_hidden x |V|]
    b: ad.Tensor      # [1 x |V|]

    def named(self, prefix: str = "head") -> dict[str, ad.Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


@dataclass
class DecoderState:
    h: ad.Tensor      # [1 x d_hidden]
    c: ad.Tensor      # [1 x d_hidden]
    prefix: tuple[int, ...] = ()

    @property
    def t(self) -> int:
        return len(self.prefix) + 1


@dataclass
class StepOutput:
    beta: ad.Tensor       # [1 x M] group-attention weights
    x: ad.Tensor          # [1 x d_group] attended context
    logits: ad.Tensor     # [1 x |V|]
    probs: ad.Tensor      # [1 x |V|]
    log_probs: ad.Tensor  # [1 x |V|]


def attend_groups(h_prev: ad.Tensor, S: ad.Tensor,
                  params: GroupAttentionParams) -> tuple[ad.Tensor, ad.Tensor]:
    """Score each group against the previous hidden state; softmax over the
    groups; return (beta [1 x M], x = beta S [1 x d_group])."""
    scores = ad.matmul(ad.tanh(ad.matmul(h_prev, params.U)
                               + ad.matmul(S, params.H) + params.b), params.u)
    beta = ad.softmax(ad.transpose(scores))
    x = ad.matmul(beta, S)
    return beta, x


def lstm_step(h: ad.Tensor, c: ad.Tensor, inp: ad.Tensor,
              params: LstmParams) -> tuple[ad.Tensor, ad.Tensor]:
    d_h = h.shape[1]
    z = ad.matmul(inp, params.w_in) + ad.matmul(h, params.w_rec) + params.bias
    i = ad.sigmoid(ad.narrow(z, 1, 0, d_h))
    f = ad.sigmoid(ad.narrow(z, 1, d_h, d_h))
    g = ad.tanh(ad.narrow(z, 1, 2 * d_h, d_h))
    o = ad.sigmoid(ad.narrow(z, 1, 3 * d_h, d_h))
    c_next = f * c + i * g
    h_next = o * ad.tanh(c_next)
    return h_next, c_next


def step(state: DecoderState, x: ad.Tensor, w_prev: int, embed: ad.Tensor,
         lstm: LstmParams, head: OutputHeadParams,
         beta: ad.Tensor | None = None) -> tuple[DecoderState, StepOutput]:
    """Advance the recurrent state from context x and the previous word;
    emit the next-word distribution."""
    inp = ad.concat([x, ad.take_rows(embed, [w_prev])], axis=1)
    h_next, c_next = lstm_step(state.h, state.c, inp, lstm)
    logits = ad.matmul(h_next, head.w) + head.b
    out = StepOutput(
        beta=beta,
        x=x,
        logits=logits,
        probs=ad.softmax(logits),
        log_probs=ad.log_softmax(logits),
    )
    # The caller appends the token it actually selects; the state's prefix
    # stays "words decoded so far".
    new_state = DecoderState(h=h_next, c=c_next, prefix=state.prefix)
    return new_state, out


# ---------------------------------------------------------------------------
# Caption search. Both searches mask PAD/SOS/UNK, stop on EOS, and flag
# captions that hit max_len without emitting EOS as truncated.
# ---------------------------------------------------------------------------


def decode_greedy(video, model, max_len: int | None = None) -> Caption:
    max_len = max_len or model.config.max_len
    vocab = model.vocab
    banned = [vocab.pad, vocab.sos, vocab.unk]
    with ad.no_grad():
        frames = model.frames_tensor(video)
        state = model.initial_state()
        tokens: list[int] = []
        for _ in range(max_len):
            state, out, _ = model.forward_step(frames, state)
            logp = out.log_probs.data[0].copy()
            logp[banned] = -np.inf
            w = int(np.argmax(logp))
            if w == vocab.eos:
                return Caption(tokens=tuple(tokens))
            tokens.append(w)
            state = DecoderState(h=state.h, c=state.c, prefix=tuple(tokens))
    return Caption(tokens=tuple(tokens), truncated=True)


@dataclass
class _Hyp:
    tokens: tuple[int, ...]
    logp: float
    steps: int           # emissions so far, EOS included when finished
    state: DecoderState
    truncated: bool = False


def _hyp_score(logp: float, steps: int, length_norm: bool) -> float:
    if not length_norm:
        return logp
    return logp / max(steps, 1)


def decode_beam(video, model, beam_size: int | None = None,
                max_len: int | None = None,
                length_norm: bool | None = None) -> Caption:
    """Length-normalized beam search; beam_size=1 reproduces greedy.

    Hypotheses still live after max_len emissions are finalized by appending
    EOS (its log-prob included), so every candidate is an EOS-terminated
    sequence scored over steps = len(tokens) + 1; the winner carries a
    truncated flag when it was force-finalized."""
    beam_size = beam_size or model.config.beam_size
    max_len = max_len or model.config.max_len
    if length_norm is None:
        length_norm = model.config.length_norm
    vocab = model.vocab
    banned = (vocab.pad, vocab.sos, vocab.unk)

    with ad.no_grad():
        frames = model.frames_tensor(video)
        live = [_Hyp(tokens=(), logp=0.0, steps=0, state=model.initial_state())]
        done: list[_Hyp] = []
        for _ in range(max_len):
            candidates = []  # (score, order, hyp, token, logp_total, state)
            for hyp in live:
                state = DecoderState(h=hyp.state.h, c=hyp.state.c,
                                     prefix=hyp.tokens)
                new_state, out, _ = model.forward_step(frames, state)
                row = out.log_probs.data[0]
                for w in range(len(vocab)):
                    if w in banned:
                        continue
                    total = hyp.logp + float(row[w])
                    score = _hyp_score(total, hyp.steps + 1, length_norm)
                    candidates.append((score, len(candidates), hyp, w, total,
                                       new_state))
            candidates.sort(key=lambda c: (-c[0], c[1]))
            live = []
            for score, _, hyp, w, total, new_state in candidates[:beam_size]:
                if w == vocab.eos:
                    done.append(_Hyp(tokens=hyp.tokens, logp=total,
                                     steps=hyp.steps + 1, state=new_state))
                else:
                    live.append(_Hyp(tokens=hyp.tokens + (w,), logp=total,
                                     steps=hyp.steps + 1, state=new_state))
            if not live:
                break
        for hyp in live:  # force-finalize whatever is still open
            state = DecoderState(h=hyp.state.h, c=hyp.state.c, prefix=hyp.tokens)
            _, out, _ = model.forward_step(frames, state)
            total = hyp.logp + float(out.log_probs.data[0, vocab.eos])
            done.append(_Hyp(tokens=hyp.tokens, logp=total,
                             steps=hyp.steps + 1, state=hyp.state,
                             truncated=True))

    best = max(done, key=lambda h: _hyp_score(h.logp, h.steps, length_norm))
    return Caption(tokens=best.tokens, truncated=best.truncated)
