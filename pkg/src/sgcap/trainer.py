"""End-to-end training: teacher-forced forward passes, Adam updates with
global-norm gradient clipping, per-epoch validation, checkpointing with
enough captured state (parameters, optimizer moments, RNG) that a resumed
run continues exactly where an uninterrupted one would have been.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .corpus import Example, sample_negative
from .datamodel import (
    Caption,
    Config,
    DataError,
    NumericError,
    Rng,
    Vocabulary,
)
from .decoder import DecoderState
from .model import AblationFlags, CaptionModel, init_model
from .objectives import LossBreakdown, combine, contrastive_attention, cross_entropy

CHECKPOINT_FORMAT_VERSION = 1


def embed_init(vocab: Vocabulary, d_word: int, rng: Rng,
               pretrained_path=None) -> np.ndarray:
    """Seeded uniform(-0.1, 0.1) embedding table; rows for tokens found in an
    optional pretrained word-vector file (text lines "token v1 .. vd") are
    overwritten with the file's vectors. The table is trainable either way."""
    table = rng.uniform(-0.1, 0.1, (len(vocab), d_word))
    if pretrained_path is not None:
        for lineno, line in enumerate(Path(pretrained_path).read_text().splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != d_word:
                raise DataError(
                    f"{pretrained_path}:{lineno}: vector width {len(values)} "
                    f"!= d_word={d_word}"
                )
            idx = vocab.index(token)
            if idx == vocab.unk and token != vocab.token(vocab.unk):
                continue  # token not in vocabulary
            table[idx] = np.array([float(v) for v in values])
    return table


class Adam:
    """First-order adaptive optimizer over a named parameter dict."""

    def __init__(self, params: dict[str, ad.Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def clip_gradients(params: dict[str, ad.Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return norm


@dataclass
class SequenceLoss:
    ce: ad.Tensor
    ca: ad.Tensor | None
    n_tokens: int
    n_groups: int
    p_ca_values: list[float]


def sequence_loss(model: CaptionModel, frames: ad.Tensor, caption: Caption,
                  neg_frames: ad.Tensor | None) -> SequenceLoss:
    """Teacher-forced loss over one caption: predict y_1..y_T then EOS, with
    the gold prefix fed at every step. The contrastive term is evaluated per
    step over that step's surviving phrases."""
    gold = list(caption.tokens) + [model.vocab.eos]
    state = model.initial_state()
    probs = []
    ca_terms = []
    p_ca_values: list[float] = []
    n_groups = 0
    for t, _target in enumerate(gold, start=1):
        state, out, internals = model.forward_step(frames, state)
        probs.append(out.probs)
        if (neg_frames is not None and model.flags.use_ca_loss
                and internals.P_hat is not None):
            ca_t, p_ca = contrastive_attention(internals.P_hat, frames,
                                               neg_frames, model.aligner)
            ca_terms.append(ca_t)
            p_ca_values.extend(p_ca)
            n_groups += len(p_ca)
        if t <= len(caption.tokens):
            state = DecoderState(h=state.h, c=state.c,
                                 prefix=tuple(caption.tokens[:t]))
    ce = cross_entropy(probs, gold)
    ca = None
    if ca_terms:
        ca = ca_terms[0]
        for extra in ca_terms[1:]:
            ca = ca + extra
    return SequenceLoss(ce=ce, ca=ca, n_tokens=len(gold), n_groups=n_groups,
                        p_ca_values=p_ca_values)


def validation_ce(model: CaptionModel, examples: list[Example]) -> float:
    """Mean per-token teacher-forced cross-entropy."""
    total, tokens = 0.0, 0
    with ad.no_grad():
        for ex in examples:
            frames = model.frames_tensor(ex.video)
            for cap in ex.captions:
                loss = sequence_loss(model, frames, cap, None)
                total += loss.ce.item()
                tokens += loss.n_tokens
    return total / max(tokens, 1)


@dataclass
class TrainResult:
    model: CaptionModel
    metrics: list[dict]
    best_val: float
    checkpoint_path: Path | None = None


def _snapshot(model: CaptionModel) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in model.named_parameters().items()}


def _restore(model: CaptionModel, snap: dict[str, np.ndarray]) -> None:
    for k, p in model.named_parameters().items():
        p.data = snap[k].copy()


def _abort(model: CaptionModel, last_good: dict[str, np.ndarray], out_dir) -> None:
    _restore(model, last_good)
    if out_dir:
        np.savez(Path(out_dir) / "checkpoint_abort.npz",
                 **{f"param/{k}": v for k, v in last_good.items()})
    raise NumericError("non-finite training loss; last good parameters restored")


def train(examples: list[Example], vocab: Vocabulary, config: Config,
          flags: AblationFlags, val_examples: list[Example] | None = None,
          out_dir=None, resume_from=None, epochs: int | None = None,
          stop_below_ce: float | None = None, pretrained_embeddings=None,
          log_cb=None) -> TrainResult:
    """Optimize a captioning model on (video, caption) pairs.

    Per epoch: seeded shuffle, one fresh negative video per example, batched
    teacher-forced forward, mean-per-token CE plus weighted mean-per-group
    CA, backprop, clipped Adam update, validation CE, best-checkpoint
    tracking. A non-finite loss aborts with the last good state preserved.
    """
    if not examples:
        raise DataError("cannot train on an empty corpus")
    epochs = epochs if epochs is not None else config.epochs
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    if resume_from is not None:
        model, extras = load_checkpoint(resume_from)
        rng = Rng(state=extras["rng_state"])
        optimizer = Adam(model.named_parameters(), lr=config.learning_rate,
                         beta1=config.adam_beta1, beta2=config.adam_beta2,
                         eps=config.adam_eps)
        optimizer.t = extras["adam_t"]
        optimizer.m = extras["adam_m"]
        optimizer.v = extras["adam_v"]
        start_epoch = extras["epoch"]
        best_val = extras["best_val"]
    else:
        rng = Rng(config.seed)
        embed_matrix = embed_init(vocab, config.d_word, rng,
                                  pretrained_embeddings)
        model = init_model(config, flags, vocab, rng, embed_matrix=embed_matrix)
        optimizer = Adam(model.named_parameters(), lr=config.learning_rate,
                         beta1=config.adam_beta1, beta2=config.adam_beta2,
                         eps=config.adam_eps)
        start_epoch = 0
        best_val = float("inf")

    params = model.named_parameters()
    frames_cache = {id(ex): model.frames_tensor(ex.video) for ex in examples}
    metrics: list[dict] = []
    last_good = _snapshot(model)
    best_snap = _snapshot(model)

    for epoch in range(start_epoch, epochs):
        order = rng.permutation(len(examples))
        negatives: dict[int, ad.Tensor | None] = {}
        if flags.use_ca_loss:
            # Dedicated stream derived from (seed, epoch): negative draws
            # never perturb the shuffle stream, so CE-only ablations and
            # CA runs see identical batch orders, and resuming needs no
            # extra sampler state.
            neg_rng = Rng(config.seed * 1_000_003 + epoch + 1)
            for ex in examples:
                try:
                    neg = sample_negative(examples, ex, neg_rng)
                    negatives[id(ex)] = frames_cache[id(neg)]
                except DataError:
                    negatives[id(ex)] = None  # item contributes CE only
        epoch_ce, epoch_tokens = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[lo:lo + config.batch_size]]
            optimizer.zero_grad()
            ce_sum, ca_sum = None, None
            n_tokens, n_groups = 0, 0
            p_ca_all: list[float] = []
            for ex in batch:
                frames = frames_cache[id(ex)]
                neg = negatives.get(id(ex)) if flags.use_ca_loss else None
                for cap in ex.captions:
                    loss = sequence_loss(model, frames, cap, neg)
                    ce_sum = loss.ce if ce_sum is None else ce_sum + loss.ce
                    n_tokens += loss.n_tokens
                    if loss.ca is not None:
                        ca_sum = loss.ca if ca_sum is None else ca_sum + loss.ca
                        n_groups += loss.n_groups
                        p_ca_all.extend(loss.p_ca_values)
            ce_mean = ad.scale(ce_sum, 1.0 / n_tokens)
            if ca_sum is not None and n_groups > 0:
                ca_mean = ad.scale(ca_sum, 1.0 / n_groups)
            else:
                ca_mean = ad.constant(0.0)
            total = combine(ce_mean, ca_mean, config.ca_weight)
            if not np.isfinite(total.data):
                _abort(model, last_good, out_dir)
            total.backward()
            clip_gradients(params, config.grad_clip)
            optimizer.step()
            breakdown = LossBreakdown(
                total=float(total.data), ce=float(ce_mean.data),
                ca=float(ca_mean.data), ca_weight=config.ca_weight,
                p_ca_values=[round(v, 6) for v in p_ca_all],
            )
            metrics.append({"kind": "step", "epoch": epoch,
                            **breakdown.to_dict()})
            epoch_ce += float(ce_sum.data)
            epoch_tokens += n_tokens
        train_ce = epoch_ce / max(epoch_tokens, 1)
        val = validation_ce(model, val_examples) if val_examples else train_ce
        metrics.append({"kind": "epoch", "epoch": epoch,
                        "train_ce": train_ce, "val_ce": val})
        if log_cb:
            log_cb(epoch, train_ce, val)
        if val <= best_val:
            best_val = val
            best_snap = _snapshot(model)
        last_good = _snapshot(model)
        if out_dir:
            save_checkpoint(out_dir / "checkpoint_last.npz", model, optimizer,
                            epoch + 1, rng, best_val)
        if stop_below_ce is not None and train_ce < stop_below_ce:
            break

    ckpt_path = None
    if out_dir:
        current = _snapshot(model)
        _restore(model, best_snap)
        ckpt_path = out_dir / "checkpoint_best.npz"
        save_checkpoint(ckpt_path, model, optimizer, epochs, rng, best_val)
        _restore(model, current)
        with (out_dir / "metrics.jsonl").open("w") as fh:
            for rec in metrics:
                fh.write(json.dumps(rec) + "\n")
    return TrainResult(model=model, metrics=metrics, best_val=best_val,
                       checkpoint_path=ckpt_path)


# ---------------------------------------------------------------------------
# Checkpoints: a single .npz holding every parameter by canonical name, the
# optimizer moments, and a JSON metadata blob (format version, epoch, RNG
# state, config, flags, the full vocabulary and its hash) so a checkpoint
# alone is enough to rebuild the model for generation.
# ---------------------------------------------------------------------------


def save_checkpoint(path, model: CaptionModel, optimizer: Adam, epoch: int,
                    rng: Rng, best_val: float) -> None:
    arrays = {}
    for name, p in model.named_parameters().items():
        arrays[f"param/{name}"] = p.data
        arrays[f"adam_m/{name}"] = optimizer.m[name]
        arrays[f"adam_v/{name}"] = optimizer.v[name]
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "epoch": epoch,
        "adam_t": optimizer.t,
        "best_val": best_val,
        "rng_state": rng.get_state(),
        "config": model.config.to_dict(),
        "flags": {
            "use_semantic_aligner": model.flags.use_semantic_aligner,
            "use_phrase_suppressor": model.flags.use_phrase_suppressor,
            "use_ca_loss": model.flags.use_ca_loss,
            "group_by_word": model.flags.group_by_word,
        },
        "vocab": {"tokens": list(model.vocab.tokens), "pad": model.vocab.pad,
                  "sos": model.vocab.sos, "eos": model.vocab.eos,
                  "unk": model.vocab.unk},
        "vocab_hash": model.vocab.content_hash(),
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[CaptionModel, dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: checkpoint not found")
    with np.load(path) as data:
        if "meta" not in data:
            raise DataError(f"{path}: not a checkpoint (missing metadata)")
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise DataError(
                f"{path}: unsupported checkpoint format "
                f"{meta.get('format_version')!r}"
            )
        config = Config(**meta["config"])
        flags = AblationFlags(**meta["flags"])
        vocab = Vocabulary(tokens=tuple(meta["vocab"]["tokens"]),
                           pad=meta["vocab"]["pad"], sos=meta["vocab"]["sos"],
                           eos=meta["vocab"]["eos"], unk=meta["vocab"]["unk"])
        if vocab.content_hash() != meta["vocab_hash"]:
            raise DataError(f"{path}: vocabulary hash mismatch")
        model = init_model(config, flags, vocab, Rng(config.seed))
        adam_m, adam_v = {}, {}
        for name, p in model.named_parameters().items():
            key = f"param/{name}"
            if key not in data:
                raise DataError(f"{path}: missing parameter {name}")
            p.data = data[key].astype(np.float64)
            adam_m[name] = data[f"adam_m/{name}"].astype(np.float64)
            adam_v[name] = data[f"adam_v/{name}"].astype(np.float64)
    extras = {
        "epoch": meta["epoch"],
        "adam_t": meta["adam_t"],
        "best_val": meta["best_val"],
        "rng_state": meta["rng_state"],
        "adam_m": adam_m,
        "adam_v": adam_v,
    }
    return model, extras
