"""Per-step attention dumps: which phrases survived, what words composed
them, where their frame attention landed, and which group the decoder used.

Records are plain dicts serialized as JSON lines so they round-trip through
any parser; an optional static heatmap per video can be written when
matplotlib is installed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .datamodel import Caption, VideoFeatures
from .decoder import DecoderState


def _top_word_attention(a_hat_row: np.ndarray, k: int) -> list[dict]:
    idx = np.argsort(-a_hat_row)[:k]
    return [{"word_pos": int(i), "weight": float(a_hat_row[i])} for i in idx]


def inspect_video(model, video: VideoFeatures, max_len: int | None = None,
                  top_k: int = 3) -> tuple[Caption, list[dict]]:
    """Greedy-decode a video, recording one InspectRecord per step."""
    max_len = max_len or model.config.max_len
    vocab = model.vocab
    banned = [vocab.pad, vocab.sos, vocab.unk]
    records: list[dict] = []
    with ad.no_grad():
        frames = model.frames_tensor(video)
        state = model.initial_state()
        tokens: list[int] = []
        for _ in range(max_len):
            state, out, internals = model.forward_step(frames, state)
            logp = out.log_probs.data[0].copy()
            logp[banned] = -np.inf
            w = int(np.argmax(logp))
            record = {
                "video_id": video.video_id,
                "t": internals.t,
                "prefix": vocab.decode(tokens),
                "kept": internals.kept,
                "beta": [float(v) for v in out.beta.data[0]],
                "predicted": vocab.token(w),
            }
            if internals.groups is not None:
                record["alpha"] = internals.groups.alpha.data.round(6).tolist()
            if internals.suppression is not None:
                record["word_attention"] = [
                    _top_word_attention(row, top_k)
                    for row in internals.suppression.A_hat.data
                ]
            elif internals.phrase_state is not None:
                record["word_attention"] = [
                    _top_word_attention(row, top_k)
                    for row in internals.phrase_state.A.data
                ]
            records.append(record)
            if w == vocab.eos:
                return Caption(tokens=tuple(tokens)), records
            tokens.append(w)
            state = DecoderState(h=state.h, c=state.c, prefix=tuple(tokens))
    return Caption(tokens=tuple(tokens), truncated=True), records


def write_records(path, records: list[dict]) -> None:
    with Path(path).open("a") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_records(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines()
            if line.strip()]


def plot_attention(records: list[dict], out_dir) -> Path | None:
    """Write a per-step alpha heatmap figure; no-op without matplotlib."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    steps = [r for r in records if "alpha" in r]
    if not steps:
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(len(steps), 1,
                             figsize=(8, 1.2 * len(steps) + 1), squeeze=False)
    for ax, rec in zip(axes[:, 0], steps):
        alpha = np.array(rec["alpha"])
        ax.imshow(alpha, aspect="auto", cmap="Reds", vmin=0.0)
        ax.set_ylabel(f"t={rec['t']}", rotation=0, ha="right", va="center")
        ax.set_yticks(range(alpha.shape[0]))
        ax.set_xticks([])
    axes[-1, 0].set_xlabel("frame")
    fig.suptitle(f"{steps[0]['video_id']}: frame attention per surviving phrase")
    path = out_dir / f"{steps[0]['video_id']}_attention.png"
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
