"""Decode-latency measurement: per-step wall time as a function of the step
index t, with an affine fit per mode.

The grouped decoder re-encodes the growing prefix every step, so its
per-step cost rises with t; the frame-attention baseline does constant work
per step. The benchmark decodes with EOS masked out so every run reaches
max_len, takes the median over repeats for each t, and fits time ~ a + b*t
by least squares with slope significance from the regression."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import autodiff as ad
from .datamodel import Config, Rng, VideoFeatures
from .decoder import DecoderState
from .model import AblationFlags, CaptionModel, init_model


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    p_value: float
    stderr: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "p_value": self.p_value, "stderr": self.stderr}


@dataclass
class BenchReport:
    per_step_grouped: list[float]
    per_step_baseline: list[float]
    grouped: SlopeFit
    baseline: SlopeFit
    step_time_ratio: float  # mean grouped step time / mean baseline step time

    def to_dict(self) -> dict:
        return {
            "grouped": self.grouped.to_dict(),
            "baseline": self.baseline.to_dict(),
            "per_step_grouped": self.per_step_grouped,
            "per_step_baseline": self.per_step_baseline,
            "step_time_ratio": self.step_time_ratio,
        }


def _measure(model: CaptionModel, video: VideoFeatures, max_len: int,
             repeats: int) -> np.ndarray:
    """Median per-step decode time over several forced-length decodes."""
    vocab = model.vocab
    banned = [vocab.pad, vocab.sos, vocab.unk, vocab.eos]
    times = np.empty((repeats, max_len))
    with ad.no_grad():
        frames = model.frames_tensor(video)
        for r in range(repeats):
            state = model.initial_state()
            tokens: list[int] = []
            for t in range(max_len):
                t0 = time.perf_counter()
                state, out, _ = model.forward_step(frames, state)
                logp = out.log_probs.data[0].copy()
                logp[banned] = -np.inf
                w = int(np.argmax(logp))
                times[r, t] = time.perf_counter() - t0
                tokens.append(w)
                state = DecoderState(h=state.h, c=state.c, prefix=tuple(tokens))
    return np.median(times, axis=0)


def fit_affine(per_step: np.ndarray) -> SlopeFit:
    t = np.arange(1, len(per_step) + 1, dtype=np.float64)
    res = stats.linregress(t, per_step)
    return SlopeFit(slope=float(res.slope), intercept=float(res.intercept),
                    p_value=float(res.pvalue), stderr=float(res.stderr))


def run_bench(config: Config | None = None, max_len: int = 20,
              repeats: int = 25, seed: int = 7) -> BenchReport:
    """Compare grouped decoding against the frame-attention baseline on one
    synthetic video with untrained (random) parameters."""
    config = config or Config()
    config = config.replace(max_len=max_len, seed=seed)
    rng = Rng(seed)
    tokens = ("<pad>", "<sos>", "<eos>", "<unk>") + tuple(
        f"w{i}" for i in range(12)
    )
    from .datamodel import Vocabulary

    vocab = Vocabulary(tokens=tokens)
    video = VideoFeatures(
        frames=rng.normal(0.0, 1.0, (config.n_frames, config.d_video)),
        video_id="bench",
        d_appearance=config.d_appearance,
        d_motion=config.d_motion,
    )
    grouped_model = init_model(config, AblationFlags(use_ca_loss=False),
                               vocab, Rng(seed))
    baseline_model = init_model(config, AblationFlags.ta_baseline(),
                                vocab, Rng(seed))

    # Warm-up pass so allocator effects land outside the measurement.
    _measure(grouped_model, video, max_len, 1)
    _measure(baseline_model, video, max_len, 1)

    grouped = _measure(grouped_model, video, max_len, repeats)
    baseline = _measure(baseline_model, video, max_len, repeats)
    return BenchReport(
        per_step_grouped=[float(x) for x in grouped],
        per_step_baseline=[float(x) for x in baseline],
        grouped=fit_affine(grouped),
        baseline=fit_affine(baseline),
        step_time_ratio=float(grouped.mean() / baseline.mean()),
    )
