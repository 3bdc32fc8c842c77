"""Synthetic video-caption corpus with planted frame-to-phrase alignments,
plus ingestion of externally pre-extracted feature files.

A synthetic video is a sequence of segments; every frame of a segment is a
fixed per-concept prototype vector plus Gaussian noise. Its caption names the
concepts in segment order ("concept3 then concept7 then ..."), one content
token per concept, so the ground-truth alignment between caption words and
frame ranges is known exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import (
    Caption,
    Config,
    DataError,
    Rng,
    Vocabulary,
    VideoFeatures,
    build_vocabulary,
    encode_caption,
)

FEATURE_MAGIC = b"SGFB"
FEATURE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SyntheticSpec:
    n_concepts: int
    segments_per_video: int
    frames_per_segment: int
    noise_sigma: float
    n_videos: int
    d_appearance: int = 8
    d_motion: int = 8

    def __post_init__(self):
        if min(self.n_concepts, self.segments_per_video, self.frames_per_segment,
               self.n_videos) < 1:
            raise DataError("synthetic spec counts must be >= 1")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be >= 0")
        if self.n_concepts < self.segments_per_video:
            raise DataError("need at least as many concepts as segments per video")

    @property
    def n_frames(self) -> int:
        return self.segments_per_video * self.frames_per_segment

    @property
    def d_video(self) -> int:
        return self.d_appearance + self.d_motion


@dataclass
class Example:
    """One video with its captions and (for synthetic data) the planted
    concept-to-frame-range alignment."""

    video: VideoFeatures
    captions: list[Caption]
    concept_segments: list[tuple[int, tuple[int, int]]] = field(default_factory=list)
    content_ids: frozenset[int] = frozenset()


@dataclass
class SyntheticCorpus:
    examples: list[Example]
    vocab: Vocabulary
    spec: SyntheticSpec
    prototypes: np.ndarray  # [n_concepts x d_video]


def concept_token(concept_id: int) -> str:
    return f"concept{concept_id}"


def caption_words_for(concepts) -> list[str]:
    words: list[str] = []
    for k, c in enumerate(concepts):
        if k > 0:
            words.append("then")
        words.append(concept_token(c))
    return words


def generate_corpus(spec: SyntheticSpec, seed: int) -> SyntheticCorpus:
    """Generate a planted corpus. Deterministic in (spec, seed).

    Concepts for each video are sampled without replacement and assigned to
    segments in ascending id order, so caption order is recoverable from
    content alone (prototype features carry no temporal channel).
    """
    rng = Rng(seed)
    d_v = spec.d_video
    prototypes = rng.normal(0.0, 1.0, (spec.n_concepts, d_v)) / np.sqrt(d_v)

    all_words = []
    picks = []
    for _ in range(spec.n_videos):
        order = rng.permutation(spec.n_concepts)[: spec.segments_per_video]
        concepts = sorted(int(c) for c in order)
        picks.append(concepts)
        all_words.append(caption_words_for(concepts))

    vocab = build_vocabulary(all_words, min_count=1)
    max_len = max(len(w) for w in all_words)

    examples = []
    for v, (concepts, words) in enumerate(zip(picks, all_words)):
        frames = np.empty((spec.n_frames, d_v))
        segments = []
        for k, c in enumerate(concepts):
            lo = k * spec.frames_per_segment
            hi = lo + spec.frames_per_segment
            block = np.broadcast_to(prototypes[c], (spec.frames_per_segment, d_v))
            if spec.noise_sigma > 0:
                block = block + rng.normal(0.0, spec.noise_sigma,
                                           (spec.frames_per_segment, d_v))
            frames[lo:hi] = block
            segments.append((c, (lo, hi)))
        video = VideoFeatures(
            frames=frames,
            video_id=f"vid{v:04d}",
            d_appearance=spec.d_appearance,
            d_motion=spec.d_motion,
        )
        caption = encode_caption(vocab, words, max_len=max_len)
        examples.append(
            Example(
                video=video,
                captions=[caption],
                concept_segments=segments,
                content_ids=vocab.content_ids(caption.tokens),
            )
        )
    return SyntheticCorpus(examples=examples, vocab=vocab, spec=spec,
                           prototypes=prototypes)


def sample_negative(pool: list[Example], anchor: Example, rng: Rng) -> Example:
    """Pick, uniformly, an example none of whose captions shares a
    non-stopword token with any caption of the anchor."""
    eligible = [
        ex
        for ex in pool
        if ex is not anchor and not (ex.content_ids & anchor.content_ids)
    ]
    if not eligible:
        raise DataError(
            f"no negative candidate for {anchor.video.video_id}: "
            "every caption in the pool overlaps"
        )
    return rng.choice(eligible)


# ---------------------------------------------------------------------------
# Feature files.
#
# Text format:   header line "video_id M d_appearance d_motion", then M rows
#                of whitespace-separated decimals (d_appearance+d_motion each).
# Binary format: magic "SGFB", u16 version, u16 len(video_id), video_id utf-8,
#                u32 M, u32 d_appearance, u32 d_motion, then M*(da+dm)
#                little-endian float32 values, row-major.
# ---------------------------------------------------------------------------


def save_features(path, video: VideoFeatures) -> None:
    """Write a feature file; '.txt' extension selects the text format."""
    path = Path(path)
    if path.suffix == ".txt":
        with path.open("w") as fh:
            fh.write(f"{video.video_id} {video.n_frames} "
                     f"{video.d_appearance} {video.d_motion}\n")
            for row in video.frames:
                fh.write(" ".join(repr(float(x)) for x in row.astype(np.float32)))
                fh.write("\n")
        return
    name = video.video_id.encode()
    with path.open("wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<HH", FEATURE_FORMAT_VERSION, len(name)))
        fh.write(name)
        fh.write(struct.pack("<III", video.n_frames,
                             video.d_appearance, video.d_motion))
        fh.write(video.frames.astype("<f4").tobytes())


def _read_feature_file(path: Path) -> VideoFeatures:
    raw = path.read_bytes()
    if raw[:4] == FEATURE_MAGIC:
        try:
            version, name_len = struct.unpack_from("<HH", raw, 4)
            if version != FEATURE_FORMAT_VERSION:
                raise DataError(f"{path}: unsupported feature format v{version}")
            off = 8
            video_id = raw[off:off + name_len].decode()
            off += name_len
            m, d_a, d_m = struct.unpack_from("<III", raw, off)
            off += 12
            flat = np.frombuffer(raw, dtype="<f4", count=m * (d_a + d_m), offset=off)
            if flat.size != m * (d_a + d_m):
                raise DataError(f"{path}: truncated feature payload")
        except struct.error as exc:
            raise DataError(f"{path}: malformed binary header") from exc
        frames = flat.astype(np.float64).reshape(m, d_a + d_m)
    else:
        lines = raw.decode().splitlines()
        if not lines:
            raise DataError(f"{path}: empty feature file")
        head = lines[0].split()
        if len(head) != 4:
            raise DataError(f"{path}: malformed text header {lines[0]!r}")
        video_id = head[0]
        try:
            m, d_a, d_m = (int(x) for x in head[1:])
        except ValueError as exc:
            raise DataError(f"{path}: malformed text header {lines[0]!r}") from exc
        rows = [line.split() for line in lines[1:] if line.strip()]
        if len(rows) != m:
            raise DataError(f"{path}: header claims {m} rows, found {len(rows)}")
        try:
            frames = np.array(rows, dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric feature row") from exc
        if frames.ndim != 2 or frames.shape[1] != d_a + d_m:
            raise DataError(f"{path}: row width != d_appearance+d_motion")
    if not np.all(np.isfinite(frames)):
        raise DataError(f"{path}: non-finite feature values")
    return VideoFeatures(frames=frames, video_id=video_id,
                         d_appearance=d_a, d_motion=d_m)


def resample_indices(m: int, n: int) -> np.ndarray:
    """Source-frame index for each of n output frames: floor(i*m/n).

    Subsamples uniformly when m > n and repeat-pads when m < n; identity when
    m == n. Deterministic and order-preserving.
    """
    return (np.arange(n) * m) // n


def load_features(path, config: Config) -> VideoFeatures:
    """Load a feature file and fit it to the configured frame count."""
    video = _read_feature_file(Path(path))
    if video.width != config.d_video:
        raise DataError(
            f"{path}: feature width {video.width} does not match config "
            f"d_video={config.d_video}"
        )
    n = config.n_frames
    if video.n_frames == n:
        return video
    if video.n_frames < 1:
        raise DataError(f"{path}: no frames")
    idx = resample_indices(video.n_frames, n)
    return VideoFeatures(
        frames=video.frames[idx],
        video_id=video.video_id,
        d_appearance=video.d_appearance,
        d_motion=video.d_motion,
    )


# ---------------------------------------------------------------------------
# Corpus directories: manifest.tsv ("video_id<TAB>caption", one line per
# caption), features/<video_id>.fbin, optional alignments.json with planted
# segments for synthetic corpora.
# ---------------------------------------------------------------------------


def save_corpus(directory, corpus: SyntheticCorpus) -> None:
    directory = Path(directory)
    (directory / "features").mkdir(parents=True, exist_ok=True)
    lines = []
    alignments = {}
    for ex in corpus.examples:
        save_features(directory / "features" / f"{ex.video.video_id}.fbin", ex.video)
        for cap in ex.captions:
            words = corpus.vocab.decode(cap.tokens)
            lines.append(f"{ex.video.video_id}\t{' '.join(words)}")
        if ex.concept_segments:
            alignments[ex.video.video_id] = [
                {"concept": c, "start": lo, "end": hi}
                for c, (lo, hi) in ex.concept_segments
            ]
    (directory / "manifest.tsv").write_text("\n".join(lines) + "\n")
    if alignments:
        (directory / "alignments.json").write_text(json.dumps(alignments, indent=1))


def read_manifest(path) -> list[tuple[str, list[str]]]:
    """Parse manifest lines into (video_id, words) pairs, preserving order."""
    entries = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        if not raw.strip():
            continue
        if "\t" not in raw:
            raise DataError(f"{path}:{lineno}: expected 'video_id<TAB>caption'")
        vid, text = raw.split("\t", 1)
        words = text.split()
        if not words:
            raise DataError(f"{path}:{lineno}: empty caption")
        entries.append((vid, words))
    return entries


def load_corpus(directory, config: Config,
                vocab: Vocabulary | None = None) -> tuple[list[Example], Vocabulary]:
    """Load a corpus directory. Builds the vocabulary from the manifest
    unless one is supplied (e.g. from a checkpoint)."""
    directory = Path(directory)
    manifest = directory / "manifest.tsv"
    if not manifest.exists():
        raise DataError(f"{manifest}: not found")
    entries = read_manifest(manifest)
    if vocab is None:
        vocab = build_vocabulary([w for _, w in entries], min_count=config.min_count)

    alignments = {}
    align_path = directory / "alignments.json"
    if align_path.exists():
        alignments = json.loads(align_path.read_text())

    by_video: dict[str, list[list[str]]] = {}
    order: list[str] = []
    for vid, words in entries:
        if vid not in by_video:
            by_video[vid] = []
            order.append(vid)
        by_video[vid].append(words)

    examples = []
    for vid in order:
        feat = directory / "features" / f"{vid}.fbin"
        if not feat.exists():
            feat = directory / "features" / f"{vid}.txt"
        if not feat.exists():
            raise DataError(f"no feature file for {vid} under {directory}/features")
        video = load_features(feat, config)
        captions = [encode_caption(vocab, w, config.max_len) for w in by_video[vid]]
        ids = frozenset().union(*(vocab.content_ids(c.tokens) for c in captions))
        segments = [
            (a["concept"], (a["start"], a["end"])) for a in alignments.get(vid, [])
        ]
        examples.append(Example(video=video, captions=captions,
                                concept_segments=segments, content_ids=ids))
    return examples, vocab
