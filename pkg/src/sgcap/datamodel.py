"""Core types shared by every module: vocabulary, captions, video features,
configuration, and the seeded RNG facade.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

PAD_TOKEN = "<pad>"
SOS_TOKEN = "<sos>"
EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"
SPECIAL_TOKENS = (PAD_TOKEN, SOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

# The shipped stopword list: ~30 English function words. "then" and "and"
# are included because the synthetic caption templates connect concepts with
# them; treating connectives as content words would make every pair of
# synthetic captions "overlap" and starve the negative sampler.
STOPWORDS = frozenset(
    """
    a an the is are was were be been being am
    in on at of to with for from by into over under up down
    and or then as this that these those it its
    """.split()
)


class SgcapError(Exception):
    """Base class for package errors."""


class DataError(SgcapError):
    """Malformed input data, file, or configuration."""


class NumericError(SgcapError):
    """Non-finite values or numerically unusable state."""


class Rng:
    """Seeded RNG facade; every stochastic operation in the package draws
    from one of these so runs are reproducible and resumable."""

    def __init__(self, seed: int | None = None, state: dict | None = None):
        self._gen = np.random.Generator(np.random.PCG64(seed))
        if state is not None:
            self.set_state(state)

    def uniform(self, lo, hi, size=None):
        return self._gen.uniform(lo, hi, size)

    def normal(self, loc, scale, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, lo, hi, size=None):
        return self._gen.integers(lo, hi, size)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def get_state(self) -> dict:
        state = self._gen.bit_generator.state
        return {"bit_generator": state["bit_generator"],
                "state": int(state["state"]["state"]),
                "inc": int(state["state"]["inc"]),
                "has_uint32": int(state["has_uint32"]),
                "uinteger": int(state["uinteger"])}

    def set_state(self, state: dict) -> None:
        self._gen.bit_generator.state = {
            "bit_generator": state["bit_generator"],
            "state": {"state": int(state["state"]), "inc": int(state["inc"])},
            "has_uint32": int(state["has_uint32"]),
            "uinteger": int(state["uinteger"]),
        }


_default_rng = Rng(0)


def seed_default(seed: int) -> None:
    global _default_rng
    _default_rng = Rng(seed)


def default_rng() -> Rng:
    return _default_rng


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token list with fixed special indices (PAD is always 0)."""

    tokens: tuple[str, ...]
    pad: int = 0
    sos: int = 1
    eos: int = 2
    unk: int = 3

    def __post_init__(self):
        if len({self.pad, self.sos, self.eos, self.unk}) != 4:
            raise DataError("special token indices must be distinct")
        for i in (self.pad, self.sos, self.eos, self.unk):
            if not 0 <= i < len(self.tokens):
                raise DataError("special token index out of range")
        if len(set(self.tokens)) != len(self.tokens):
            raise DataError("duplicate tokens in vocabulary")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})
        object.__setattr__(
            self,
            "_stopword_ids",
            frozenset(i for i, t in enumerate(self.tokens) if t in STOPWORDS),
        )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def stopword_ids(self) -> frozenset[int]:
        return self._stopword_ids

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.pad, self.sos, self.eos, self.unk))

    def index(self, token: str) -> int:
        return self._index.get(token, self.unk)

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def encode(self, words) -> list[int]:
        return [self.index(w) for w in words]

    def decode(self, ids) -> list[str]:
        return [self.tokens[i] for i in ids]

    def content_ids(self, ids) -> frozenset[int]:
        """Token ids that count for caption-overlap checks: no stopwords,
        no specials."""
        drop = self._stopword_ids | self.special_ids
        return frozenset(i for i in ids if i not in drop)

    def save(self, path) -> None:
        lines = [f"# specials pad={self.pad} sos={self.sos} eos={self.eos} unk={self.unk}"]
        lines.extend(self.tokens)
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("# specials"):
            raise DataError(f"{path}: missing vocabulary header")
        spec = dict(kv.split("=") for kv in lines[0].split()[2:])
        return cls(
            tokens=tuple(lines[1:]),
            pad=int(spec["pad"]),
            sos=int(spec["sos"]),
            eos=int(spec["eos"]),
            unk=int(spec["unk"]),
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for t in self.tokens:
            h.update(t.encode())
            h.update(b"\0")
        return h.hexdigest()[:16]


def build_vocabulary(corpus, min_count: int = 1) -> Vocabulary:
    """Build a vocabulary from token sequences.

    Tokens with frequency >= min_count are kept (others map to UNK at encode
    time). Ordering is deterministic: specials first, then frequency
    descending with lexicographic tie-break.
    """
    corpus = list(corpus)
    if not corpus:
        raise DataError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for seq in corpus:
        counts.update(w.lower() for w in seq)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count and t not in SPECIAL_TOKENS),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary(tokens=SPECIAL_TOKENS + tuple(kept))


@dataclass(frozen=True)
class Caption:
    """A gold or decoded caption as token ids; SOS/EOS are never stored."""

    tokens: tuple[int, ...]
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))

    @property
    def length(self) -> int:
        return len(self.tokens)


def encode_caption(vocab: Vocabulary, words, max_len: int) -> Caption:
    """Encode a word sequence; unknown words map to UNK, no SOS/EOS added."""
    words = [w.lower() for w in words]
    if not words:
        raise DataError("cannot encode an empty caption")
    if len(words) > max_len:
        raise DataError(f"caption of {len(words)} tokens exceeds max_len={max_len}")
    ids = vocab.encode(words)
    if vocab.pad in ids:
        raise DataError("PAD token inside a caption")
    return Caption(tokens=tuple(ids))


@dataclass(frozen=True)
class VideoFeatures:
    """Per-video matrix of frame representations, one row per sampled frame,
    each row the concatenation of an appearance part (d_appearance) and a
    motion part (d_motion)."""

    frames: np.ndarray
    video_id: str
    d_appearance: int
    d_motion: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2:
            raise DataError(f"{self.video_id}: frame matrix must be 2-D")
        if self.d_appearance + self.d_motion != frames.shape[1]:
            raise DataError(
                f"{self.video_id}: feature width {frames.shape[1]} != "
                f"{self.d_appearance}+{self.d_motion}"
            )
        if not np.all(np.isfinite(frames)):
            raise DataError(f"{self.video_id}: non-finite feature values")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def width(self) -> int:
        return self.frames.shape[1]


_CONFIG_FIELDS: dict[str, type] = {}


@dataclass(frozen=True)
class Config:
    """All tunables in one place. Paper-anchored defaults: 30 frames per
    video, suppression threshold 0.2, contrastive weight 0.16, beam size 5.
    Optimizer settings are ours; the source method reports none."""

    n_frames: int = 30
    d_appearance: int = 16
    d_motion: int = 16
    d_word: int = 32
    d_hidden: int = 32
    d_attn: int = 0            # joint attention width; 0 means "use d_hidden"
    tau: float = 0.2
    ca_weight: float = 0.16
    beam_size: int = 5
    max_len: int = 20
    seed: int = 13
    learning_rate: float = 2e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    batch_size: int = 16
    epochs: int = 200
    min_count: int = 1
    phrase_layers: int = 1
    use_positional: bool = True
    length_norm: bool = True

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise DataError("tau must lie in (0, 1)")
        if self.ca_weight < 0:
            raise DataError("ca_weight must be >= 0")
        if self.n_frames < 1:
            raise DataError("n_frames must be >= 1")
        if self.beam_size < 1:
            raise DataError("beam_size must be >= 1")
        if self.max_len < 1:
            raise DataError("max_len must be >= 1")
        if min(self.d_appearance, self.d_motion, self.d_word, self.d_hidden) < 1:
            raise DataError("feature widths must be >= 1")
        if self.phrase_layers < 1:
            raise DataError("phrase_layers must be >= 1")

    @property
    def d_video(self) -> int:
        return self.d_appearance + self.d_motion

    @property
    def d_joint(self) -> int:
        return self.d_attn if self.d_attn > 0 else self.d_hidden

    def replace(self, **kw) -> "Config":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def save(self, path) -> None:
        lines = [f"{k} = {v}" for k, v in self.to_dict().items()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Config":
        kw = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _CONFIG_FIELDS:
                raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
            kw[key] = _parse_value(_CONFIG_FIELDS[key], val, path, lineno)
        return cls(**kw)


_CONFIG_FIELDS.update({f.name: f.type for f in fields(Config)})


def _parse_value(typ, val: str, path, lineno: int):
    typ = {"int": int, "float": float, "bool": bool}.get(typ, typ)
    try:
        if typ is bool:
            if val.lower() in ("true", "1", "yes"):
                return True
            if val.lower() in ("false", "0", "no"):
                return False
            raise ValueError(val)
        return typ(val)
    except ValueError as exc:
        raise DataError(f"{path}:{lineno}: bad value {val!r}") from exc
