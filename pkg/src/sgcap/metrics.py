"""Caption-quality metrics computed in-repo: BLEU@4, CIDEr-D, ROUGE_L.

No external scorer is shelled out to; these are desk-scale reimplementations
of the standard definitions. METEOR is deliberately absent: it needs external
linguistic resources, so comparisons on that metric are not reproduced here.

Conventions (documented constants, applied uniformly):

* metric tokenization lowercases, strips punctuation, splits on whitespace;
* BLEU@4 is corpus-level, geometric mean of 1..4-gram modified precisions,
  brevity penalty from the closest reference length, no smoothing;
* CIDEr-D uses tf-idf weighted 1..4-gram vectors with count clipping, a
  Gaussian length penalty (sigma=6), 10x scaling, reference-count averaging;
  when the corpus has fewer than two videos there is no usable document
  frequency, so idf falls back to 1.0 for every n-gram and the report flags it;
* ROUGE_L is the LCS F-measure with beta^2 = 1.2, max over references, mean
  over the corpus.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datamodel import DataError

CIDER_SIGMA = 6.0
ROUGE_BETA_SQ = 1.2
MAX_NGRAM = 4
METRIC_PUNCTUATION = ".,!?;:\"'`()[]{}"


def tokenize_for_metrics(text: str) -> list[str]:
    table = str.maketrans({c: " " for c in METRIC_PUNCTUATION})
    return text.lower().translate(table).split()


def _ngram_counts(tokens, n_max: int = MAX_NGRAM) -> Counter:
    counts: Counter = Counter()
    for k in range(1, n_max + 1):
        for i in range(len(tokens) - k + 1):
            counts[tuple(tokens[i:i + k])] += 1
    return counts


def _check_pairs(candidates: dict, references: dict) -> list[str]:
    if not candidates:
        raise DataError("empty candidate set")
    missing = [vid for vid in candidates if not references.get(vid)]
    if missing:
        raise DataError(f"no references for: {missing[:5]}")
    return list(candidates.keys())


# ---------------------------------------------------------------------------
# BLEU@4
# ---------------------------------------------------------------------------


def _bleu_stats(cand, refs):
    """(guess[k], clipped correct[k], candidate length, closest ref length)."""
    guess = [max(0, len(cand) - k) for k in range(MAX_NGRAM)]
    cand_counts = _ngram_counts(cand)
    max_ref: dict = {}
    for ref in refs:
        for g, c in _ngram_counts(ref).items():
            if c > max_ref.get(g, 0):
                max_ref[g] = c
    correct = [0] * MAX_NGRAM
    for g, c in cand_counts.items():
        correct[len(g) - 1] += min(c, max_ref.get(g, 0))
    closest = min(refs, key=lambda r: (abs(len(r) - len(cand)), len(r)))
    return guess, correct, len(cand), len(closest)


def _bleu_from_totals(guess, correct, c_len, r_len) -> float:
    if any(g == 0 or c == 0 for g, c in zip(guess, correct)):
        return 0.0
    log_p = sum(np.log(c / g) for g, c in zip(guess, correct)) / MAX_NGRAM
    bp = 1.0 if c_len > r_len else float(np.exp(1.0 - r_len / max(c_len, 1)))
    return float(bp * np.exp(log_p))


def bleu4(candidates: dict[str, list[str]],
          references: dict[str, list[list[str]]]) -> tuple[float, dict[str, float]]:
    """Corpus BLEU@4 plus per-video sentence-level scores."""
    vids = _check_pairs(candidates, references)
    tot_guess = [0] * MAX_NGRAM
    tot_correct = [0] * MAX_NGRAM
    tot_c, tot_r = 0, 0
    per_video = {}
    for vid in vids:
        guess, correct, c_len, r_len = _bleu_stats(candidates[vid], references[vid])
        per_video[vid] = _bleu_from_totals(guess, correct, c_len, r_len)
        tot_guess = [a + b for a, b in zip(tot_guess, guess)]
        tot_correct = [a + b for a, b in zip(tot_correct, correct)]
        tot_c += c_len
        tot_r += r_len
    return _bleu_from_totals(tot_guess, tot_correct, tot_c, tot_r), per_video


# ---------------------------------------------------------------------------
# CIDEr-D
# ---------------------------------------------------------------------------


def _document_frequency(references: dict[str, list[list[str]]], vids) -> Counter:
    df: Counter = Counter()
    for vid in vids:
        seen = set()
        for ref in references[vid]:
            seen.update(_ngram_counts(ref).keys())
        df.update(seen)
    return df


def _tfidf_vector(tokens, idf):
    vec = [defaultdict(float) for _ in range(MAX_NGRAM)]
    norm = [0.0] * MAX_NGRAM
    for g, tf in _ngram_counts(tokens).items():
        w = tf * idf(g)
        vec[len(g) - 1][g] = w
        norm[len(g) - 1] += w * w
    return vec, [np.sqrt(x) for x in norm], len(tokens)


def _cider_sim(vec_c, norm_c, len_c, vec_r, norm_r, len_r, sigma) -> np.ndarray:
    val = np.zeros(MAX_NGRAM)
    for n in range(MAX_NGRAM):
        for g, wc in vec_c[n].items():
            val[n] += min(wc, vec_r[n][g]) * vec_r[n][g]
        if norm_c[n] > 0 and norm_r[n] > 0:
            val[n] /= norm_c[n] * norm_r[n]
    val *= np.exp(-((len_c - len_r) ** 2) / (2.0 * sigma ** 2))
    return val


def cider_d(candidates: dict[str, list[str]],
            references: dict[str, list[list[str]]],
            sigma: float = CIDER_SIGMA) -> tuple[float, dict[str, float], bool]:
    """Corpus CIDEr-D, per-video scores, and whether the idf fallback fired."""
    vids = _check_pairs(candidates, references)
    n_docs = len(vids)
    fallback = n_docs < 2
    if fallback:
        idf = lambda g: 1.0  # noqa: E731 - no usable document frequencies
    else:
        df = _document_frequency(references, vids)
        log_docs = np.log(float(n_docs))

        def idf(g):
            return log_docs - np.log(max(1.0, float(df.get(g, 0.0))))

    per_video = {}
    for vid in vids:
        vec_c, norm_c, len_c = _tfidf_vector(candidates[vid], idf)
        acc = np.zeros(MAX_NGRAM)
        for ref in references[vid]:
            vec_r, norm_r, len_r = _tfidf_vector(ref, idf)
            acc += _cider_sim(vec_c, norm_c, len_c, vec_r, norm_r, len_r, sigma)
        per_video[vid] = float(acc.mean() / len(references[vid]) * 10.0)
    corpus = float(np.mean(list(per_video.values())))
    return corpus, per_video, fallback


# ---------------------------------------------------------------------------
# ROUGE_L
# ---------------------------------------------------------------------------


def _lcs_length(a, b) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidates: dict[str, list[str]],
            references: dict[str, list[list[str]]]) -> tuple[float, dict[str, float]]:
    vids = _check_pairs(candidates, references)
    per_video = {}
    for vid in vids:
        cand = candidates[vid]
        precs, recs = [], []
        for ref in references[vid]:
            lcs = _lcs_length(cand, ref)
            precs.append(lcs / len(cand) if cand else 0.0)
            recs.append(lcs / len(ref) if ref else 0.0)
        p, r = max(precs), max(recs)
        if p > 0 and r > 0:
            score = (1 + ROUGE_BETA_SQ) * p * r / (r + ROUGE_BETA_SQ * p)
        else:
            score = 0.0
        per_video[vid] = float(score)
    return float(np.mean(list(per_video.values()))), per_video


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    scores: dict[str, float]
    per_video: dict[str, dict[str, float]]
    n_videos: int
    config_hash: str
    df_fallback: bool = False

    def __post_init__(self):
        for name, hi in (("bleu4", 1.0), ("cider_d", 10.0), ("rouge_l", 1.0)):
            v = self.scores[name]
            if not -1e-9 <= v <= hi + 1e-9:
                raise DataError(f"{name}={v} outside [0, {hi}]")
        for vids in self.per_video.values():
            if len(vids) != self.n_videos:
                raise DataError("per-video score list length mismatch")

    def to_dict(self) -> dict:
        return {"scores": self.scores, "per_video": self.per_video,
                "n_videos": self.n_videos, "config_hash": self.config_hash,
                "df_fallback": self.df_fallback}


def _metric_config_hash() -> str:
    blob = json.dumps({"max_ngram": MAX_NGRAM, "sigma": CIDER_SIGMA,
                       "rouge_beta_sq": ROUGE_BETA_SQ,
                       "punctuation": METRIC_PUNCTUATION})
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def evaluate(candidates: dict[str, list[str]],
             references: dict[str, list[list[str]]]) -> EvalReport:
    b, b_per = bleu4(candidates, references)
    c, c_per, fallback = cider_d(candidates, references)
    r, r_per = rouge_l(candidates, references)
    return EvalReport(
        scores={"bleu4": b, "cider_d": c, "rouge_l": r},
        per_video={"bleu4": b_per, "cider_d": c_per, "rouge_l": r_per},
        n_videos=len(candidates),
        config_hash=_metric_config_hash(),
        df_fallback=fallback,
    )


def read_caption_file(path) -> dict[str, list[list[str]]]:
    """Parse "video_id<TAB>caption" lines; repeated ids accumulate (multiple
    references per video). Captions pass through metric tokenization."""
    out: dict[str, list[list[str]]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        if not raw.strip():
            continue
        if "\t" not in raw:
            raise DataError(f"{path}:{lineno}: expected 'video_id<TAB>caption'")
        vid, text = raw.split("\t", 1)
        out.setdefault(vid, []).append(tokenize_for_metrics(text))
    if not out:
        raise DataError(f"{path}: no caption lines")
    return out
