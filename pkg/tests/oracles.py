"""Independent reference implementations used only by the tests.

Everything here is written as a direct, naive transcription of the defining
equations (explicit loops, set bookkeeping, scalar arithmetic) so that
agreement with the package is evidence, not tautology. None of these call
into sgcap internals beyond Tensor.data access.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np


def finite_difference(build_loss, tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of build_loss() w.r.t. one tensor's data."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = build_loss()
        flat[i] = keep - h
        down = build_loss()
        flat[i] = keep
        grad.reshape(-1)[i] = (up - down) / (2.0 * h)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray,
                small: float = 1e-6, tiny: float = 1e-8) -> float:
    """Worst relative error, with an absolute floor for near-zero pairs."""
    worst = 0.0
    for a, n in zip(np.asarray(analytic).flat, np.asarray(numeric).flat):
        m = max(abs(a), abs(n))
        if m > small:
            worst = max(worst, abs(a - n) / m)
        elif abs(a - n) > tiny:
            worst = max(worst, abs(a - n) / small)
    return worst


def check_gradients(params: dict, build_loss, h: float = 1e-5) -> float:
    """Backprop vs central differences over every parameter; returns the max
    relative error. build_loss() must rebuild the graph and return the loss
    Tensor each call."""
    loss = build_loss()
    for p in params.values():
        p.grad = None
    loss.backward()
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for k, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        numeric = finite_difference(
            lambda: float(build_loss().data.reshape(())), p, h)
        worst = max(worst, max_rel_err(analytic[name], numeric))
    return worst


# ---------------------------------------------------------------------------
# Phrase suppression: direct transcription with explicit removed-set
# bookkeeping and plain-python row sums.
# ---------------------------------------------------------------------------


def suppressor_reference(A: np.ndarray, tau: float) -> list[int]:
    k = A.shape[0]
    R = [[sum(float(A[i][x]) * float(A[j][x]) for x in range(A.shape[1]))
          for j in range(k)] for i in range(k)]
    surviving = set(range(k))
    row_sum = [sum(R[i][x] for x in range(k)) for i in range(k)]
    triggered = [(i, j) for i in range(k) for j in range(i + 1, k)
                 if R[i][j] > tau]
    for i, j in triggered:
        if i not in surviving or j not in surviving:
            continue
        if row_sum[i] > row_sum[j]:
            surviving.discard(i)
        else:
            surviving.discard(j)
    return sorted(surviving)


# ---------------------------------------------------------------------------
# Attention arithmetic, one scalar at a time.
# ---------------------------------------------------------------------------


def softmax_rows_reference(scores: np.ndarray) -> np.ndarray:
    out = np.zeros_like(scores, dtype=float)
    for i in range(scores.shape[0]):
        exps = [math.exp(float(s)) for s in scores[i]]
        z = sum(exps)
        for j, e in enumerate(exps):
            out[i, j] = e / z
    return out


def relevance_reference(P: np.ndarray, F: np.ndarray, u, U, H, b) -> np.ndarray:
    """score[i][j] = u . tanh(U p_i + H v_j + b), all loops explicit."""
    m, n = P.shape[0], F.shape[0]
    d_s = len(u)
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            total = 0.0
            for s in range(d_s):
                acc = float(b[s])
                for a in range(P.shape[1]):
                    acc += float(U[s, a]) * float(P[i, a])
                for a in range(F.shape[1]):
                    acc += float(H[s, a]) * float(F[j, a])
                total += float(u[s]) * math.tanh(acc)
            out[i, j] = total
    return out


def lstm_cell_reference(x, h_prev, c_prev, w_in, w_rec, bias):
    """Gate-by-gate LSTM cell: z = x W_in + h W_rec + b split as i,f,g,o."""
    d_h = len(h_prev)
    z = [float(bias[k]) for k in range(4 * d_h)]
    for k in range(4 * d_h):
        for a in range(len(x)):
            z[k] += float(x[a]) * float(w_in[a, k])
        for a in range(d_h):
            z[k] += float(h_prev[a]) * float(w_rec[a, k])

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    h_new, c_new = np.zeros(d_h), np.zeros(d_h)
    for a in range(d_h):
        i_g = sig(z[a])
        f_g = sig(z[d_h + a])
        g_g = math.tanh(z[2 * d_h + a])
        o_g = sig(z[3 * d_h + a])
        c_new[a] = f_g * float(c_prev[a]) + i_g * g_g
        h_new[a] = o_g * math.tanh(c_new[a])
    return h_new, c_new


# ---------------------------------------------------------------------------
# Exhaustive caption enumeration for the beam-search oracle.
# ---------------------------------------------------------------------------


def score_sequence(model, frames, tokens: tuple[int, ...]) -> float:
    """Total log-prob of emitting the content tokens then EOS, teacher-forcing
    through the model (every candidate ends in EOS under the beam's
    force-finalize-at-max_len convention)."""
    import sgcap.autodiff as ad
    from sgcap.decoder import DecoderState

    vocab = model.vocab
    with ad.no_grad():
        state = model.initial_state()
        logp = 0.0
        for t, w in enumerate(tokens, start=1):
            state, out, _ = model.forward_step(frames, state)
            logp += float(out.log_probs.data[0, w])
            state = DecoderState(h=state.h, c=state.c, prefix=tokens[:t])
        state, out, _ = model.forward_step(frames, state)
        logp += float(out.log_probs.data[0, vocab.eos])
    return logp


def enumerate_best_caption(model, video, max_len: int,
                           length_norm: bool) -> tuple[tuple[int, ...], float]:
    """Argmax caption over all content-token sequences of length <= max_len,
    each scored with its terminal EOS included over len+1 emissions."""
    vocab = model.vocab
    content = [i for i in range(len(vocab))
               if i not in (vocab.pad, vocab.sos, vocab.unk, vocab.eos)]
    frames = model.frames_tensor(video)
    best, best_score = None, -math.inf
    for length in range(0, max_len + 1):
        for seq in itertools.product(content, repeat=length):
            logp = score_sequence(model, frames, seq)
            score = logp / (length + 1) if length_norm else logp
            if score > best_score:
                best, best_score = seq, score
    return best, best_score


# ---------------------------------------------------------------------------
# Metric oracles: dict-arithmetic BLEU, tf-idf CIDEr-D, recursive LCS ROUGE.
# ---------------------------------------------------------------------------


def _grams(tokens, k):
    return [tuple(tokens[i:i + k]) for i in range(len(tokens) - k + 1)]


def bleu4_reference(candidates: dict, references: dict) -> float:
    total_correct = {k: 0 for k in range(1, 5)}
    total_guess = {k: 0 for k in range(1, 5)}
    c_len, r_len = 0, 0
    for vid, cand in candidates.items():
        refs = references[vid]
        for k in range(1, 5):
            counts = Counter(_grams(cand, k))
            best = Counter()
            for ref in refs:
                for g, c in Counter(_grams(ref, k)).items():
                    best[g] = max(best[g], c)
            total_correct[k] += sum(min(c, best[g]) for g, c in counts.items())
            total_guess[k] += max(0, len(cand) - k + 1)
        c_len += len(cand)
        diffs = sorted((abs(len(r) - len(cand)), len(r)) for r in refs)
        r_len += diffs[0][1]
    product = 1.0
    for k in range(1, 5):
        if total_guess[k] == 0 or total_correct[k] == 0:
            return 0.0
        product *= total_correct[k] / total_guess[k]
    bleu = product ** 0.25
    if c_len <= r_len:
        bleu *= math.exp(1.0 - r_len / c_len)
    return bleu


def cider_d_reference(candidates: dict, references: dict,
                      sigma: float = 6.0) -> float:
    vids = list(candidates)
    n_docs = len(vids)
    df = Counter()
    for vid in vids:
        grams = set()
        for ref in references[vid]:
            for k in range(1, 5):
                grams.update(_grams(ref, k))
        for g in grams:
            df[g] += 1

    def idf(g):
        if n_docs < 2:
            return 1.0
        return math.log(n_docs) - math.log(max(1.0, df[g]))

    def vec(tokens):
        by_order = {k: Counter(_grams(tokens, k)) for k in range(1, 5)}
        return {k: {g: c * idf(g) for g, c in by_order[k].items()}
                for k in range(1, 5)}

    scores = []
    for vid in vids:
        cand = candidates[vid]
        v_c = vec(cand)
        per_ref = []
        for ref in references[vid]:
            v_r = vec(ref)
            sims = []
            for k in range(1, 5):
                num = sum(min(v_c[k].get(g, 0.0), w) * w
                          for g, w in v_r[k].items())
                nc = math.sqrt(sum(w * w for w in v_c[k].values()))
                nr = math.sqrt(sum(w * w for w in v_r[k].values()))
                sim = num / (nc * nr) if nc > 0 and nr > 0 else 0.0
                sim *= math.exp(-((len(cand) - len(ref)) ** 2) / (2 * sigma ** 2))
                sims.append(sim)
            per_ref.append(sum(sims) / 4.0)
        scores.append(10.0 * sum(per_ref) / len(per_ref))
    return sum(scores) / len(scores)


def lcs_reference(a, b) -> int:
    table = {}

    def rec(i, j):
        if i == len(a) or j == len(b):
            return 0
        if (i, j) not in table:
            if a[i] == b[j]:
                table[i, j] = 1 + rec(i + 1, j + 1)
            else:
                table[i, j] = max(rec(i + 1, j), rec(i, j + 1))
        return table[i, j]

    return rec(0, 0)


def rouge_l_reference(candidates: dict, references: dict,
                      beta_sq: float = 1.2) -> float:
    scores = []
    for vid, cand in candidates.items():
        precs, recs = [], []
        for ref in references[vid]:
            lcs = lcs_reference(cand, ref)
            precs.append(lcs / len(cand) if cand else 0.0)
            recs.append(lcs / len(ref) if ref else 0.0)
        p, r = max(precs), max(recs)
        scores.append((1 + beta_sq) * p * r / (r + beta_sq * p)
                      if p > 0 and r > 0 else 0.0)
    return sum(scores) / len(scores)
