"""Walk one decoding step through the grouping pipeline, printing every
intermediate: word attention A, phrase-similarity R = A A^T, the surviving
phrases, their frame attention alpha, and the decoder's group weights beta.

The model is untrained, so the numbers are generic; the point is the shapes
and the mechanics (suppression always keeps at least one phrase, every
attention row is a probability vector).
"""

import numpy as np

import sgcap.autodiff as ad
from sgcap import AblationFlags, Config, Rng, SyntheticSpec, generate_corpus, init_model
from sgcap.decoder import DecoderState

np.set_printoptions(precision=3, suppress=True)

spec = SyntheticSpec(n_concepts=8, segments_per_video=3, frames_per_segment=4,
                     noise_sigma=0.05, n_videos=6, d_appearance=8, d_motion=8)
corpus = generate_corpus(spec, seed=3)
config = Config(n_frames=spec.n_frames, d_appearance=8, d_motion=8,
                d_word=16, d_hidden=16, max_len=8, seed=1)
model = init_model(config, AblationFlags(), corpus.vocab, Rng(1))

ex = corpus.examples[0]
gold = ex.captions[0].tokens
frames = model.frames_tensor(ex.video)

# Pretend the first three gold words are already decoded.
prefix = gold[:3]
print("prefix:", corpus.vocab.decode(prefix))

state = model.initial_state()
state = DecoderState(h=state.h, c=state.c, prefix=prefix)
with ad.no_grad():
    _, out, internals = model.forward_step(frames, state)

A = internals.phrase_state.A.data
print(f"\nword attention A ({A.shape[0]} candidate phrases x {A.shape[1]} words):")
print(A)
print("row sums:", A.sum(axis=1))

R = internals.suppression.R
print(f"\nphrase similarity R = A A^T (threshold tau={config.tau}):")
print(R)
print("suppressor kept phrase indices:", internals.kept)

alpha = internals.groups.alpha.data
print(f"\nframe attention alpha ({alpha.shape[0]} groups x {alpha.shape[1]} frames):")
print(alpha)
print("row sums:", alpha.sum(axis=1))

print(f"\ndecoder group weights beta: {out.beta.data[0]}  (sum {out.beta.data.sum():.6f})")
probs = out.probs.data[0]
top = np.argsort(-probs)[:3]
print("next-word top-3:", [(corpus.vocab.token(i), round(float(probs[i]), 3))
                           for i in top])
