"""Caption metrics on small worked examples.

BLEU@4, CIDEr-D, and ROUGE_L are computed in-repo (no external scorers).
The anchor cases: an identical candidate/reference pair maxes each metric
(1.0 / 10.0 / 1.0) and disjoint vocabularies zero them.
"""

from sgcap.metrics import bleu4, cider_d, evaluate, rouge_l

identical_c = {"v": "a man is walking outside".split()}
identical_r = {"v": ["a man is walking outside".split()]}
print("identical pair:  bleu4 =", bleu4(identical_c, identical_r)[0],
      "  cider_d =", round(cider_d(identical_c, identical_r)[0], 6),
      "  rouge_l =", rouge_l(identical_c, identical_r)[0])

disjoint_c = {"v": "alpha beta gamma delta".split()}
disjoint_r = {"v": ["one two three four".split()]}
print("disjoint pair:   bleu4 =", bleu4(disjoint_c, disjoint_r)[0],
      "  cider_d =", cider_d(disjoint_c, disjoint_r)[0],
      "  rouge_l =", rouge_l(disjoint_c, disjoint_r)[0])

candidates = {
    "v1": "a man rides a horse".split(),
    "v2": "a woman plays guitar".split(),
    "v3": "the cat sleeps".split(),
    "v4": "kids play football".split(),
}
references = {
    "v1": ["a man rides a horse".split(), "a man is riding a horse".split()],
    "v2": ["a woman is playing a guitar".split()],
    "v3": ["a cat is sleeping on the mat".split()],
    "v4": ["children play soccer".split(), "kids are playing football".split()],
}
report = evaluate(candidates, references)
print("\ntoy corpus report:")
for name, score in report.scores.items():
    print(f"  {name:8s} {score:.4f}")
print("  per-video cider_d:",
      {k: round(v, 3) for k, v in report.per_video["cider_d"].items()})
print("  df fallback used:", report.df_fallback)
