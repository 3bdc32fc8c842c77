"""Per-step decode latency versus step index.

Grouped decoding re-encodes the growing caption prefix every step, so its
per-step cost rises roughly linearly in t; the frame-attention baseline does
constant work. The benchmark fits time ~ a + b*t for both modes.
"""

from sgcap.bench import run_bench

report = run_bench(max_len=20, repeats=15, seed=7)

print("per-step decode time (microseconds):")
print("  t        :", " ".join(f"{t:5d}" for t in range(1, 21)))
print("  grouped  :", " ".join(f"{s * 1e6:5.0f}" for s in report.per_step_grouped))
print("  baseline :", " ".join(f"{s * 1e6:5.0f}" for s in report.per_step_baseline))

g, b = report.grouped, report.baseline
print(f"\ngrouped  slope {g.slope * 1e6:7.2f} us/step   (p={g.p_value:.1e})")
print(f"baseline slope {b.slope * 1e6:7.2f} us/step   (p={b.p_value:.1e})")
print(f"grouped decoding costs {report.step_time_ratio:.2f}x the baseline per step")
