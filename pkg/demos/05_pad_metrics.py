"""Presentation-attack-detection metrics over a synthetic score set.

Scores are bona fide confidences; the decision rule is bona fide iff
score >= threshold. APCER counts accepted attacks, BPCER rejected bona
fides, and the DET curve sweeps every distinct score.
"""

import math

from chromapad import (
    apcer_at,
    bpcer_at,
    bpcer_at_apcer,
    det_curve,
    eer,
    synth_scores,
    write_det_csv,
    write_scores_csv,
)

# two Gaussians with a 2-sigma mean gap: the analytic equal error rate is
# the standard normal tail at -1, about 15.87%
s = synth_scores(mu_bonafide=1.0, mu_attack=0.0, sigma=0.5, n=10_000, seed=42)
print(f"{len(s.bonafide)} bona fide scores, {len(s.attack)} attack scores")

tau = 0.5
print(f"\nat threshold {tau}:")
print(f"  APCER (attacks accepted)    = {apcer_at(s, tau):.4f}")
print(f"  BPCER (bona fides rejected) = {bpcer_at(s, tau):.4f}")

rate, best_tau = eer(s)
analytic = 0.5 * math.erfc(1.0 / math.sqrt(2.0))
print(f"\nEER = {rate:.4f} at threshold {best_tau:.4f}"
      f"  (analytic {analytic:.4f})")

for alpha in (0.05, 0.10):
    value, at = bpcer_at_apcer(s, alpha)
    print(f"BPCER @ APCER <= {alpha:.0%}: {value:.4f} (threshold {at:.4f})")

points = det_curve(s)
print(f"\nDET sweep: {len(points)} points, "
      f"first (apcer={points[0].apcer:.0f}, bpcer={points[0].bpcer:.0f}), "
      f"last (apcer={points[-1].apcer:.0f}, bpcer={points[-1].bpcer:.0f})")

det_text = write_det_csv(points)
print("DET CSV head:")
for line in det_text.split("\n")[:4]:
    print(" ", line)

score_text = write_scores_csv(s)
print("\nscore CSV head:")
for line in score_text.split("\n")[:3]:
    print(" ", line)
