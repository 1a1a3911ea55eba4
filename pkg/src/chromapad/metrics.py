"""ISO-style presentation-attack-detection metrics over labeled score sets.

Scores are bona fide confidences and the decision rule is "bona fide iff
score >= threshold" (ties accepted as bona fide). APCER at a threshold is
the fraction of attack scores accepted; BPCER is the fraction of bona fide
scores rejected. The DET curve sweeps every unique score plus one sentinel
below the minimum and one above the maximum. EER on discrete data is the
midpoint of the two rates at the threshold minimizing their gap.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ScoreCsvError

SCORE_CSV_HEADER = ("label", "score")
DET_CSV_HEADER = ("threshold", "apcer", "bpcer")


@dataclass(frozen=True)
class ScoreSet:
    """Labeled score lists; both sides non-empty, all values finite."""

    bonafide: np.ndarray
    attack: np.ndarray

    def __post_init__(self):
        for name in ("bonafide", "attack"):
            arr = np.asarray(getattr(self, name), np.float64).reshape(-1)
            if arr.size == 0:
                raise ConfigError(f"score set has no {name} scores")
            if not np.isfinite(arr).all():
                raise ConfigError(f"{name} scores contain non-finite values")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    apcer: float
    bpcer: float


def apcer_at(s: ScoreSet, tau: float) -> float:
    """Fraction of attack scores accepted as bona fide at ``tau``."""
    return int(np.count_nonzero(s.attack >= tau)) / s.attack.size


def bpcer_at(s: ScoreSet, tau: float) -> float:
    """Fraction of bona fide scores rejected as attacks at ``tau``."""
    return int(np.count_nonzero(s.bonafide < tau)) / s.bonafide.size


def det_curve(s: ScoreSet):
    """One `DetPoint` per candidate threshold, ascending.

    Thresholds are the sorted unique scores of both lists plus a sentinel
    below the minimum and one above the maximum, so the curve always spans
    from (apcer, bpcer) = (1, 0) to (0, 1). APCER is non-increasing and
    BPCER non-decreasing along the sweep.
    """
    uniq = np.unique(np.concatenate([s.bonafide, s.attack]))
    taus = np.concatenate([[uniq[0] - 1.0], uniq, [uniq[-1] + 1.0]])
    attack_sorted = np.sort(s.attack)
    bona_sorted = np.sort(s.bonafide)
    below_attack = np.searchsorted(attack_sorted, taus, side="left")
    below_bona = np.searchsorted(bona_sorted, taus, side="left")
    n_a = s.attack.size
    n_b = s.bonafide.size
    return [
        DetPoint(threshold=float(t),
                 apcer=int(n_a - ba) / n_a,
                 bpcer=int(bb) / n_b)
        for t, ba, bb in zip(taus, below_attack, below_bona)
    ]


def eer(s: ScoreSet):
    """(equal error rate, threshold) over the DET sweep.

    Picks the threshold minimizing |APCER - BPCER| (smallest threshold on
    ties) and reports the midpoint of the two rates there.
    """
    points = det_curve(s)
    best = min(points, key=lambda p: (abs(p.apcer - p.bpcer), p.threshold))
    return (best.apcer + best.bpcer) / 2.0, best.threshold


def bpcer_at_apcer(s: ScoreSet, alpha: float):
    """(minimum BPCER among points with APCER <= alpha, its threshold).

    The above-maximum sentinel guarantees a point with APCER = 0, so the
    minimum always exists; the smallest qualifying threshold achieving it
    is reported.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    qualifying = [p for p in det_curve(s) if p.apcer <= alpha]
    best = min(qualifying, key=lambda p: (p.bpcer, p.threshold))
    return best.bpcer, best.threshold


def synth_scores(mu_bonafide: float, mu_attack: float, sigma: float,
                 n: int, seed: int) -> ScoreSet:
    """Two labeled Gaussian samples from a seeded PCG64 generator.

    Draws ``n`` bona fide scores from N(mu_bonafide, sigma^2) and then
    ``n`` attack scores from N(mu_attack, sigma^2), in that order, from a
    single numpy PCG64 stream; equal arguments give identical sets.
    """
    if not sigma > 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if n < 1:
        raise ConfigError(f"n must be at least 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    bona = rng.normal(mu_bonafide, sigma, n)
    attack = rng.normal(mu_attack, sigma, n)
    return ScoreSet(bonafide=bona, attack=attack)


def evaluate_scores(s: ScoreSet, alphas=(0.05, 0.10)):
    """Summary report: EER, its threshold, and BPCER at each APCER cap."""
    rate, tau = eer(s)
    bpcer_block = {}
    for alpha in alphas:
        value, _ = bpcer_at_apcer(s, alpha)
        bpcer_block[f"{alpha:g}"] = value
    return {"eer": rate, "threshold": tau, "bpcer_at": bpcer_block}


def read_scores_csv(text: str) -> ScoreSet:
    """Parse a ``label,score`` CSV with labels bonafide/attack."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ScoreCsvError("empty score file", 1) from None
    if tuple(h.strip() for h in header) != SCORE_CSV_HEADER:
        raise ScoreCsvError(
            f"header must be {','.join(SCORE_CSV_HEADER)!r}, "
            f"got {','.join(header)!r}", 1
        )
    bona, attack = [], []
    line_no = 1
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ScoreCsvError(f"expected 2 fields, got {len(row)}", line_no)
        label, raw = row[0].strip(), row[1].strip()
        try:
            score = float(raw)
        except ValueError:
            raise ScoreCsvError(f"score is not a number: {raw!r}",
                                line_no) from None
        if not np.isfinite(score):
            raise ScoreCsvError(f"score is not finite: {raw!r}", line_no)
        if label == "bonafide":
            bona.append(score)
        elif label == "attack":
            attack.append(score)
        else:
            raise ScoreCsvError(
                f"label must be 'bonafide' or 'attack', got {label!r}", line_no
            )
    if not bona:
        raise ScoreCsvError("no bonafide rows", line_no)
    if not attack:
        raise ScoreCsvError("no attack rows", line_no)
    return ScoreSet(bonafide=np.array(bona), attack=np.array(attack))


def write_scores_csv(s: ScoreSet) -> str:
    lines = [",".join(SCORE_CSV_HEADER)]
    lines += [f"bonafide,{v:.10g}" for v in s.bonafide]
    lines += [f"attack,{v:.10g}" for v in s.attack]
    return "\n".join(lines) + "\n"


def write_det_csv(points) -> str:
    lines = [",".join(DET_CSV_HEADER)]
    lines += [f"{p.threshold:.10g},{p.apcer:.10g},{p.bpcer:.10g}"
              for p in points]
    return "\n".join(lines) + "\n"
