"""Human ground-truth errors: Poisson error counts turned into trip-segment label flips.

Each user draws a number of validation errors ``NE ~ Poisson(lam)``. That
many of the user's trip segments are picked uniformly without replacement
(capped at the segment count) and relabelled:

* ``ONE_FLIP``: the segment takes its predecessor's label (the first segment
  takes its successor's), modelling a missed boarding or alighting. Picked
  segments are processed in time order, so two adjacent picks merge.
* ``FULL_FLIP``: the segment's labels are inverted BI <-> BO.

The module also simulates the person-to-device validation round, in which
users confirm or amend a count presented to them.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

BI = 1
BO = 0


class FlipAssumption(str, enum.Enum):
    ONE_FLIP = "one-flip"
    FULL_FLIP = "full-flip"


@dataclass(frozen=True)
class NoiseSpec:
    assumption: FlipAssumption
    lam: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "assumption", FlipAssumption(self.assumption))
        if not self.lam >= 0:
            raise ValueError("Poisson mean must be >= 0")


@dataclass
class FlipReport:
    user_id: int
    n_errors: int
    segments: list
    flip_fraction: float
    warning: str = ""


def draw_poisson(lam: float, rng) -> int:
    if lam < 0:
        raise ValueError("Poisson mean must be >= 0")
    return int(rng.poisson(lam))


def _segment_spans(segments):
    # TripSegment objects or bare row-index arrays
    return [np.asarray(getattr(seg, "rows", seg), dtype=np.int64) for seg in segments]


def flip_labels(segments, labels, spec: NoiseSpec, rng, user_id: int = -1, n_errors=None):
    """Corrupt ``labels`` on randomly chosen segments; the input is not modified.

    Parameters
    ----------
    segments : sequence of TripSegment or of row-index arrays
        Segments of one user, in time order, tiling (a subset of) ``labels``.
    labels : array of {0, 1}
    spec : NoiseSpec
    rng : numpy Generator
    n_errors : int, optional
        Use this error count instead of drawing it from ``Poisson(spec.lam)``.

    Returns
    -------
    flipped : ndarray
    report : FlipReport
    """
    labels = np.asarray(labels)
    out = labels.copy()
    spans = _segment_spans(segments)
    ne = draw_poisson(spec.lam, rng) if n_errors is None else int(n_errors)
    n_rows = sum(s.size for s in spans)
    if not spans:
        warn = "no segments; nothing to flip" if ne > 0 else ""
        return out, FlipReport(user_id, ne, [], 0.0, warn)
    k = min(ne, len(spans))
    picked = sorted(int(i) for i in rng.choice(len(spans), size=k, replace=False)) if k else []
    for i in picked:
        rows = spans[i]
        if spec.assumption is FlipAssumption.FULL_FLIP:
            out[rows] = 1 - out[rows]
        elif len(spans) > 1:
            ref = spans[i - 1] if i > 0 else spans[i + 1]
            out[rows] = out[ref[0]]
    changed = sum(int(np.count_nonzero(out[s] != labels[s])) for s in spans)
    frac = changed / n_rows if n_rows else 0.0
    return out, FlipReport(user_id, ne, picked, frac)


def flip_dataset(labels, user_ids, segment_ids, spec: NoiseSpec):
    """Apply ``flip_labels`` to every user; each user gets its own RNG stream
    derived from ``(spec.seed, user_id)``.

    Segments are the runs of equal ``segment_ids`` within each user.

    Returns the flipped label vector, the per-user reports and the overall
    fraction of rows whose label changed.
    """
    labels = np.asarray(labels)
    user_ids = np.asarray(user_ids)
    segment_ids = np.asarray(segment_ids)
    out = labels.copy()
    reports = []
    for u in np.unique(user_ids):
        rows = np.flatnonzero(user_ids == u)
        segs = segment_ids[rows]
        order = np.argsort(segs, kind="stable")
        rows_sorted = rows[order]
        _, starts = np.unique(segs[order], return_index=True)
        spans = np.split(rows_sorted, starts[1:])
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(int(u),)))
        flipped, rep = flip_labels(spans, labels, spec, rng, user_id=int(u))
        out[rows] = flipped[rows]
        reports.append(rep)
    frac = float(np.count_nonzero(out != labels) / labels.size) if labels.size else 0.0
    return out, reports, frac


def reports_to_json(reports) -> str:
    return json.dumps([asdict(r) for r in reports], sort_keys=True)


# ---------------------------------------------------------------------------
# person-to-device validation


@dataclass(frozen=True)
class P2DBehavior:
    """Response probabilities of a simulated participant.

    Defaults reproduce the margins of the validation round: 6 of 7 perturbed
    counts amended and 1 confirmed, 2 of 7 correct counts amended, and half
    of the amendments to perturbed counts landing on the true value.
    """

    lam: float = 0.7
    p_modify_wrong: float = 6 / 7
    p_modify_correct: float = 2 / 7
    p_amend_correct: float = 0.5


COMPLIANT = P2DBehavior(p_modify_wrong=1.0, p_modify_correct=0.0, p_amend_correct=1.0)


def _count_error(count, lam, rng):
    # zero-truncated Poisson magnitude, random sign, never below zero
    mag = 0
    while mag == 0:
        mag = int(rng.poisson(lam)) if lam > 0 else 1
    sign = 1 if count - mag < 0 else (1 if rng.random() < 0.5 else -1)
    return count + sign * mag


def simulate_p2d_validation(true_count: int, perturb: bool, rng,
                            behavior: P2DBehavior = P2DBehavior()) -> tuple[int, str]:
    """One validation exchange; returns ``(reported_count, "modified" | "confirmed")``.

    A perturbed presentation shifts the true count by a zero-truncated
    Poisson error. The participant amends a wrong count with probability
    ``p_modify_wrong`` and a correct one with ``p_modify_correct``; an
    amendment of a wrong count restores the truth with ``p_amend_correct``.
    """
    return _p2d(true_count, perturb, rng, behavior)[1:]


def _p2d(true_count, perturb, rng, behavior):
    if true_count < 0:
        raise ValueError("true count must be >= 0")
    presented = _count_error(true_count, behavior.lam, rng) if perturb else true_count
    wrong = presented != true_count
    p_mod = behavior.p_modify_wrong if wrong else behavior.p_modify_correct
    if rng.random() >= p_mod:
        return presented, presented, "confirmed"
    if wrong and rng.random() < behavior.p_amend_correct:
        return presented, true_count, "modified"
    for _ in range(100):
        reported = _count_error(true_count, behavior.lam, rng)
        if reported != presented and reported != true_count:
            break
    else:
        reported = max(presented, true_count) + 1
    return presented, reported, "modified"


@dataclass
class P2DTable:
    """Counts of the validation round, split by whether the count was perturbed."""

    perturbed: dict = field(default_factory=lambda: {"modified": 0, "confirmed": 0, "correct": 0, "wrong": 0})
    not_perturbed: dict = field(default_factory=lambda: {"modified": 0, "confirmed": 0, "correct": 0, "wrong": 0})

    @property
    def total(self) -> int:
        return sum(self.perturbed[k] for k in ("modified", "confirmed")) + sum(
            self.not_perturbed[k] for k in ("modified", "confirmed"))

    @property
    def error_rate(self) -> float:
        return (self.perturbed["wrong"] + self.not_perturbed["wrong"]) / self.total


def simulate_p2d_round(true_counts, perturb_mask, rng, behavior: P2DBehavior = P2DBehavior()) -> P2DTable:
    table = P2DTable()
    for count, perturb in zip(true_counts, perturb_mask):
        _, reported, response = _p2d(int(count), bool(perturb), rng, behavior)
        row = table.perturbed if perturb else table.not_perturbed
        row[response] += 1
        row["correct" if reported == count else "wrong"] += 1
    return table
