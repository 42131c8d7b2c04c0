"""Peak matching against ground truth and FDR / sensitivity / F1 reporting."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, MsgmmError

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 0.003


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]  # (detected index, truth index)
    n_detected: int
    n_true: int

    @property
    def n_matched(self) -> int:
        return len(self.pairs)

    @property
    def n_false(self) -> int:
        return self.n_detected - len(self.pairs)


@dataclass(frozen=True)
class EvalReport:
    n_true: int
    n_detected: int
    n_matched_true: int
    n_false: int
    fdr: float
    sensitivity: float
    f1: float
    no_detections: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def match_peaks(detected, truth, rel_tol: float = DEFAULT_REL_TOL) -> Matching:
    """One-to-one matching of detected to true positions within ``rel_tol * truth``.

    Candidate pairs are assigned greedily in order of increasing relative
    distance ``|d - t| / t``.
    """
    if not rel_tol > 0:
        raise DataError("matching tolerance must be positive")
    d = np.asarray(detected, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if d.size == 0 or t.size == 0:
        return Matching((), d.size, t.size)
    rel = np.abs(d[:, None] - t[None, :]) / np.abs(t[None, :])
    di, ti = np.nonzero(rel <= rel_tol)
    order = np.lexsort((ti, di, rel[di, ti]))
    used_d, used_t, pairs = set(), set(), []
    for k in order:
        a, b = int(di[k]), int(ti[k])
        if a in used_d or b in used_t:
            continue
        used_d.add(a)
        used_t.add(b)
        pairs.append((a, b))
    return Matching(tuple(sorted(pairs)), d.size, t.size)


def compute_metrics(matching: Matching, n_true: int | None = None, n_detected: int | None = None) -> EvalReport:
    n_true = matching.n_true if n_true is None else n_true
    n_detected = matching.n_detected if n_detected is None else n_detected
    if n_true <= 0:
        raise DataError("no ground truth")
    matched = matching.n_matched
    if matched > min(n_true, n_detected):
        raise DataError("inconsistent counts: more matches than peaks")
    n_false = n_detected - matched
    fdr = n_false / n_detected if n_detected else 0.0
    sens = matched / n_true
    precision = 1.0 - fdr
    f1 = 2.0 * precision * sens / (precision + sens) if precision + sens > 0 else 0.0
    return EvalReport(n_true, n_detected, matched, n_false, fdr, sens, f1, no_detections=n_detected == 0)


def evaluate_positions(detected, truth, rel_tol: float = DEFAULT_REL_TOL) -> EvalReport:
    return compute_metrics(match_peaks(detected, truth, rel_tol))


@dataclass
class SweepTable:
    parameter: str
    values: list
    reports: list = field(default_factory=list)  # EvalReport or None on failure
    errors: list = field(default_factory=list)

    @property
    def best_value(self):
        f1 = [r.f1 if r is not None else -1.0 for r in self.reports]
        if not f1 or max(f1) < 0:
            return None
        return self.values[int(np.argmax(f1))]

    def rows(self) -> list[dict]:
        out = []
        for v, r, e in zip(self.values, self.reports, self.errors):
            row = {self.parameter: v}
            if r is None:
                row.update({k: "" for k in EvalReport.__dataclass_fields__})
                row["error"] = e
            else:
                row.update(r.to_dict())
                row["error"] = ""
            out.append(row)
        return out


def sweep_parameter(
    parameter: str,
    values: Sequence,
    detect: Callable[[object], Sequence[float]],
    truth,
    rel_tol: float = DEFAULT_REL_TOL,
) -> SweepTable:
    """Evaluate ``detect(value)`` for every grid value; failures are recorded, not raised."""
    if not values:
        raise DataError("empty parameter grid")
    table = SweepTable(parameter, list(values))
    for v in values:
        try:
            report = evaluate_positions(detect(v), truth, rel_tol)
            table.reports.append(report)
            table.errors.append("")
        except MsgmmError as exc:
            logger.warning("sweep point %s=%r failed: %s", parameter, v, exc)
            table.reports.append(None)
            table.errors.append(str(exc))
    return table
