"""False-alarm / missed-detection estimation, DET sweeps, the error rate xi
and diagnostics comparing a classifier with the LT."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import kendalltau

from .stattests import calibrate_threshold, decide

log = logging.getLogger(__name__)

FA_TARGETS = (0.01, 0.05, 0.1, 0.2)


def _clean(scores, name: str) -> np.ndarray:
    s = np.asarray(scores, dtype=float).ravel()
    if s.size == 0:
        raise ValueError(f"{name} is empty")
    if np.isnan(s).any():
        raise ValueError(f"{name} contains NaN")
    return s


@dataclass(frozen=True)
class DetCurve:
    """Exact empirical DET curve.

    ``thresholds[i]`` is the delta producing ``fa_count[i]`` false alarms out
    of ``n0`` and ``md_count[i]`` missed detections out of ``n1``, with scores
    oriented so that H0 is accepted iff ``score > delta``. The first point uses
    ``delta = -inf`` (nothing rejected).
    """

    thresholds: np.ndarray
    fa_count: np.ndarray
    md_count: np.ndarray
    n0: int
    n1: int

    @property
    def fa(self) -> np.ndarray:
        return self.fa_count / self.n0

    @property
    def md(self) -> np.ndarray:
        return self.md_count / self.n1

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.fa, self.md])

    def __len__(self) -> int:
        return len(self.thresholds)


def det_curve(scores_h0, scores_h1, orientation: str = "h0-high") -> DetCurve:
    """Sweep the threshold over every distinct observed score.

    ``orientation`` is ``"h0-high"`` when large scores favour the legitimate
    class or ``"h1-high"`` when large scores favour the intruder (the scores
    are then negated before sweeping).
    """
    s0 = _clean(scores_h0, "scores_h0")
    s1 = _clean(scores_h1, "scores_h1")
    if orientation == "h1-high":
        s0, s1 = -s0, -s1
    elif orientation != "h0-high":
        raise ValueError(f"orientation must be 'h0-high' or 'h1-high', got {orientation!r}")
    s0.sort()
    s1.sort()
    deltas = np.concatenate([[-np.inf], np.unique(np.concatenate([s0, s1]))])
    fa = np.searchsorted(s0, deltas, side="right")  # H0 scores <= delta are rejected
    md = s1.size - np.searchsorted(s1, deltas, side="right")  # H1 scores > delta are accepted
    return DetCurve(deltas, fa.astype(np.int64), md.astype(np.int64), s0.size, s1.size)


def md_at_fa(curve: DetCurve, target_fa: float) -> tuple[float, bool]:
    """Missed-detection probability at ``target_fa`` and whether it was interpolated.

    Where several sweep points share the exact FA the smallest MD is used.
    Otherwise MD is interpolated linearly between the neighbouring FA values.
    """
    fa, md = curve.fa, curve.md
    ufa, first = np.unique(fa, return_index=True)
    # md is nonincreasing along the sweep, so the last point at each fa is the min
    last = np.r_[first[1:] - 1, len(fa) - 1]
    umd = md[last]
    hit = np.flatnonzero(ufa == target_fa)
    if hit.size:
        return float(umd[hit[0]]), False
    return float(np.interp(target_fa, ufa, umd)), True


def error_rate_xi(curve: DetCurve) -> float:
    """``xi = min over the sweep of (fa + md) / 2``."""
    total = curve.fa_count * curve.n1 + curve.md_count * curve.n0
    i = int(np.argmin(total))
    return float(curve.fa[i] + curve.md[i]) / 2.0


@dataclass(frozen=True)
class MatchedFa:
    target_fa: float
    md_model: float
    md_lt: float
    interpolated: bool
    agreement: float
    realized_fa_model: float
    realized_fa_lt: float

    @property
    def delta_md(self) -> float:
        return self.md_model - self.md_lt


@dataclass(frozen=True)
class EquivalenceReport:
    kendall_tau: float
    matched: tuple[MatchedFa, ...] = field(default_factory=tuple)

    def at(self, fa: float) -> MatchedFa:
        for m in self.matched:
            if np.isclose(m.target_fa, fa):
                return m
        raise KeyError(fa)

    def to_dict(self) -> dict:
        return {
            "kendall_tau": self.kendall_tau,
            "matched_fa": [
                {"fa": m.target_fa, "md_model": m.md_model, "md_lt": m.md_lt,
                 "delta_md": m.delta_md, "interpolated": m.interpolated,
                 "agreement": m.agreement,
                 "realized_fa_model": m.realized_fa_model, "realized_fa_lt": m.realized_fa_lt}
                for m in self.matched
            ],
        }


def equivalence_report(scores_model, scores_lt, labels, fa_targets=FA_TARGETS) -> EquivalenceReport:
    """Compare a classifier statistic with the LT statistic on a labelled test set.

    Both score arrays must be oriented so that large means H0. Labels are 0
    for legitimate and 1 for intruder samples. Thresholds are calibrated on
    the label-0 scores; agreement is the fraction of all samples on which the
    two decisions coincide.
    """
    sm = _clean(scores_model, "scores_model")
    sl = _clean(scores_lt, "scores_lt")
    y = np.asarray(labels).ravel()
    if not (sm.shape == sl.shape == y.shape):
        raise ValueError("scores_model, scores_lt and labels must have equal length")
    h0 = y == 0
    if h0.all() or not h0.any():
        raise ValueError("labels must contain both classes")
    tau = float(kendalltau(sm, sl)[0])
    cm = det_curve(sm[h0], sm[~h0])
    cl = det_curve(sl[h0], sl[~h0])
    out = []
    for fa in fa_targets:
        tm = calibrate_threshold(sm[h0], fa)
        tl = calibrate_threshold(sl[h0], fa)
        agree = float(np.mean(decide(sm, tm) == decide(sl, tl)))
        md_m, im = md_at_fa(cm, fa)
        md_l, il = md_at_fa(cl, fa)
        out.append(MatchedFa(float(fa), md_m, md_l, im or il, agree, tm.realized_fa, tl.realized_fa))
    return EquivalenceReport(tau, tuple(out))


def write_det_csv(path, curve: DetCurve, comment: str | None = None) -> None:
    """Write ``fa,md`` rows; an optional ``# comment`` line goes first."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("fa,md")
    lines.extend(f"{f!r},{m!r}" for f, m in zip(curve.fa.tolist(), curve.md.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_det_csv(path) -> np.ndarray:
    """Inverse of ``write_det_csv``: an ``(n, 2)`` array of ``(fa, md)``."""
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not rows or rows[0] != "fa,md":
        raise ValueError(f"{path}: missing 'fa,md' header")
    return np.array([[float(v) for v in r.split(",")] for r in rows[1:]]).reshape(-1, 2)


def render_det_svg(path, curves: dict[str, DetCurve], title: str = "") -> None:
    """Log-log DET plot of one or more curves."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "plauth"}):
        _draw_det(plt, path, curves, title)


def _draw_det(plt, path, curves, title):
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, c in curves.items():
        keep = (c.fa > 0) & (c.md > 0)
        ax.loglog(c.fa[keep], c.md[keep], label=name)
    ax.set_xlabel("P_FA")
    ax.set_ylabel("P_MD")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    # fixed metadata and hash salt keep the file stable across runs
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
