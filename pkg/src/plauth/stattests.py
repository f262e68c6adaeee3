"""Decision function, logarithmic test (LT), likelihood-ratio test (LRT) and
empirical threshold calibration.

Scores fed to ``decide`` are oriented so that *large means legitimate*:
``u > delta`` accepts (H0), ``u <= delta`` rejects (H1). Ties reject.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channels import ClassDensity, Scenario, UniformDensity, log_density


class Hypothesis(enum.IntEnum):
    H0 = 0
    H1 = 1


@dataclass(frozen=True)
class Threshold:
    delta: float
    target_fa: float
    realized_fa: float
    n_calibration: int
    method: str = "empirical-quantile"
    degenerate: bool = False


def decide(u, delta) -> Hypothesis | np.ndarray:
    """H0 iff ``u > delta``. Arrays give an int array of 0 (H0) / 1 (H1)."""
    if isinstance(delta, Threshold):
        delta = delta.delta
    if np.ndim(u) == 0:
        return Hypothesis.H0 if u > delta else Hypothesis.H1
    return np.where(np.asarray(u) > delta, int(Hypothesis.H0), int(Hypothesis.H1))


def lt_score(scenario: Scenario, x):
    """Logarithmic test statistic ``log p0(x)``."""
    return log_density(scenario, 0, x)


def lrt_score(null, alternative, x):
    """Log-likelihood ratio ``log p0(x) - log p1(x)``.

    ``null`` and ``alternative`` are objects exposing ``logpdf`` such as
    ``ClassDensity`` or ``UniformDensity``.
    """
    return null.logpdf(x) - alternative.logpdf(x)


def lrt_uniform_score(scenario: Scenario, x):
    """LRT of the scenario's legitimate class against uniform on its domain."""
    return lrt_score(ClassDensity(scenario, 0), UniformDensity(scenario.domain), x)


def calibrate_threshold(scores_h0, target_fa: float) -> Threshold:
    """Pick ``delta`` so that the fraction of H0 scores ``<= delta`` is ``target_fa``.

    With tied scores the exact target may be unreachable; ``delta`` is then
    lowered to the largest attainable false-alarm rate below the target.
    If every score is equal the result is flagged ``degenerate``.
    """
    if not 0.0 < target_fa < 1.0:
        raise ValueError(f"target_fa must lie in (0, 1), got {target_fa}")
    s = np.sort(np.asarray(scores_h0, dtype=float).ravel())
    n = s.size
    if n == 0:
        raise ValueError("need at least one calibration score")
    if np.isnan(s).any():
        raise ValueError("calibration scores contain NaN")
    k = int(np.floor(target_fa * n + 1e-9))
    if k == 0:
        delta = float(np.nextafter(s[0], -np.inf))
    else:
        delta = float(s[k - 1])
        # ties would push the realized FA above target: step down
        if k < n and s[k] == delta:
            lower = s[s < delta]
            delta = float(lower[-1]) if lower.size else float(np.nextafter(s[0], -np.inf))
    realized = float(np.count_nonzero(s <= delta)) / n
    return Threshold(delta=delta, target_fa=float(target_fa), realized_fa=realized,
                     n_calibration=n, degenerate=bool(s[0] == s[-1]))
