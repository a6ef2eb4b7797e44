"""Statistical comparison of outcome ensembles (moments and KS marginals).

Operationalizes "equality in law" at Monte Carlo scale: two ensembles of
records agree if every first and second joint moment differs by less than
four standard errors and no per-marginal two-sample Kolmogorov-Smirnov test
rejects at the 1e-3 level.  Thresholds are deliberately loose enough that a
suite of ~50 such checks has a negligible false-failure rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ks_2samp

__all__ = ["Criterion", "ComparisonReport", "compare_distributions", "moments_against_theory"]

MOMENT_SIGMAS = 4.0
KS_ALPHA = 1e-3


@dataclass(frozen=True)
class Criterion:
    name: str
    observed: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "observed": float(self.observed),
            "tolerance": float(self.tolerance),
            "passed": bool(self.passed),
        }


@dataclass
class ComparisonReport:
    criteria: list = field(default_factory=list)

    def add(self, name: str, observed: float, tolerance: float) -> bool:
        ok = bool(observed <= tolerance)
        self.criteria.append(Criterion(name, float(observed), float(tolerance), ok))
        return ok

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def failures(self) -> list:
        return [c for c in self.criteria if not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "criteria": [c.to_dict() for c in self.criteria]}

    def summary_lines(self) -> list[str]:
        lines = []
        for c in self.criteria:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"[{status}] {c.name}: observed {c.observed:.4g} vs tolerance {c.tolerance:.4g}")
        return lines


def _flatten(sample: np.ndarray) -> np.ndarray:
    s = np.asarray(sample, float)
    if s.ndim == 3:  # (n_traj, n_steps, d) -> (n_traj, n_steps * d)
        s = s.reshape(s.shape[0], -1)
    if s.ndim != 2:
        raise ValueError("samples must be (n, k) or (n_traj, n_steps, d)")
    return s


def compare_distributions(
    sample_a: np.ndarray,
    sample_b: np.ndarray,
    report: ComparisonReport | None = None,
    label: str = "",
    moment_sigmas: float = MOMENT_SIGMAS,
    ks_alpha: float = KS_ALPHA,
) -> ComparisonReport:
    """Compare two ensembles column by column and on all second joint moments."""
    a, b = _flatten(sample_a), _flatten(sample_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("samples have different dimensions")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least two draws per sample")
    if np.allclose(a.var(axis=0), 0) and np.allclose(b.var(axis=0), 0):
        raise ValueError("degenerate samples: zero variance everywhere")
    report = report if report is not None else ComparisonReport()
    k = a.shape[1]
    na, nb = a.shape[0], b.shape[0]
    prefix = f"{label}: " if label else ""

    for j in range(k):
        delta = abs(a[:, j].mean() - b[:, j].mean())
        se = np.sqrt(a[:, j].var(ddof=1) / na + b[:, j].var(ddof=1) / nb)
        report.add(f"{prefix}mean[{j}]", delta, moment_sigmas * se)
    for i in range(k):
        for j in range(i, k):
            pa, pb = a[:, i] * a[:, j], b[:, i] * b[:, j]
            delta = abs(pa.mean() - pb.mean())
            se = np.sqrt(pa.var(ddof=1) / na + pb.var(ddof=1) / nb)
            report.add(f"{prefix}second[{i},{j}]", delta, moment_sigmas * se)
    for j in range(k):
        stat = ks_2samp(a[:, j], b[:, j])
        # report the p-value as "observed >= alpha passes" by flipping signs
        report.add(f"{prefix}ks[{j}] (1-p)", 1.0 - stat.pvalue, 1.0 - ks_alpha)
    return report


def moments_against_theory(
    sample: np.ndarray,
    theory_means: np.ndarray,
    report: ComparisonReport | None = None,
    label: str = "",
    moment_sigmas: float = MOMENT_SIGMAS,
) -> ComparisonReport:
    """Check sample means against exact theoretical means, 4 sigma pointwise."""
    s = _flatten(sample)
    mu = np.asarray(theory_means, float).ravel()
    if mu.size != s.shape[1]:
        raise ValueError("theory means have wrong dimension")
    report = report if report is not None else ComparisonReport()
    prefix = f"{label}: " if label else ""
    for j in range(s.shape[1]):
        delta = abs(s[:, j].mean() - mu[j])
        se = s[:, j].std(ddof=1) / np.sqrt(s.shape[0])
        report.add(f"{prefix}theory-mean[{j}]", delta, moment_sigmas * se)
    return report
