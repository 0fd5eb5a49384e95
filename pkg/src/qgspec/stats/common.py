"""Shared pieces: running Cesàro means, limit extrapolation, report types, solving helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..conditions import VertexConditionSet
from ..secular import SecularSystem, Spectrum, SpectrumError


class VerdictError(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


def running_mean(values: np.ndarray) -> np.ndarray:
    """``C(N) = (1/N) sum_{n <= N} values[n-1]`` for N = 1..len(values)."""
    values = np.asarray(values, float)
    return np.cumsum(values) / np.arange(1, len(values) + 1)


def cluster_even(values: np.ndarray, spectrum: Spectrum) -> np.ndarray:
    """Replace each per-eigenfunction statistic by its cluster average.

    Only the cluster sum is independent of the basis of a degenerate
    eigenspace; splitting it evenly makes ``C(N)`` canonical at every N.
    """
    out = np.asarray(values, float).copy()
    for start, m, _ in spectrum.clusters():
        if start >= len(out):
            break
        if start + m > len(out):
            raise SpectrumError("statistic list ends inside a degenerate cluster")
        out[start:start + m] = out[start:start + m].mean()
    return out


@dataclass(frozen=True)
class Extrapolation:
    limit: float
    slope: float
    residual: float  # rms of the fit
    n_range: tuple[int, int]


def extrapolate(means: np.ndarray, n_min: int | None = None) -> Extrapolation:
    """Least-squares fit ``C(N) ~ c0 + c1/N`` over the upper half of the N range."""
    means = np.asarray(means, float)
    n_max = len(means)
    n_min = max(1, n_max // 2) if n_min is None else n_min
    N = np.arange(n_min, n_max + 1)
    y = means[n_min - 1:]
    X = np.column_stack([np.ones_like(N, dtype=float), 1.0 / N])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return Extrapolation(float(coef[0]), float(coef[1]), res, (int(n_min), int(n_max)))


@dataclass
class ComparisonReport:
    label_a: str
    label_b: str
    n: np.ndarray  # N values where C(N) is reported
    cesaro: np.ndarray
    predicted: float | None = None
    extrapolation: Extrapolation | None = None
    bound: np.ndarray | None = None  # lower/upper bound sequence where relevant
    verdicts: dict[str, bool] = field(default_factory=dict)
    certificates: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    spectra: dict[str, Spectrum] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def rows(self):
        ext = self.extrapolation.limit if self.extrapolation else float("nan")
        pred = self.predicted if self.predicted is not None else float("nan")
        for i, (n, c) in enumerate(zip(self.n, self.cesaro)):
            b = float(self.bound[i]) if self.bound is not None else float("nan")
            yield int(n), float(c), pred, ext, b

    def summary(self) -> str:
        lines = [f"comparison {self.label_a} vs {self.label_b}"]
        if len(self.n):
            lines.append(f"  C({int(self.n[-1])}) = {self.cesaro[-1]:.10g}")
        if self.predicted is not None:
            lines.append(f"  predicted limit = {self.predicted:.10g}")
        if self.extrapolation is not None:
            e = self.extrapolation
            lines.append(f"  extrapolated limit = {e.limit:.10g} (fit rms {e.residual:.3g} on N in {e.n_range})")
        for k, v in self.verdicts.items():
            lines.append(f"  verdict {k}: {'PASS' if v else 'FAIL'}")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


def relative_deviation(a, b) -> float:
    return float(np.max(np.abs(a - b) / (1.0 + np.abs(a)))) if len(a) else 0.0


def solve(g, conditions: VertexConditionSet, q=None, n: int = 10, jobs: int = 1,
          certify: bool = True) -> tuple[SecularSystem, Spectrum]:
    system = SecularSystem(g, conditions, q)
    return system, system.find_spectrum(n=n, certify=certify, jobs=jobs)


def certificate_line(label: str, spec: Spectrum) -> str:
    c = spec.certificate
    return f"{label}: " + (c.summary() if c is not None else "not certified")


def strictly_increasing(x) -> bool:
    x = np.asarray(x, float)
    return bool(np.all(np.diff(x) > 0))


def weyl_tail(weight: float, total_length: float, t: float, cutoff: float) -> float:
    """``weight * int_cutoff^inf exp(-lam t) L / (2 pi sqrt(lam)) dlam``."""
    from scipy.special import erfc

    return weight * total_length / (2 * math.pi) * math.sqrt(math.pi / t) * float(erfc(math.sqrt(cutoff * t)))
