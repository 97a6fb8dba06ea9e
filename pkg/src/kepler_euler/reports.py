"""Structured residual statistics returned by every verification routine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class VerificationReport:
    check: str
    regime_c: float | None
    samples: int
    max_residual: float
    mean_residual: float
    tolerance: float
    passed: bool
    notes: list[str] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_residuals(cls, check: str, residuals, tolerance: float,
                       regime_c: float | None = None, notes=None, details=None) -> VerificationReport:
        r = np.abs(np.asarray(residuals, dtype=float)).ravel()
        finite = bool(np.all(np.isfinite(r)))
        max_r = float(np.max(r)) if r.size else 0.0
        mean_r = float(np.mean(r)) if r.size else 0.0
        return cls(check=check, regime_c=regime_c, samples=int(r.size),
                   max_residual=max_r, mean_residual=mean_r, tolerance=float(tolerance),
                   passed=finite and max_r < tolerance,
                   notes=list(notes or []), details=dict(details or {}))

    def to_dict(self) -> dict[str, Any]:
        return {
            "check": self.check,
            "regime_c": self.regime_c,
            "samples": self.samples,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "notes": list(self.notes),
            "details": _jsonable(self.details),
        }

    def __bool__(self) -> bool:
        return self.passed


def combine(check: str, reports: list[VerificationReport], regime_c=None,
            notes=None) -> VerificationReport:
    """Merge sub-reports; passes iff each sub-report passes."""
    worst = max(reports, key=lambda r: r.max_residual / r.tolerance if r.tolerance else r.max_residual)
    return VerificationReport(
        check=check, regime_c=regime_c,
        samples=max(r.samples for r in reports),
        max_residual=worst.max_residual,
        mean_residual=float(np.mean([r.mean_residual for r in reports])),
        tolerance=worst.tolerance,
        passed=all(r.passed for r in reports),
        notes=list(notes or []) + [n for r in reports for n in r.notes],
        details={r.check: r.to_dict() for r in reports},
    )


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
