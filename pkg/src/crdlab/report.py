"""Check records and deterministic JSON/CSV emission shared by every module."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable


SIG_DIGITS = 12


class AuditFailure(AssertionError):
    """Raised when a report is asked to hold and one of its checks does not."""

    def __init__(self, failed: list["Check"]):
        self.failed = failed
        names = ", ".join(c.check for c in failed)
        super().__init__(f"{len(failed)} check(s) failed: {names}")


@dataclass(frozen=True)
class Check:
    """One inequality or equality verified numerically.

    ``lhs <= rhs`` is the convention; ``slack = rhs - lhs``. Equalities are
    recorded as ``|a - b| <= tol`` with lhs the absolute difference.
    """

    check: str
    lhs: float
    rhs: float
    passed: bool
    detail: str = ""

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @classmethod
    def leq(cls, name: str, lhs: float, rhs: float, detail: str = "") -> "Check":
        lhs, rhs = float(lhs), float(rhs)
        return cls(name, lhs, rhs, bool(lhs <= rhs), detail)

    @classmethod
    def close(cls, name: str, a: float, b: float, tol: float, detail: str = "") -> "Check":
        return cls.leq(name, abs(float(a) - float(b)), tol, detail)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "check": self.check,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "pass": self.passed,
        }
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class AuditReport:
    name: str
    checks: list[Check] = field(default_factory=list)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, checks: Iterable[Check]) -> None:
        self.checks.extend(checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def raise_if_failed(self) -> None:
        if not self.passed:
            raise AuditFailure(self.failures)

    def to_dict(self) -> dict[str, Any]:
        return {
            "suite": self.name,
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def round_sig(value: float, digits: int = SIG_DIGITS) -> float:
    if value == 0 or not math.isfinite(value):
        return value
    return float(f"{value:.{digits}g}")


def _normalize(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return obj
    if isinstance(obj, float):
        return round_sig(obj)
    if hasattr(obj, "tolist"):
        return _normalize(obj.tolist())
    if hasattr(obj, "to_dict"):
        return _normalize(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    # numpy scalars
    if hasattr(obj, "item"):
        return _normalize(obj.item())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Byte-stable JSON: sorted keys, floats rounded to 12 significant digits."""
    return json.dumps(_normalize(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def fmt(value: float) -> str:
    return f"{value:.{SIG_DIGITS}g}"
