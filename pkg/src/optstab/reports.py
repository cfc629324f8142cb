"""Structured pass/fail records pairing a measured quantity with a bound."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable


@dataclass(frozen=True)
class CheckReport:
    """One inequality check.

    ``kind="upper"`` means the check is ``measured <= bound + slack_used``;
    ``kind="lower"`` means ``measured >= bound - slack_used``.
    """

    check_name: str
    measured: float
    bound: float
    slack_used: float = 0.0
    kind: str = "upper"
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("upper", "lower"):
            raise ValueError(f"kind must be 'upper' or 'lower', got {self.kind!r}")

    @property
    def passed(self) -> bool:
        if math.isnan(self.measured) or math.isnan(self.bound):
            return False
        if self.kind == "upper":
            return self.measured <= self.bound + self.slack_used
        return self.measured >= self.bound - self.slack_used

    @property
    def margin(self) -> float:
        """Distance to failure; negative when the check fails."""
        if self.kind == "upper":
            return self.bound + self.slack_used - self.measured
        return self.measured - (self.bound - self.slack_used)

    def to_dict(self) -> dict:
        return {
            "name": self.check_name,
            "kind": self.kind,
            "measured": _jsonable(self.measured),
            "bound": _jsonable(self.bound),
            "slack_used": _jsonable(self.slack_used),
            "pass": self.passed,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CheckReport":
        return cls(
            check_name=data["name"],
            measured=_unjson(data["measured"]),
            bound=_unjson(data["bound"]),
            slack_used=_unjson(data.get("slack_used", 0.0)),
            kind=data.get("kind", "upper"),
            context=dict(data.get("context", {})),
        )

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        op = "<=" if self.kind == "upper" else ">="
        return (
            f"[{status}] {self.check_name}: measured={self.measured:.6g} {op} "
            f"bound={self.bound:.6g} (slack {self.slack_used:.3g})"
        )


def _jsonable(value: Any):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def _unjson(value):
    if isinstance(value, str):
        return float(value)
    return float(value)


def dumps_reports(reports: Iterable[CheckReport]) -> str:
    """Serialize reports to the structured text document (JSON list)."""
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"


def loads_reports(text: str) -> list[CheckReport]:
    return [CheckReport.from_dict(d) for d in json.loads(text)]
