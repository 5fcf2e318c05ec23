"""Check records and the report container shared by all verifiers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

SCHEMA_VERSION = "1.0"
DEFAULT_Z = 3.0

PASS = "pass"
FAIL = "fail"
INAPPLICABLE = "inapplicable"

CSV_FIELDS = (
    "schema_version",
    "name",
    "model",
    "bound_kind",
    "point",
    "direction",
    "bound_value",
    "empirical_value",
    "std_error",
    "tolerance",
    "margin",
    "status",
    "provenance",
)


@dataclass
class Check:
    """One comparison of an empirical quantity against a bound.

    ``direction="upper"`` asserts ``empirical <= bound``; ``"lower"`` asserts
    ``empirical >= bound``. The margin is measured after allowing ``z``
    standard errors plus a fixed ``tolerance``, so ``passed`` iff ``margin >= 0``.
    """

    name: str
    bound_kind: str
    point: dict
    bound_value: float
    empirical_value: float
    std_error: float = 0.0
    z: float = DEFAULT_Z
    direction: str = "upper"
    tolerance: float = 0.0
    provenance: str = ""
    model: str = ""
    status: str = ""
    note: str = ""
    margin: float = field(init=False, default=math.nan)

    def __post_init__(self):
        if self.direction not in ("upper", "lower"):
            raise ValueError(f"direction must be 'upper' or 'lower', got {self.direction!r}")
        if self.status == INAPPLICABLE:
            return
        slack = self.z * self.std_error + self.tolerance
        if self.direction == "upper":
            self.margin = self.bound_value + slack - self.empirical_value
        else:
            self.margin = self.empirical_value + slack - self.bound_value
        self.status = PASS if self.margin >= 0 else FAIL

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def applicable(self) -> bool:
        return self.status != INAPPLICABLE

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def inapplicable(name: str, bound_kind: str, point: dict, reason: str, model: str = "",
                 provenance: str = "") -> Check:
    return Check(name, bound_kind, point, math.nan, math.nan, provenance=provenance, model=model,
                 status=INAPPLICABLE, note=reason)


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)
    z: float = DEFAULT_Z
    name: str = ""
    extras: dict = field(default_factory=dict)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, other: "VerificationReport | Iterable[Check]") -> "VerificationReport":
        if isinstance(other, VerificationReport):
            self.checks.extend(other.checks)
            for key, value in other.extras.items():
                self.extras.setdefault(key, value)
        else:
            self.checks.extend(other)
        return self

    @property
    def applicable(self) -> list[Check]:
        return [c for c in self.checks if c.applicable]

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.status == FAIL]

    @property
    def passed(self) -> bool:
        return not self.failures

    def subset(self, prefix: str) -> "VerificationReport":
        return VerificationReport([c for c in self.checks if c.name.startswith(prefix)], self.z, self.name)

    def min_margin(self) -> float:
        margins = [c.margin for c in self.applicable]
        return min(margins) if margins else math.nan

    def summary(self) -> dict:
        return {
            "n_checks": len(self.checks),
            "n_applicable": len(self.applicable),
            "n_failed": len(self.failures),
            "passed": self.passed,
        }

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "z": self.z,
            "summary": self.summary(),
            "extras": self.extras,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True, allow_nan=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for c in self.checks:
            row = {k: getattr(c, k, "") for k in CSV_FIELDS if k not in ("schema_version", "point")}
            row["schema_version"] = SCHEMA_VERSION
            row["point"] = json.dumps(_clean(c.point), sort_keys=True)
            for key in ("bound_value", "empirical_value", "std_error", "tolerance", "margin"):
                row[key] = _fmt(row[key])
            writer.writerow(row)
        return buf.getvalue()


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _clean(obj):
    """Replace NaN/inf by ``None``/strings so the JSON stays strict."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _clean(obj.tolist())
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
    return obj
