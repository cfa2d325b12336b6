"""Check verdicts and their JSON form."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

__all__ = ["Verdict", "CheckReport", "jsonable"]


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"

    def __str__(self):
        return self.value


def jsonable(obj):
    """Recursively convert numpy values to plain JSON-safe Python objects.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``
    so that the output stays strict JSON.
    """
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


@dataclass
class CheckReport:
    """Outcome of one check.

    ``margin`` is the smallest slack seen over everything tested (negative
    means some inequality was violated).  A failing report always carries a
    ``witness`` from which the violation can be re-evaluated.
    """

    verdict: Verdict
    margin: float
    witness: Optional[dict] = None
    check: str = ""
    mode: Optional[str] = None
    seed: Optional[int] = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.verdict = Verdict(self.verdict)
        if self.verdict is Verdict.FAIL and self.witness is None:
            raise ValueError("a failing report needs a witness")

    @property
    def passed(self):
        return self.verdict is Verdict.PASS

    @property
    def failed(self):
        return self.verdict is Verdict.FAIL

    def to_dict(self) -> dict[str, Any]:
        out = {
            "check": self.check,
            "verdict": self.verdict.value,
            "margin": self.margin,
            "witness": self.witness,
            "seed": self.seed,
            "mode": self.mode,
        }
        if self.details:
            out["details"] = self.details
        return jsonable(out)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)
