"""Operational design domain: semantic bounds plus scenario sets.

An :class:`OddSpec` bounds each semantic dimension and carries three lists
of hand-compiled scenarios (in-domain, out-of-domain, borderline).
:func:`check_consistency` cross-checks the two descriptions against each
other. "Borderline" means inside the bounds but within ``epsilon`` times
the range of an edge.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import SpecificationError


class Region(str, enum.Enum):
    IN = "in"
    BORDERLINE = "borderline"
    OUT = "out"


@dataclass(frozen=True)
class SemanticDimension:
    name: str
    low: float | None = None
    high: float | None = None
    values: tuple | None = None

    def __post_init__(self):
        if self.values is not None:
            if self.low is not None or self.high is not None:
                raise SpecificationError(f"{self.name}: give either bounds or categorical values")
            if len(self.values) == 0:
                raise SpecificationError(f"{self.name}: empty categorical value set")
            object.__setattr__(self, "values", tuple(self.values))
        else:
            if self.low is None or self.high is None or not float(self.low) < float(self.high):
                raise SpecificationError(f"{self.name}: continuous range needs low < high")
            object.__setattr__(self, "low", float(self.low))
            object.__setattr__(self, "high", float(self.high))

    @property
    def categorical(self):
        return self.values is not None

    @property
    def width(self):
        return self.high - self.low

    def to_dict(self):
        if self.categorical:
            return {"name": self.name, "values": list(self.values)}
        return {"name": self.name, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class Violation:
    kind: str  # in_domain_outside | out_of_domain_inside | borderline_mismatch | performance_range
    subject: str
    detail: str

    def to_dict(self):
        return {"kind": self.kind, "subject": self.subject, "detail": self.detail}


@dataclass(frozen=True)
class OddSpec:
    """Uncertainty ODD.

    ``performance`` optionally maps dimension names to the (narrower) model
    ODD: a ``(low, high)`` pair or a collection of categorical values.
    """

    dimensions: tuple
    epsilon: float = 0.05
    performance: dict = field(default_factory=dict)
    in_domain: tuple = ()
    out_of_domain: tuple = ()
    borderline: tuple = ()

    def __post_init__(self):
        dims = tuple(self.dimensions)
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise SpecificationError("duplicate dimension names")
        if not 0.0 < self.epsilon < 0.5:
            raise SpecificationError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        unknown = set(self.performance) - set(names)
        if unknown:
            raise SpecificationError(f"performance ranges for unknown dimensions {sorted(unknown)}")
        object.__setattr__(self, "dimensions", dims)
        for name in ("in_domain", "out_of_domain", "borderline"):
            object.__setattr__(self, name, tuple(dict(p) for p in getattr(self, name)))

    def dimension(self, name):
        for d in self.dimensions:
            if d.name == name:
                return d
        raise SpecificationError(f"unknown dimension {name!r}")

    @classmethod
    def from_dict(cls, doc):
        try:
            dims = []
            for d in doc["dimensions"]:
                if "values" in d:
                    dims.append(SemanticDimension(d["name"], values=tuple(d["values"])))
                else:
                    dims.append(SemanticDimension(d["name"], d.get("low"), d.get("high")))
            perf = {k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.get("performance", {}).items()}
            return cls(tuple(dims), float(doc.get("epsilon", 0.05)), perf,
                       tuple(doc.get("in_domain", ())), tuple(doc.get("out_of_domain", ())),
                       tuple(doc.get("borderline", ())))
        except (KeyError, TypeError) as exc:
            raise SpecificationError(f"malformed ODD block: {exc}") from exc

    def to_dict(self):
        return {
            "dimensions": [d.to_dict() for d in self.dimensions],
            "epsilon": self.epsilon,
            "performance": {k: list(v) for k, v in self.performance.items()},
            "in_domain": list(self.in_domain),
            "out_of_domain": list(self.out_of_domain),
            "borderline": list(self.borderline),
        }


def contains(odd, point):
    """Classify a semantic point as IN, BORDERLINE or OUT."""
    border = False
    for d in odd.dimensions:
        if d.name not in point:
            raise SpecificationError(f"point lacks a value for dimension {d.name!r}")
        v = point[d.name]
        if d.categorical:
            if v not in d.values:
                return Region.OUT
            continue
        v = float(v)
        if v < d.low or v > d.high:
            return Region.OUT
        band = odd.epsilon * d.width
        if v - d.low <= band or d.high - v <= band:
            border = True
    return Region.BORDERLINE if border else Region.IN


def _performance_violation(odd, d, perf):
    if d.categorical:
        extra = set(perf) - set(d.values)
        if extra:
            return f"performance values {sorted(map(str, extra))} not in uncertainty ODD"
        return None
    lo, hi = perf
    if lo < d.low or hi > d.high:
        return f"performance range [{lo}, {hi}] exceeds uncertainty range [{d.low}, {d.high}]"
    return None


def check_consistency(odd):
    """List every disagreement between scenario sets and semantic bounds."""
    out = []
    for label, points, wanted in (("in_domain", odd.in_domain, None),
                                  ("out_of_domain", odd.out_of_domain, None),
                                  ("borderline", odd.borderline, Region.BORDERLINE)):
        for i, point in enumerate(points):
            region = contains(odd, point)
            subject = f"{label}[{i}] {point}"
            if label == "in_domain" and region is Region.OUT:
                out.append(Violation("in_domain_outside", subject, "in-domain scenario lies outside the bounds"))
            elif label == "out_of_domain" and region is not Region.OUT:
                out.append(Violation("out_of_domain_inside", subject,
                                     f"out-of-domain scenario classified {region.value}"))
            elif wanted is not None and region is not wanted:
                out.append(Violation("borderline_mismatch", subject,
                                     f"borderline scenario classified {region.value}"))
    for d in odd.dimensions:
        if d.name in odd.performance:
            msg = _performance_violation(odd, d, odd.performance[d.name])
            if msg:
                out.append(Violation("performance_range", d.name, msg))
    return out
