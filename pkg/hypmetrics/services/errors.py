"""Exception types raised by the hypmetrics services.

All of them derive from ``ValueError`` so callers that only care about bad
input can keep catching that. Audit findings are never raised; they are
carried by the report objects.
"""

from __future__ import annotations

from typing import Optional, Sequence


class HypMetricsError(ValueError):
    """Base class for every error raised by hypmetrics."""


class DomainError(HypMetricsError):
    """An argument lies outside the domain of a formula or bound."""


class DimensionError(HypMetricsError):
    """Point coordinates do not match the dimension of a primitive."""


class ConstructionError(HypMetricsError):
    """A space could not be built (e.g. a sample point lies inside M)."""


class ConnectivityError(ConstructionError):
    """A graph space is not connected."""


class WeightError(ConstructionError):
    """A weight value is not strictly positive."""


class UnsupportedFamilyError(HypMetricsError):
    """The operation is not defined for the requested metric family."""


class ProbeError(HypMetricsError):
    """Every probe of a dilatation estimate was rejected."""


class EvaluationError(HypMetricsError):
    """A distance oracle returned NaN or a negative value."""

    def __init__(self, message: str, witness: Sequence[int] = ()):
        super().__init__(f"{message} (witness={tuple(witness)})")
        self.witness = tuple(int(i) for i in witness)


class SpecParseError(HypMetricsError):
    """A space-spec or experiment document could not be parsed."""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        field: Optional[str] = None,
    ):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")
        self.line = line
        self.field = field
