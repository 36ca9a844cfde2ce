"""Pooled two-proportion z-test and significance stars."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class PropTestResult:
    z: float
    p_two_sided: float
    x1: int
    n1: int
    x2: int
    n2: int


def normal_sf2(z: float) -> float:
    """Two-sided tail mass ``2 * (1 - Phi(|z|))``.

    Evaluated as ``erfc(|z| / sqrt(2))``, which avoids the cancellation of
    ``1 - Phi`` in the far tail; libm's erfc is accurate to a few ulp.
    """
    return math.erfc(abs(z) / math.sqrt(2.0))


def two_prop_test(x1: int, n1: int, x2: int, n2: int) -> PropTestResult:
    """Pooled two-proportion z-test without continuity correction."""
    if n1 <= 0 or n2 <= 0:
        raise ValueError(f"sample sizes must be positive, got n1={n1}, n2={n2}")
    if not (0 <= x1 <= n1 and 0 <= x2 <= n2):
        raise ValueError(f"counts out of range: x1={x1}/{n1}, x2={x2}/{n2}")
    pooled = (x1 + x2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    diff = x1 / n1 - x2 / n2
    if var == 0.0:
        # pooled proportion is 0 or 1, so both sample proportions are equal
        return PropTestResult(0.0, 1.0, x1, n1, x2, n2)
    z = diff / math.sqrt(var)
    return PropTestResult(z, min(1.0, normal_sf2(z)), x1, n1, x2, n2)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""
