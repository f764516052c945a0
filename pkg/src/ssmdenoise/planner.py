"""Contraction-order planning for the frequency-domain SSM einsum

    y[b, j, f] = x[b, i, f] * B[n, i] * K[n, f] * C[j, n]

Two orders are considered. Input-project-first projects the input onto the
states, convolves each state with its basis kernel and reads out. Kernel-first
materializes the full ``J x I`` kernel bank and convolves it with the input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .errors import CostOverflowError, InvalidDimensionError

COST_LIMIT = 2**63 - 1


class Order(str, enum.Enum):
    INPUT_PROJECT_FIRST = "input-project-first"
    KERNEL_FIRST = "kernel-first"


@dataclass(frozen=True)
class ContractionDims:
    B: int
    I: int
    J: int
    N: int
    F: int

    def __post_init__(self):
        for name in "BIJNF":
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidDimensionError(f"{name} must be a positive integer, got {value}")


@dataclass(frozen=True)
class ContractionOrder:
    variant: Order
    cost: int


def contraction_costs(d):
    """Exact forward MAC counts ``(input_project_first, kernel_first)``."""
    B, I, J, N, F = d.B, d.I, d.J, d.N, d.F
    cost1 = B * N * I * F + B * N * F + B * J * N * F
    cost2 = J * N * I + J * N * I * F + B * J * I * F
    if max(cost1, cost2) > COST_LIMIT:
        raise CostOverflowError(f"contraction cost exceeds {COST_LIMIT}")
    return cost1, cost2


def prefers_input_projection(B, N, I, J):
    """The decision rule ``1/B + 1/N >= 1/I + 1/J`` in exact arithmetic.

    Ties go to input-project-first, which never materializes the J x I kernel.
    """
    return Fraction(1, B) + Fraction(1, N) >= Fraction(1, I) + Fraction(1, J)


def plan_contraction(d):
    cost1, cost2 = contraction_costs(d)
    if prefers_input_projection(d.B, d.N, d.I, d.J):
        return ContractionOrder(Order.INPUT_PROJECT_FIRST, cost1)
    return ContractionOrder(Order.KERNEL_FIRST, cost2)
