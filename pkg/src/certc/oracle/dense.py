"""Dense affine forms for the reference interpreter.

A DensePoly is an affine expression over neurons (id -> coefficient plus a
constant); a DenseSym is the same over noise symbols.  Arithmetic follows
IEEE semantics: division by zero yields nan/inf so that values computed in
a discarded branch of an eager select stay inert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Tuple


@dataclass(frozen=True)
class NeuronRef:
    nid: int


@dataclass(frozen=True)
class NoiseRef:
    sid: int


def safe_div(a: float, b: float) -> float:
    if b == 0.0:
        return math.nan if a == 0.0 else math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


def safe_max(a: float, b: float) -> float:
    if math.isnan(a) or math.isnan(b):
        return math.nan
    return a if a >= b else b


def safe_min(a: float, b: float) -> float:
    if math.isnan(a) or math.isnan(b):
        return math.nan
    return a if a <= b else b


class _AffineForm:
    """Shared arithmetic for id -> coefficient maps with a constant."""

    __slots__ = ("const", "coeffs")

    def __init__(self, const: float = 0.0, coeffs: Dict[int, float] = None):
        self.const = float(const)
        self.coeffs = dict(coeffs) if coeffs else {}

    def items(self) -> Iterator[Tuple[int, float]]:
        return iter(sorted(self.coeffs.items()))

    def copy(self):
        return type(self)(self.const, self.coeffs)

    def add(self, other):
        if isinstance(other, _AffineForm):
            out = self.copy()
            out.const += other.const
            for key, val in other.coeffs.items():
                out.coeffs[key] = out.coeffs.get(key, 0.0) + val
            return out
        out = self.copy()
        out.const += float(other)
        return out

    def sub(self, other):
        if isinstance(other, _AffineForm):
            return self.add(other.neg())
        out = self.copy()
        out.const -= float(other)
        return out

    def neg(self):
        return type(self)(-self.const, {k: -v for k, v in self.coeffs.items()})

    def scale(self, s: float):
        s = float(s)
        return type(self)(self.const * s, {k: v * s for k, v in self.coeffs.items()})

    def divide(self, s: float):
        s = float(s)
        return type(self)(safe_div(self.const, s),
                          {k: safe_div(v, s) for k, v in self.coeffs.items()})

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.const == other.const and self.nonzero() == other.nonzero()

    def nonzero(self) -> Dict[int, float]:
        return {k: v for k, v in self.coeffs.items() if v != 0.0}

    def __repr__(self):
        terms = ", ".join("%d: %g" % (k, v) for k, v in self.items())
        return "%s(%g, {%s})" % (type(self).__name__, self.const, terms)


class DensePoly(_AffineForm):
    """Affine expression over neuron ids."""


class DenseSym(_AffineForm):
    """Affine expression over noise symbol ids; symbols range over [-1, 1]."""

    def interval(self) -> Tuple[float, float]:
        radius = sum(abs(v) for _, v in self.items())
        return self.const - radius, self.const + radius


def as_poly(value) -> DensePoly:
    if isinstance(value, DensePoly):
        return value
    if isinstance(value, NeuronRef):
        return DensePoly(0.0, {value.nid: 1.0})
    if isinstance(value, (int, float)):
        return DensePoly(float(value))
    raise TypeError("cannot treat %r as a neuron expression" % (value,))


def as_sym(value) -> DenseSym:
    if isinstance(value, DenseSym):
        return value
    if isinstance(value, NoiseRef):
        return DenseSym(0.0, {value.sid: 1.0})
    if isinstance(value, (int, float)):
        return DenseSym(float(value))
    raise TypeError("cannot treat %r as a noise expression" % (value,))
