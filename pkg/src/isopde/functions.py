"""
Closed-form scalar functions with analytic derivatives.

Warping functions, radial weights and fiber weights are all built from this
small catalogue so that every coefficient the discretization or the threshold
quadrature needs is available in closed form. Every expression is vectorized
over numpy arrays and serializes to a plain dict (``spec()``) that round-trips
through :func:`from_spec`, which is how the harness reads them from config.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError


class Expr:
    """Base class: ``f(x)``, ``d1(x)``, ``d2(x)``."""

    kind: str = ""

    def __call__(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        return False


def _zeros_like(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Constant(Expr):
    value: float = 0.0
    kind = "constant"

    def __call__(self, x):
        return _zeros_like(x) + self.value

    def d1(self, x):
        return _zeros_like(x)

    def d2(self, x):
        return _zeros_like(x)

    def spec(self):
        return {"kind": self.kind, "value": self.value}

    @property
    def is_constant(self):
        return True


@dataclass(frozen=True)
class Power(Expr):
    """``coeff * x**exponent``; non-integer exponents need ``x > 0``."""

    exponent: float = 1.0
    coeff: float = 1.0
    kind = "power"

    def __call__(self, x):
        return self.coeff * np.power(np.asarray(x, dtype=float), self.exponent)

    def d1(self, x):
        p = self.exponent
        if p == 0:
            return _zeros_like(x)
        return self.coeff * p * np.power(np.asarray(x, dtype=float), p - 1)

    def d2(self, x):
        p = self.exponent
        if p in (0, 1):
            return _zeros_like(x)
        return self.coeff * p * (p - 1) * np.power(np.asarray(x, dtype=float), p - 2)

    def spec(self):
        return {"kind": self.kind, "exponent": self.exponent, "coeff": self.coeff}

    @property
    def is_constant(self):
        return self.exponent == 0 or self.coeff == 0


@dataclass(frozen=True)
class Polynomial(Expr):
    """Ascending coefficients: ``c0 + c1 x + c2 x**2 + ...``."""

    coeffs: tuple = (0.0,)
    kind = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def _poly(self, order):
        p = np.polynomial.Polynomial(self.coeffs)
        return p.deriv(order) if order else p

    def __call__(self, x):
        return self._poly(0)(np.asarray(x, dtype=float))

    def d1(self, x):
        return self._poly(1)(np.asarray(x, dtype=float)) + _zeros_like(x)

    def d2(self, x):
        return self._poly(2)(np.asarray(x, dtype=float)) + _zeros_like(x)

    def spec(self):
        return {"kind": self.kind, "coeffs": list(self.coeffs)}

    @property
    def is_constant(self):
        return all(c == 0 for c in self.coeffs[1:])


@dataclass(frozen=True)
class Exp(Expr):
    """``coeff * exp(rate * x)``."""

    coeff: float = 1.0
    rate: float = 1.0
    kind = "exp"

    def __call__(self, x):
        return self.coeff * np.exp(self.rate * np.asarray(x, dtype=float))

    def d1(self, x):
        return self.rate * self(x)

    def d2(self, x):
        return self.rate**2 * self(x)

    def spec(self):
        return {"kind": self.kind, "coeff": self.coeff, "rate": self.rate}


@dataclass(frozen=True)
class ExpQuadratic(Expr):
    """``coeff * exp(rate * x**2)``."""

    coeff: float = 1.0
    rate: float = 1.0
    kind = "exp_quadratic"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.coeff * np.exp(self.rate * x * x)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * self.rate * x * self(x)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        a = self.rate
        return (2.0 * a + 4.0 * a * a * x * x) * self(x)

    def spec(self):
        return {"kind": self.kind, "coeff": self.coeff, "rate": self.rate}


@dataclass(frozen=True)
class Cosh(Expr):
    """``coeff * cosh(rate * x)``."""

    coeff: float = 1.0
    rate: float = 1.0
    kind = "cosh"

    def __call__(self, x):
        return self.coeff * np.cosh(self.rate * np.asarray(x, dtype=float))

    def d1(self, x):
        return self.coeff * self.rate * np.sinh(self.rate * np.asarray(x, dtype=float))

    def d2(self, x):
        return self.rate**2 * self(x)

    def spec(self):
        return {"kind": self.kind, "coeff": self.coeff, "rate": self.rate}


@dataclass(frozen=True)
class Sinh(Expr):
    """``coeff * sinh(rate * x)``."""

    coeff: float = 1.0
    rate: float = 1.0
    kind = "sinh"

    def __call__(self, x):
        return self.coeff * np.sinh(self.rate * np.asarray(x, dtype=float))

    def d1(self, x):
        return self.coeff * self.rate * np.cosh(self.rate * np.asarray(x, dtype=float))

    def d2(self, x):
        return self.rate**2 * self(x)

    def spec(self):
        return {"kind": self.kind, "coeff": self.coeff, "rate": self.rate}


@dataclass(frozen=True)
class Cos(Expr):
    """``coeff * cos(freq * x)``; periodic fiber weights."""

    coeff: float = 1.0
    freq: float = 1.0
    kind = "cos"

    def __call__(self, x):
        return self.coeff * np.cos(self.freq * np.asarray(x, dtype=float))

    def d1(self, x):
        return -self.coeff * self.freq * np.sin(self.freq * np.asarray(x, dtype=float))

    def d2(self, x):
        return -self.freq**2 * self(x)

    def spec(self):
        return {"kind": self.kind, "coeff": self.coeff, "freq": self.freq}


@dataclass(frozen=True)
class Sin(Expr):
    """``coeff * sin(freq * x)``."""

    coeff: float = 1.0
    freq: float = 1.0
    kind = "sin"

    def __call__(self, x):
        return self.coeff * np.sin(self.freq * np.asarray(x, dtype=float))

    def d1(self, x):
        return self.coeff * self.freq * np.cos(self.freq * np.asarray(x, dtype=float))

    def d2(self, x):
        return -self.freq**2 * self(x)

    def spec(self):
        return {"kind": self.kind, "coeff": self.coeff, "freq": self.freq}


def quadratic(coeff: float) -> Polynomial:
    return Polynomial((0.0, 0.0, coeff))


def linear(coeff: float, intercept: float = 0.0) -> Polynomial:
    return Polynomial((intercept, coeff))


_CATALOGUE = {
    "constant": (Constant, {"value"}),
    "power": (Power, {"exponent", "coeff"}),
    "polynomial": (Polynomial, {"coeffs"}),
    "exp": (Exp, {"coeff", "rate"}),
    "exp_quadratic": (ExpQuadratic, {"coeff", "rate"}),
    "cosh": (Cosh, {"coeff", "rate"}),
    "sinh": (Sinh, {"coeff", "rate"}),
    "cos": (Cos, {"coeff", "freq"}),
    "sin": (Sin, {"coeff", "freq"}),
}


def from_spec(spec: Mapping[str, Any] | Expr | float | int) -> Expr:
    """Build an expression from ``{"kind": ..., **params}``.

    Numbers become constants. Besides the catalogue kinds, ``quadratic``
    (``coeff``) and ``linear`` (``coeff``, ``intercept``) are accepted as
    polynomial shorthands.
    """
    if isinstance(spec, Expr):
        return spec
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ConfigError(f"function spec needs a 'kind' key, got {spec!r}")
    params = {k: v for k, v in spec.items() if k != "kind"}
    kind = spec["kind"]
    if kind == "quadratic":
        return quadratic(float(params.get("coeff", 1.0)))
    if kind == "linear":
        return linear(float(params.get("coeff", 1.0)), float(params.get("intercept", 0.0)))
    if kind not in _CATALOGUE:
        raise ConfigError(f"unknown function kind {kind!r}")
    cls, allowed = _CATALOGUE[kind]
    extra = set(params) - allowed
    if extra:
        raise ConfigError(f"unknown parameters for {kind!r}: {sorted(extra)}")
    return cls(**params)
