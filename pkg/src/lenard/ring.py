"""Exact differential-polynomial ring in ``x`` and the jet variables ``V, V', V'', ...``.

A :class:`DiffPoly` is a finite sum of monomials ``c * x**m * prod_k (V^(k))**e_k``
with :class:`fractions.Fraction` coefficients.  The jet variables are treated as
independent generators; :func:`total_derivative` is the derivation that maps
``x -> 1`` and ``V^(k) -> V^(k+1)``.

Values are immutable and every operation is pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Dict, Iterable, Iterator, Mapping, Tuple

from .errors import NotExact

__all__ = [
    "Monomial",
    "DiffPoly",
    "ZERO",
    "ONE",
    "X",
    "V",
    "const",
    "add",
    "scale",
    "mul",
    "total_derivative",
    "variational_derivative",
    "antiderivative",
    "is_exact",
    "parse_rational",
    "format_rational",
]

Jet = Tuple[int, ...]
Key = Tuple[int, Jet]


def parse_rational(value) -> Fraction:
    """Coerce ints, Fractions and ``"p/q"`` strings to a Fraction.

    Floats are rejected: coefficients must stay exact.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a rational coefficient")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if "." in text or "e" in text.lower():
            raise ValueError(f"decimal notation not allowed in exact coefficient: {value!r}")
        return Fraction(text)
    raise TypeError(f"cannot use {type(value).__name__} as an exact coefficient")


def format_rational(c: Fraction) -> str:
    return f"{c.numerator}/{c.denominator}"


def _trim(jet: Iterable[int]) -> Jet:
    jet = list(jet)
    while jet and jet[-1] == 0:
        jet.pop()
    return tuple(jet)


def _jet_mul(a: Jet, b: Jet) -> Jet:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return a
    out = list(a)
    for i, e in enumerate(b):
        out[i] += e
    return tuple(out)


def _sort_key(key: Key):
    xdeg, jet = key
    return (sum(jet), len(jet) - 1, xdeg, jet)


@dataclass(frozen=True)
class Monomial:
    """One term ``coeff * x**xdeg * prod (V^(k))**jet[k]``."""

    coeff: Fraction
    xdeg: int
    jet: Mapping[int, int]

    @property
    def weight(self) -> int:
        # V^(k) has weight k+2 and x has weight -1, so D raises weight by one.
        return sum(e * (k + 2) for k, e in self.jet.items()) - self.xdeg

    @property
    def degree(self) -> int:
        return sum(self.jet.values())


class DiffPoly:
    """Immutable differential polynomial with exact rational coefficients."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Key, Fraction] | None = None):
        clean: Dict[Key, Fraction] = {}
        if terms:
            for (xdeg, jet), c in terms.items():
                if c:
                    clean[(xdeg, _trim(jet))] = clean.get((xdeg, _trim(jet)), 0) + Fraction(c)
            clean = {k: c for k, c in clean.items() if c}
        object.__setattr__(self, "_terms", clean)
        object.__setattr__(self, "_hash", None)

    @classmethod
    def _raw(cls, terms: Dict[Key, Fraction]) -> "DiffPoly":
        # caller guarantees trimmed keys and nonzero coefficients
        obj = cls.__new__(cls)
        object.__setattr__(obj, "_terms", terms)
        object.__setattr__(obj, "_hash", None)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("DiffPoly is immutable")

    # -- construction -----------------------------------------------------

    @classmethod
    def monomial(cls, coeff=1, xdeg: int = 0, jet: Mapping[int, int] | Jet = ()) -> "DiffPoly":
        if isinstance(jet, Mapping):
            dense = [0] * (max(jet, default=-1) + 1)
            for k, e in jet.items():
                dense[int(k)] = int(e)
            jet = tuple(dense)
        return cls({(xdeg, tuple(jet)): parse_rational(coeff)})

    @classmethod
    def coerce(cls, value) -> "DiffPoly":
        if isinstance(value, DiffPoly):
            return value
        return cls.monomial(parse_rational(value))

    # -- inspection -------------------------------------------------------

    def items(self) -> Iterator[Tuple[Key, Fraction]]:
        """(key, coeff) pairs in canonical order."""
        for key in sorted(self._terms, key=_sort_key):
            yield key, self._terms[key]

    def terms(self) -> list[Monomial]:
        return [
            Monomial(c, xdeg, {k: e for k, e in enumerate(jet) if e})
            for (xdeg, jet), c in self.items()
        ]

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, xdeg: int = 0, jet: Mapping[int, int] | Jet = ()) -> Fraction:
        if isinstance(jet, Mapping):
            dense = [0] * (max(jet, default=-1) + 1)
            for k, e in jet.items():
                dense[int(k)] = int(e)
            jet = dense
        return self._terms.get((xdeg, _trim(jet)), Fraction(0))

    def max_order(self) -> int:
        """Highest derivative order present, or -1 if no jet variable occurs."""
        return max((len(jet) - 1 for _, jet in self._terms), default=-1)

    def max_xdeg(self) -> int:
        return max((x for x, _ in self._terms), default=0)

    def is_x_free(self) -> bool:
        return all(x == 0 for x, _ in self._terms)

    def is_constant(self) -> bool:
        return all(key == (0, ()) for key in self._terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not a constant")
        return self._terms.get((0, ()), Fraction(0))

    def weights(self) -> set[int]:
        return {sum(e * (k + 2) for k, e in enumerate(jet)) - x for x, jet in self._terms}

    def weight(self) -> int:
        """Common weight of a weight-homogeneous polynomial; ValueError otherwise."""
        ws = self.weights()
        if len(ws) != 1:
            raise ValueError(f"not weight-homogeneous (weights {sorted(ws)})")
        return ws.pop()

    def support(self) -> frozenset:
        return frozenset(self._terms)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other) -> "DiffPoly":
        other = _coerce_or_none(other)
        if other is None:
            return NotImplemented
        if not other._terms:
            return self
        out = dict(self._terms)
        for k, c in other._terms.items():
            s = out.get(k, 0) + c
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return DiffPoly._raw(out)

    __radd__ = __add__

    def __neg__(self) -> "DiffPoly":
        return DiffPoly._raw({k: -c for k, c in self._terms.items()})

    def __sub__(self, other) -> "DiffPoly":
        other = _coerce_or_none(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "DiffPoly":
        return (-self) + other

    def scale(self, c) -> "DiffPoly":
        c = parse_rational(c)
        if not c:
            return ZERO
        return DiffPoly._raw({k: v * c for k, v in self._terms.items()})

    def __mul__(self, other) -> "DiffPoly":
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.scale(other)
        other = _coerce_or_none(other)
        if other is None:
            return NotImplemented
        out: Dict[Key, Fraction] = {}
        for (x1, j1), c1 in self._terms.items():
            for (x2, j2), c2 in other._terms.items():
                key = (x1 + x2, _jet_mul(j1, j2))
                out[key] = out.get(key, 0) + c1 * c2
        return DiffPoly._raw({k: c for k, c in out.items() if c})

    __rmul__ = __mul__

    def __truediv__(self, other) -> "DiffPoly":
        return self.scale(1 / parse_rational(other))

    def __pow__(self, n: int) -> "DiffPoly":
        if n < 0:
            raise ValueError("negative powers are not in the ring")
        result, base = ONE, self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other) -> bool:
        other = _coerce_or_none(other)
        if other is None:
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(frozenset(self._terms.items())))
        return self._hash

    # -- calculus ---------------------------------------------------------

    def diff(self) -> "DiffPoly":
        return total_derivative(self)

    def partial(self, order: int) -> "DiffPoly":
        """Partial derivative with respect to the jet variable ``V^(order)``."""
        out: Dict[Key, Fraction] = {}
        for (x, jet), c in self._terms.items():
            if order < len(jet) and jet[order]:
                e = jet[order]
                new = list(jet)
                new[order] -= 1
                key = (x, _trim(new))
                out[key] = out.get(key, 0) + c * e
        return DiffPoly._raw({k: c for k, c in out.items() if c})

    def partial_x(self) -> "DiffPoly":
        out: Dict[Key, Fraction] = {}
        for (x, jet), c in self._terms.items():
            if x:
                out[(x - 1, jet)] = c * x
        return DiffPoly._raw(out)

    def reflect(self) -> "DiffPoly":
        """Substitute ``V -> -V`` (every jet variable changes sign)."""
        return DiffPoly._raw({k: (-c if sum(k[1]) % 2 else c) for k, c in self._terms.items()})

    def substitute_order(self, order: int, replacement: "DiffPoly") -> "DiffPoly":
        """Replace every occurrence of ``V^(order)`` by ``replacement``."""
        out = ZERO
        powers = {0: ONE}
        for (x, jet), c in self._terms.items():
            e = jet[order] if order < len(jet) else 0
            if not e:
                out = out + DiffPoly._raw({(x, jet): c})
                continue
            rest = list(jet)
            rest[order] = 0
            if e not in powers:
                powers[e] = replacement ** e
            out = out + DiffPoly._raw({(x, _trim(rest)): c}) * powers[e]
        return out

    # -- evaluation -------------------------------------------------------

    def evaluate(self, x, jets):
        """Evaluate with ``x`` and ``jets[k] = V^(k)`` (numbers or numpy arrays).

        Coefficients are converted to float only at this final step.
        """
        total = 0
        for (xdeg, jet), c in self.items():
            term = float(c)
            if xdeg:
                term = term * x ** xdeg
            for k, e in enumerate(jet):
                if e:
                    term = term * jets[k] ** e
            total = total + term
        return total

    def evaluate_exact(self, x, jets) -> Fraction:
        total = Fraction(0)
        for (xdeg, jet), c in self._terms.items():
            term = c * Fraction(x) ** xdeg
            for k, e in enumerate(jet):
                if e:
                    term *= Fraction(jets[k]) ** e
            total += term
        return total

    # -- serialization ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "terms": [
                {
                    "coeff": format_rational(c),
                    "x": xdeg,
                    "jet": {str(k): e for k, e in enumerate(jet) if e},
                }
                for (xdeg, jet), c in self.items()
            ]
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "DiffPoly":
        out: Dict[Key, Fraction] = {}
        for t in data["terms"]:
            jet = {int(k): int(e) for k, e in t.get("jet", {}).items()}
            dense = [0] * (max(jet, default=-1) + 1)
            for k, e in jet.items():
                dense[k] = e
            key = (int(t.get("x", 0)), _trim(dense))
            if key in out:
                raise ValueError(f"duplicate term key {key} in DiffPoly JSON")
            out[key] = parse_rational(t["coeff"])
        return cls(out)

    def to_plain(self) -> str:
        return _render(self, _plain_factor, _plain_coeff, " ")

    def to_latex(self) -> str:
        return _render(self, _latex_factor, _latex_coeff, " ")

    def __str__(self) -> str:
        return self.to_plain()

    def __repr__(self) -> str:
        return f"DiffPoly({self.to_plain()!r})"


def _coerce_or_none(value):
    if isinstance(value, DiffPoly):
        return value
    if isinstance(value, (int, Fraction)) and not isinstance(value, bool):
        return DiffPoly._raw({(0, ()): Fraction(value)} if value else {})
    return None


def _plain_var(k: int) -> str:
    return "V" + "'" * k if k <= 3 else f"V^({k})"


def _plain_factor(k: int | None, e: int) -> str:
    if k is None:
        return "x" if e == 1 else f"x^{e}"
    name = _plain_var(k)
    if e == 1:
        return name
    return f"{name}^{e}" if k <= 3 else f"({name})^{e}"


def _plain_coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _latex_factor(k: int | None, e: int) -> str:
    if k is None:
        name = "x"
    elif k <= 3:
        name = "V" + "'" * k
    else:
        name = f"V^{{({k})}}"
    if e == 1:
        return name
    return f"{name}^{{{e}}}" if (k is None or k <= 3) else f"\\left({name}\\right)^{{{e}}}"


def _latex_coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"\\frac{{{c.numerator}}}{{{c.denominator}}}"


def _render(p: DiffPoly, factor, coeff_fmt, sep) -> str:
    if not p:
        return "0"
    pieces = []
    for i, ((xdeg, jet), c) in enumerate(p.items()):
        factors = []
        if xdeg:
            factors.append(factor(None, xdeg))
        factors += [factor(k, e) for k, e in enumerate(jet) if e]
        mag = abs(c)
        body = sep.join(factors)
        if not body:
            body = coeff_fmt(mag)
        elif mag != 1:
            body = coeff_fmt(mag) + sep + body
        if i == 0:
            pieces.append(("-" if c < 0 else "") + body)
        else:
            pieces.append((" - " if c < 0 else " + ") + body)
    return "".join(pieces)


ZERO = DiffPoly()
ONE = DiffPoly({(0, ()): Fraction(1)})
X = DiffPoly({(1, ()): Fraction(1)})


def V(order: int = 0) -> DiffPoly:
    """The jet variable ``V^(order)``."""
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    return DiffPoly({(0, (0,) * order + (1,)): Fraction(1)})


def const(c) -> DiffPoly:
    return DiffPoly.coerce(c)


def add(p: DiffPoly, q: DiffPoly) -> DiffPoly:
    return p + q


def scale(p: DiffPoly, c) -> DiffPoly:
    return p.scale(c)


def mul(p: DiffPoly, q: DiffPoly) -> DiffPoly:
    return p * q


def total_derivative(p: DiffPoly) -> DiffPoly:
    """Total x-derivative: Leibniz rule with ``x -> 1`` and ``V^(k) -> V^(k+1)``."""
    out: Dict[Key, Fraction] = {}
    for (x, jet), c in p._terms.items():
        if x:
            key = (x - 1, jet)
            out[key] = out.get(key, 0) + c * x
        for k, e in enumerate(jet):
            if not e:
                continue
            new = list(jet)
            new[k] -= 1
            if k + 1 < len(new):
                new[k + 1] += 1
            else:
                new.append(1)
            key = (x, _trim(new))
            out[key] = out.get(key, 0) + c * e
    return DiffPoly._raw({k: c for k, c in out.items() if c})


def variational_derivative(p: DiffPoly) -> DiffPoly:
    """Euler operator ``sum_k (-D)^k dp/dV^(k)``; zero exactly on total derivatives."""
    result = ZERO
    for k in range(p.max_order() + 1):
        term = p.partial(k)
        for _ in range(k):
            term = -total_derivative(term)
        result = result + term
    return result


def _integrate_in(p: DiffPoly, order: int) -> DiffPoly:
    """Antiderivative of ``p`` with respect to the single variable ``V^(order)``."""
    out: Dict[Key, Fraction] = {}
    for (x, jet), c in p._terms.items():
        new = list(jet) + [0] * max(0, order + 1 - len(jet))
        new[order] += 1
        out[(x, _trim(new))] = c / new[order]
    return DiffPoly._raw(out)


def antiderivative(p: DiffPoly) -> DiffPoly:
    """Return ``q`` with ``D(q) == p`` and no constant term.

    Strips the highest-order jet variable one level at a time: an exact ``p``
    of top order ``K`` is linear in ``V^(K)`` and its coefficient is the
    ``V^(K-1)``-partial of the antiderivative.  Anything left at order zero
    must be a pure polynomial in ``x``.

    Raises :class:`NotExact` when ``p`` is not a total derivative.
    """
    residue = p
    result = ZERO
    while residue:
        top = residue.max_order()
        if top < 0:
            result = result + DiffPoly._raw(
                {(x + 1, ()): c / (x + 1) for (x, _), c in residue._terms.items()}
            )
            break
        if top == 0:
            raise NotExact(f"{p} is not exact: residue {residue} depends on V without derivatives")
        lead: Dict[Key, Fraction] = {}
        for (x, jet), c in residue._terms.items():
            if len(jet) - 1 != top:
                continue
            if jet[top] > 1:
                raise NotExact(f"{p} is not exact: nonlinear in V^({top})")
            lead[(x, _trim(jet[:top]))] = c
        step = _integrate_in(DiffPoly._raw(lead), top - 1)
        result = result + step
        residue = residue - total_derivative(step)
    return result


def is_exact(p: DiffPoly) -> bool:
    return variational_derivative(p).is_zero()
