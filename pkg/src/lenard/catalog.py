"""Built-in potentials and their family memberships.

Membership data lives in ``data/catalog.json``.  A name of the form
``expr:<sympy expression in x>`` yields an ad hoc entry without claims.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Mapping

import numpy as np
import sympy

from .errors import UnknownName
from .hierarchy import ConstraintSpec
from .numlab import eval_diffpoly, fit_constants, residual_poly
from .potential import ClosedFormPotential, parse_expression, x_symbol

__all__ = ["Claim", "CatalogEntry", "get", "names", "list_entries", "verify_claim", "CLAIM_TOL"]

CLAIM_TOL = 1e-10
# a fitted "holds: false" claim must stay this far from zero (RMS)
REJECT_FLOOR = 1e-3


@dataclass(frozen=True)
class Claim:
    families: tuple
    form: str
    level: int
    kappa: Fraction
    C: tuple | None
    holds: bool
    provenance: str
    fit: bool = False

    def spec(self) -> ConstraintSpec:
        C = self.C if self.C is not None else (0,) * self.level
        return ConstraintSpec(self.level, self.kappa, C)

    def to_json(self) -> dict:
        return {
            "families": list(self.families),
            "form": self.form,
            "level": self.level,
            "kappa": str(self.kappa),
            "C": None if self.C is None else [str(c) for c in self.C],
            "holds": self.holds,
            "fit": self.fit,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Claim":
        C = d.get("C")
        return cls(
            tuple(d["families"]),
            d.get("form", "hierarchy"),
            int(d["level"]),
            Fraction(d.get("kappa", "0")),
            None if C is None else tuple(Fraction(c) for c in C),
            bool(d["holds"]),
            d.get("provenance", "derived"),
            bool(d.get("fit", False)),
        )


@dataclass
class CatalogEntry:
    name: str
    potential: ClosedFormPotential
    claims: List[Claim] = field(default_factory=list)
    notes: str = ""
    sample_interval: tuple = (-5.0, 5.0)
    params: Dict[str, str] = field(default_factory=dict)
    source: str = ""

    def sample_points(self, n: int = 64) -> np.ndarray:
        lo, hi = self.sample_interval
        return np.linspace(lo, hi, n + 2)[1:-1]

    def to_json(self) -> dict:
        pot = self.potential
        return {
            "name": self.name,
            "expr": self.source,
            "params": dict(self.params),
            "V": sympy.sstr(pot.expr),
            "domain": [_num_json(v) for v in pot.domain],
            "singular": [_num_json(v) for v in pot.singular],
            "sample_interval": [_num_json(v) for v in self.sample_interval],
            "notes": self.notes,
            "claims": [c.to_json() for c in self.claims],
        }


def _num_json(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return int(v) if float(v).is_integer() else v


def _num(v) -> float:
    return float(v)


@lru_cache(maxsize=1)
def _manifest() -> Dict[str, dict]:
    text = resources.files("lenard").joinpath("data/catalog.json").read_text()
    return {e["name"]: e for e in json.loads(text)["entries"]}


def names() -> List[str]:
    return sorted(_manifest())


def list_entries() -> List["CatalogEntry"]:
    return [get(n) for n in names()]


def get(name: str, params: Mapping[str, object] | None = None) -> CatalogEntry:
    """Catalog entry by name; ``params`` override the stored parameter values."""
    if name.startswith("expr:"):
        source = name[len("expr:"):]
        expr = parse_expression(source, params)
        singular = _real_poles(expr)
        pot = ClosedFormPotential(name, expr, singular=singular)
        lo, hi = -5.0, 5.0
        if any(lo <= s <= hi for s in singular):
            lo = max(singular) + 0.5
            hi = lo + 4.5
        return CatalogEntry(name, pot, [], "user-defined", (lo, hi), {k: str(v) for k, v in (params or {}).items()}, source)
    data = _manifest().get(name)
    if data is None:
        raise UnknownName(f"no catalog entry {name!r}; known: {', '.join(names())}")
    merged = dict(data.get("params", {}))
    if params:
        unknown = set(params) - set(merged)
        if unknown:
            raise ValueError(f"{name} has no parameters {sorted(unknown)}")
        merged.update({k: str(v) for k, v in params.items()})
    expr = parse_expression(data["expr"], merged)
    domain = tuple(_num(v) for v in data["domain"])
    singular = [_num(v) for v in data.get("singular", [])]
    pot = ClosedFormPotential(name, expr, domain, singular)
    # claims were derived for the stored parameters only
    claims = [Claim.from_json(c) for c in data.get("claims", [])] if not params else []
    return CatalogEntry(
        name, pot, claims, data.get("notes", ""), tuple(_num(v) for v in data["sample_interval"]), merged, data["expr"]
    )


def _real_poles(expr) -> List[float]:
    _, den = sympy.fraction(sympy.together(expr))
    if den.is_number:
        return []
    try:
        roots = sympy.solveset(den, x_symbol, sympy.S.Reals)
    except Exception:
        return []
    if not isinstance(roots, sympy.FiniteSet):
        return []
    return sorted(float(r) for r in roots)


def verify_claim(entry: CatalogEntry, claim: Claim, npts: int = 64) -> tuple:
    """``(ok, residual)`` for one membership claim.

    Claims with explicit constants evaluate the residual directly (max norm);
    ``fit`` claims use the best least-squares constants (RMS).  A claim with
    ``holds = false`` is confirmed when the residual stays large.
    """
    xs = entry.sample_points(npts)
    if claim.fit or claim.C is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit_constants(claim.level, claim.kappa, entry.potential, xs, form=claim.form).residual_norm
    else:
        res = float(np.max(np.abs(eval_diffpoly(residual_poly(claim.spec(), claim.form), entry.potential, xs))))
    threshold = CLAIM_TOL if claim.holds else REJECT_FLOOR
    ok = res < threshold if claim.holds else res > threshold
    return ok, res
