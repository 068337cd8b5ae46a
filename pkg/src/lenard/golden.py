"""Golden files and the persistent hierarchy cache.

Golden files under ``data/golden`` lock ``U_j``, ``F_j`` (``j <= 5``) and the
order 3 and 5 symmetry operators.  They change only through
:func:`write_golden` (``lenard golden --regenerate``).

``LENARD_CACHE_DIR`` names a directory for a persistent hierarchy cache used
by the command line; entries are re-validated with ``F_j = D U_j`` on load.
"""

from __future__ import annotations

import json
import os
from importlib import resources
from pathlib import Path
from typing import Dict, List

from .hierarchy import ConstraintSpec, HierarchyCache, generic_constants, lenard_F, lenard_U
from .ring import DiffPoly, total_derivative
from .symmetry import build_Q_recurrence

__all__ = [
    "GOLDEN_LEVEL",
    "SYMMETRY_SPECS",
    "golden_dir",
    "generate_golden",
    "write_golden",
    "load_golden",
    "compare_golden",
    "cache_dir",
    "load_cache",
    "save_cache",
    "dumps",
]

GOLDEN_LEVEL = 5

# order 3 and 5, commuting and light-cone cases
SYMMETRY_SPECS = {
    "n3_kappa0": ConstraintSpec(1, 0, generic_constants(1)),
    "n3_kappa-1": ConstraintSpec(1, -1, (0,)),
    "n5_kappa0": ConstraintSpec(2, 0, generic_constants(2)),
    "n5_kappa-1": ConstraintSpec(2, -1, (0, 0)),
}


def dumps(data) -> str:
    """Deterministic JSON text."""
    return json.dumps(data, indent=1, sort_keys=True) + "\n"


def golden_dir() -> Path:
    return Path(str(resources.files("lenard").joinpath("data/golden")))


def generate_golden() -> Dict[str, dict]:
    cache = HierarchyCache()
    hierarchy = {
        "max_level": GOLDEN_LEVEL,
        "U": {str(j): lenard_U(j, cache).to_json() for j in range(-1, GOLDEN_LEVEL + 1)},
        "F": {str(j): lenard_F(j, cache).to_json() for j in range(GOLDEN_LEVEL + 1)},
    }
    symmetry = {name: build_Q_recurrence(spec).to_json() for name, spec in SYMMETRY_SPECS.items()}
    return {"hierarchy.json": hierarchy, "symmetry.json": symmetry}


def write_golden(directory: str | Path | None = None) -> List[Path]:
    directory = Path(directory) if directory else golden_dir()
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, data in generate_golden().items():
        path = directory / name
        path.write_text(dumps(data))
        written.append(path)
    return written


def load_golden(name: str, directory: str | Path | None = None) -> dict:
    directory = Path(directory) if directory else golden_dir()
    return json.loads((directory / name).read_text())


def compare_golden(directory: str | Path | None = None) -> List[str]:
    """Names of golden files whose content differs from a fresh computation."""
    fresh = generate_golden()
    bad = []
    for name, data in fresh.items():
        try:
            stored = load_golden(name, directory)
        except FileNotFoundError:
            bad.append(name)
            continue
        if stored != json.loads(dumps(data)):
            bad.append(name)
    return bad


def cache_dir() -> Path | None:
    value = os.environ.get("LENARD_CACHE_DIR")
    return Path(value) if value else None


def load_cache(cache: HierarchyCache, directory: str | Path | None = None) -> int:
    """Seed ``cache`` from ``hierarchy.json`` in the cache directory.

    Returns the number of flow levels accepted.  Loading stops at the first
    level whose ``F_j`` is not ``D U_j`` or does not continue the cache.
    """
    directory = Path(directory) if directory else cache_dir()
    if directory is None:
        return 0
    path = directory / "hierarchy.json"
    if not path.exists():
        return 0
    try:
        data = json.loads(path.read_text())
        U = {int(k): DiffPoly.from_json(v) for k, v in data["U"].items()}
        F = {int(k): DiffPoly.from_json(v) for k, v in data["F"].items()}
    except (ValueError, KeyError, TypeError):
        return 0
    accepted = 0
    j = 0
    while j in U and j in F and F[j] == total_derivative(U[j]):
        if not cache.seed(j, U[j], F[j]):
            break
        accepted += 1
        j += 1
    return accepted


def save_cache(cache: HierarchyCache, directory: str | Path | None = None) -> Path | None:
    directory = Path(directory) if directory else cache_dir()
    if directory is None:
        return None
    directory.mkdir(parents=True, exist_ok=True)
    F = cache.F_list
    top = len(F) - 1
    # densities are cheap next to the flows; fill them so every level is saved
    cache.U(top)
    U = cache.U_list
    data = {
        "max_level": top,
        "U": {str(j): U[j + 1].to_json() for j in range(-1, top + 1)},
        "F": {str(j): F[j].to_json() for j in range(top + 1)},
    }
    path = directory / "hierarchy.json"
    path.write_text(dumps(data))
    return path
