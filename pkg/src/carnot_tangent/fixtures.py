"""Bundled example structures and reproducible random perturbations."""

from __future__ import annotations

import json
import random
from importlib import resources
from pathlib import Path

from gmpy2 import mpq

from .ccfields import CCStructure, PolyVectorField, select_adapted_frame
from .errors import HormanderError
from .jets import Jet


def _field(n: int, terms: dict, order: int) -> PolyVectorField:
    return PolyVectorField.from_terms(n, terms, order=order)


def heisenberg(order: int = 4) -> CCStructure:
    """Symmetric Heisenberg fields ``d1 - x2/2 d3`` and ``d2 + x1/2 d3``."""
    z = (0, 0, 0)
    return CCStructure([
        _field(3, {0: {z: 1}, 2: {(0, 1, 0): "-1/2"}}, order),
        _field(3, {1: {z: 1}, 2: {(1, 0, 0): "1/2"}}, order),
    ])


def heisenberg_polarized(order: int = 4) -> CCStructure:
    """Heisenberg fields ``d1`` and ``d2 + x1 d3``."""
    z = (0, 0, 0)
    return CCStructure([
        _field(3, {0: {z: 1}}, order),
        _field(3, {1: {z: 1}, 2: {(1, 0, 0): 1}}, order),
    ])


def engel(order: int = 6) -> CCStructure:
    """Engel-type fields ``d1`` and ``d2 + x1 d3 + x1^2/2 d4``."""
    z = (0, 0, 0, 0)
    return CCStructure([
        _field(4, {0: {z: 1}}, order),
        _field(4, {1: {z: 1}, 2: {(1, 0, 0, 0): 1}, 3: {(2, 0, 0, 0): "1/2"}}, order),
    ])


def abelian(n: int = 2, order: int = 2) -> CCStructure:
    """Coordinate fields ``d1, ..., dn``."""
    return CCStructure([PolyVectorField.coordinate(k, n, order=order) for k in range(n)])


def perturbed(base: CCStructure, seed: int, terms_per_component: int = 2,
              degrees: tuple[int, int] = (2, 3)) -> CCStructure:
    """Add random rational terms of total degree in ``degrees`` to every component.

    Values at 0 are unchanged.  Draws that break the bracket-generating
    condition within the base step are rejected, so the result is
    deterministic in ``seed``.
    """
    rng = random.Random(seed)
    n = base.n
    step = select_adapted_frame(base, n).step
    while True:
        fields = []
        for f in base.fields:
            comps = []
            for c in f.components:
                terms = dict(c.terms)
                for _ in range(terms_per_component):
                    e = [0] * n
                    for _ in range(rng.randint(*degrees)):
                        e[rng.randrange(n)] += 1
                    num, den = rng.randint(-3, 3), rng.randint(1, 4)
                    terms[tuple(e)] = terms.get(tuple(e), 0) + mpq(num, den)
                comps.append(Jet(n, c.weights, c.order, terms))
            fields.append(PolyVectorField(comps))
        candidate = CCStructure(fields)
        try:
            if select_adapted_frame(candidate, step).step == step:
                return candidate
        except HormanderError:
            pass


def corpus(perturbations: int = 5) -> dict[str, CCStructure]:
    """Heisenberg, Engel and seeded perturbations of each."""
    out = {"heisenberg": heisenberg(), "engel": engel()}
    for k in range(perturbations):
        out[f"heisenberg_perturbed_{k}"] = perturbed(heisenberg(), seed=100 + k)
        out[f"engel_perturbed_{k}"] = perturbed(engel(), seed=200 + k)
    return out


BUNDLED = {
    "heisenberg": heisenberg,
    "heisenberg_polarized": heisenberg_polarized,
    "engel": engel,
    "abelian": abelian,
}


def load_structure(source: str | Path) -> CCStructure:
    """Read a structure from a JSON file, or a bundled fixture by name."""
    path = Path(source)
    if path.suffix == ".json" or path.exists():
        with open(path, encoding="utf-8") as fh:
            return CCStructure.from_json(json.load(fh))
    name = str(source)
    if name not in BUNDLED:
        raise FileNotFoundError(f"no file or bundled structure named {name!r}")
    data = resources.files(__package__).joinpath("data", f"{name}.json").read_text(encoding="utf-8")
    return CCStructure.from_json(json.loads(data))
