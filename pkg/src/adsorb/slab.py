"""Minimal slab builder for fcc, bcc and L1_2 (A3B) bulks.

Slabs are cut by enumerating bulk sites in a box around the origin,
binning them by height along the surface normal, and folding each layer
into an in-plane cell spanned by two bulk translations.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import elements
from .errors import UnsupportedInputError
from .structures import TAG_FIXED, TAG_SURFACE, Lattice, SlabMetadata, Structure, reduce_miller

SUPPORTED_MILLER = ((1, 1, 1), (1, 0, 0), (1, 1, 0))
SUPPORTED_KINDS = ("fcc", "bcc", "L12")

_FCC_BASIS = ((0, 0, 0), (0, 0.5, 0.5), (0.5, 0, 0.5), (0.5, 0.5, 0))
_BCC_BASIS = ((0, 0, 0), (0.5, 0.5, 0.5))

# In-plane cell vectors in units of the cubic lattice constant.  Each pair
# is a bulk translation, right-handed with the Miller direction as normal.
_IN_PLANE = {
    ("fcc", (1, 1, 1)): ((0.5, -0.5, 0), (0.5, 0, -0.5)),
    ("fcc", (1, 0, 0)): ((0, 0.5, 0.5), (0, -0.5, 0.5)),
    ("fcc", (1, 1, 0)): ((-0.5, 0.5, 0), (0, 0, 1)),
    ("bcc", (1, 1, 1)): ((1, -1, 0), (1, 0, -1)),
    ("bcc", (1, 0, 0)): ((0, 1, 0), (0, 0, 1)),
    ("bcc", (1, 1, 0)): ((0, 0, 1), (0.5, -0.5, 0.5)),
    ("L12", (1, 1, 1)): ((1, -1, 0), (1, 0, -1)),
    ("L12", (1, 0, 0)): ((0, 1, 0), (0, 0, 1)),
    ("L12", (1, 1, 0)): ((-1, 1, 0), (0, 0, 1)),
}

# Shortest translation along each normal direction, used for the stacking period.
_TRANSLATIONS = {
    "fcc": ((0, 0.5, 0.5), (0.5, 0, 0.5), (0.5, 0.5, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)),
    "bcc": ((0.5, 0.5, 0.5), (1, 0, 0), (0, 1, 0), (0, 0, 1)),
    "L12": ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
}


@dataclass(frozen=True)
class BulkSpec:
    """Cubic bulk: ``species`` is (A,) for elemental, (A, B) for A3B L1_2."""

    kind: str
    a: float
    species: tuple

    def __post_init__(self):
        if self.kind not in SUPPORTED_KINDS:
            raise UnsupportedInputError(
                f"unsupported bulk type {self.kind!r}; supported: {', '.join(SUPPORTED_KINDS)}")
        species = tuple(self.species)
        want = 2 if self.kind == "L12" else 1
        if len(species) != want:
            raise UnsupportedInputError(f"{self.kind} bulk needs {want} species, got {species}")
        for s in species:
            elements.atomic_number(s)
        if not self.a > 0:
            raise UnsupportedInputError("lattice constant must be positive")
        object.__setattr__(self, "species", species)

    @property
    def formula(self):
        if self.kind == "L12":
            return f"{self.species[0]}3{self.species[1]}"
        return self.species[0]

    def basis(self):
        """Conventional-cell sites as (fractional position, symbol)."""
        if self.kind == "bcc":
            return [(np.array(p, float), self.species[0]) for p in _BCC_BASIS]
        if self.kind == "fcc":
            return [(np.array(p, float), self.species[0]) for p in _FCC_BASIS]
        a_sym, b_sym = self.species
        return [(np.array(_FCC_BASIS[0], float), b_sym)] + [
            (np.array(p, float), a_sym) for p in _FCC_BASIS[1:]]


def parse_formula(formula):
    """'CuPd3' -> Counter({'Pd': 3, 'Cu': 1})."""
    parts = re.findall(r"([A-Z][a-z]?)(\d*)", formula)
    if not parts or "".join(s + n for s, n in parts) != formula.strip():
        raise UnsupportedInputError(f"cannot parse formula {formula!r}")
    counts = Counter()
    for sym, num in parts:
        elements.atomic_number(sym)
        counts[sym] += int(num) if num else 1
    return counts


def reduced_composition(formula):
    counts = parse_formula(formula)
    g = 0
    for v in counts.values():
        g = math.gcd(g, v)
    return {k: v // g for k, v in sorted(counts.items())}


def default_bulk(formula, a=None):
    """BulkSpec for ``formula`` from the shipped defaults table.

    ``a`` overrides the tabulated lattice constant.
    """
    table = json.loads(resources.files("adsorb").joinpath("assets/bulks.json").read_text())
    comp = reduced_composition(formula)
    for entry in table["bulks"]:
        if reduced_composition(entry["formula"]) == comp:
            kind = entry["kind"]
            species = tuple(entry["species"])
            return BulkSpec(kind, float(a if a is not None else entry["a"]), species)
    if a is None:
        raise UnsupportedInputError(
            f"no default bulk for {formula!r}; pass a lattice constant and bulk kind "
            f"or supply a slab file")
    if len(comp) == 1:
        return BulkSpec("fcc", float(a), tuple(comp))
    if sorted(comp.values()) == [1, 3]:
        major = next(k for k, v in comp.items() if v == 3)
        minor = next(k for k, v in comp.items() if v == 1)
        return BulkSpec("L12", float(a), (major, minor))
    raise UnsupportedInputError(f"{formula!r} is neither elemental nor A3B")


def interlayer_spacing(kind, miller):
    """Analytic spacing between adjacent atomic layers."""
    h, k, l = miller
    d_hkl = 1.0 / math.sqrt(h * h + k * k + l * l)
    if kind in ("fcc", "L12"):
        # fcc reflections need all-odd or all-even indices
        all_odd = all(x % 2 for x in miller)
        return d_hkl if all_odd else d_hkl / 2
    return d_hkl if (h + k + l) % 2 == 0 else d_hkl / 2


def _frame(v1, normal):
    x = v1 / np.linalg.norm(v1)
    z = normal / np.linalg.norm(normal)
    y = np.cross(z, x)
    return np.vstack([x, y, z])


def _stacking_period(kind, miller, d):
    n = np.array(miller, float) / np.linalg.norm(miller)
    heights = [abs(float(np.dot(t, n))) / d for t in _TRANSLATIONS[kind]]
    steps = [round(h) for h in heights if h > 1e-9]
    period = 0
    for s in steps:
        period = math.gcd(period, s)
    return max(period, 1)


def build_slab(bulk: BulkSpec, meta: SlabMetadata, supercell=(1, 1)) -> Structure:
    miller = reduce_miller(meta.miller)
    key = (bulk.kind, miller)
    if key not in _IN_PLANE:
        raise UnsupportedInputError(
            f"unsupported Miller index {miller} for {bulk.kind}; supported: "
            + ", ".join(str(m) for m in SUPPORTED_MILLER))
    nx, ny = (int(x) for x in supercell)
    if nx < 1 or ny < 1:
        raise UnsupportedInputError("supercell multipliers must be positive")
    a = bulk.a
    layers = int(meta.layers)
    normal = np.array(miller, float)
    v1, v2 = (np.array(v, float) * a for v in _IN_PLANE[key])
    rot = _frame(v1, normal)
    d_units = interlayer_spacing(bulk.kind, miller)
    d = d_units * a
    period = _stacking_period(bulk.kind, miller, d_units)

    # Termination: the top layer index (mod the stacking period) is set by the shift.
    top = int(round(meta.shift * period)) % period
    m_top = top + period * (layers // period + 1)
    m_bot = m_top - layers + 1

    cell2 = np.array([(rot @ v1)[:2], (rot @ v2)[:2]])
    inv2 = np.linalg.inv(cell2)
    reach = int(math.ceil((m_top + 2) * d / a * math.sqrt(3))) + 2
    rng = np.arange(-reach, reach + 1)
    grid = np.array(np.meshgrid(rng, rng, rng, indexing="ij")).reshape(3, -1).T
    per_layer = {}
    for frac, sym in bulk.basis():
        pts = (grid + frac) * a
        local = pts @ rot.T
        m = np.round(local[:, 2] / d).astype(int)
        keep = (m >= m_bot) & (m <= m_top)
        for p, mi in zip(local[keep], m[keep]):
            f = p[:2] @ inv2
            f = f - np.floor(f + 1e-9)
            f[np.abs(f) < 1e-9] = 0.0
            f[np.abs(f - 1.0) < 1e-9] = 0.0
            key2 = (round(f[0], 6) % 1.0, round(f[1], 6) % 1.0)
            per_layer.setdefault(mi, {}).setdefault(key2, (f.copy(), sym))

    rows = [(rot @ v1) * nx, (rot @ v2) * ny,
            np.array([0.0, 0.0, (layers - 1) * d + meta.vacuum])]
    rows[0][2] = rows[1][2] = 0.0
    lattice = Lattice(np.array(rows), (True, True, False))
    n_fixed_layers = (layers + 1) // 2
    symbols, positions, tags = [], [], []
    for li, m in enumerate(range(m_bot, m_top + 1)):
        sites = [v for _, v in sorted(per_layer[m].items(), key=lambda kv: (kv[0][1], kv[0][0]))]
        z = li * d
        tag = TAG_FIXED if li < n_fixed_layers else TAG_SURFACE
        for j in range(ny):
            for i in range(nx):
                for f, sym in sites:
                    xy = (f + (i, j)) @ cell2
                    symbols.append(sym)
                    positions.append((xy[0], xy[1], z))
                    tags.append(tag)
    info = meta.as_info()
    info["supercell"] = f"{nx} {ny}"
    s = Structure(lattice, symbols, positions, tags, info)
    s.check_overlaps()
    return s
