"""Periodic structure data model and geometry helpers.

All types here are immutable after construction: numpy arrays are stored
read-only and every "modification" returns a new object.
"""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from . import elements
from .errors import StructureError

TAG_FIXED = 0
TAG_SURFACE = 1
TAG_ADSORBATE = 2
VALID_TAGS = (TAG_FIXED, TAG_SURFACE, TAG_ADSORBATE)

MIN_PAIR_DISTANCE = 0.1


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Lattice:
    """Cell vectors (rows, Angstrom) and periodicity flags."""

    cell: np.ndarray
    pbc: tuple = (True, True, True)

    def __post_init__(self):
        cell = np.array(self.cell, dtype=float).reshape(3, 3)
        pbc = tuple(bool(p) for p in self.pbc)
        if len(pbc) != 3:
            raise StructureError("pbc needs three flags")
        if not np.all(np.isfinite(cell)):
            raise StructureError("cell contains non-finite values")
        det = np.linalg.det(cell)
        if abs(det) <= 1e-9:
            raise StructureError(f"degenerate cell (det={det:.3e})")
        if det < 0:
            # swapping a and b keeps the same lattice and makes it right-handed
            cell = cell[[1, 0, 2]]
            pbc = (pbc[1], pbc[0], pbc[2])
        object.__setattr__(self, "cell", _frozen(cell))
        object.__setattr__(self, "pbc", pbc)

    @classmethod
    def cubic(cls, a, pbc=(True, True, True)):
        return cls(np.eye(3) * a, pbc)

    @property
    def volume(self):
        return float(np.linalg.det(self.cell))

    @property
    def reciprocal(self):
        """Rows b_i with a_i . b_j = delta_ij (no 2*pi)."""
        return np.linalg.inv(self.cell).T

    def to_fractional(self, cart):
        return np.asarray(cart, dtype=float) @ np.linalg.inv(self.cell)

    def to_cartesian(self, frac):
        return np.asarray(frac, dtype=float) @ self.cell

    def in_plane_area(self):
        return float(np.linalg.norm(np.cross(self.cell[0], self.cell[1])))

    def same_as(self, other, atol=0.0):
        return self.pbc == other.pbc and np.allclose(self.cell, other.cell, rtol=0, atol=atol)


@dataclass(frozen=True)
class Atom:
    symbol: str
    position: tuple
    tag: int = TAG_SURFACE

    @property
    def z(self):
        return elements.atomic_number(self.symbol)


@dataclass(frozen=True, eq=False)
class Structure:
    """Periodic atomic system: lattice + ordered atoms with role tags."""

    lattice: Lattice
    symbols: tuple
    positions: np.ndarray
    tags: np.ndarray
    info: Mapping = field(default_factory=dict)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        pos = np.array(self.positions, dtype=float)
        if len(symbols) == 0:
            raise StructureError("structure needs at least one atom")
        if pos.shape != (len(symbols), 3):
            raise StructureError(f"positions shape {pos.shape} does not match {len(symbols)} atoms")
        if not np.all(np.isfinite(pos)):
            raise StructureError("non-finite atomic position")
        for s in symbols:
            if not elements.is_symbol(s):
                raise StructureError(f"unknown element {s!r}")
        tags = np.array(self.tags, dtype=int).reshape(-1)
        if tags.shape != (len(symbols),):
            raise StructureError("tags length does not match atom count")
        if not np.isin(tags, VALID_TAGS).all():
            raise StructureError(f"tags must be in {VALID_TAGS}")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "tags", _frozen(tags, int))
        object.__setattr__(self, "info", MappingProxyType(dict(self.info)))

    def __reduce__(self):
        return (Structure, (self.lattice, self.symbols, np.array(self.positions),
                            np.array(self.tags), dict(self.info)))

    @classmethod
    def from_atoms(cls, lattice, atoms: Sequence[Atom], info=None):
        return cls(
            lattice,
            [a.symbol for a in atoms],
            [a.position for a in atoms],
            [a.tag for a in atoms],
            info or {},
        )

    def __len__(self):
        return len(self.symbols)

    @property
    def atoms(self):
        return [Atom(s, tuple(float(x) for x in p), int(t))
                for s, p, t in zip(self.symbols, self.positions, self.tags)]

    @property
    def numbers(self):
        return np.array([elements.atomic_number(s) for s in self.symbols], dtype=int)

    def indices_with_tag(self, *tags):
        return [i for i, t in enumerate(self.tags) if t in tags]

    def replace(self, positions=None, tags=None, info=None, lattice=None):
        return Structure(
            self.lattice if lattice is None else lattice,
            self.symbols,
            self.positions if positions is None else positions,
            self.tags if tags is None else tags,
            self.info if info is None else info,
        )

    def select(self, indices):
        idx = list(indices)
        return Structure(self.lattice, [self.symbols[i] for i in idx],
                         self.positions[idx], self.tags[idx], self.info)

    def extend(self, symbols, positions, tags, info=None):
        return Structure(
            self.lattice,
            self.symbols + tuple(symbols),
            np.vstack([self.positions, np.asarray(positions, dtype=float).reshape(-1, 3)]),
            np.concatenate([self.tags, np.asarray(tags, dtype=int)]),
            self.info if info is None else info,
        )

    def fingerprint(self):
        """Stable hash of lattice, symbols, positions and tags."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.lattice.cell).tobytes())
        h.update(repr(self.lattice.pbc).encode())
        h.update(",".join(self.symbols).encode())
        h.update(np.ascontiguousarray(self.positions).tobytes())
        h.update(np.ascontiguousarray(self.tags).tobytes())
        return h.hexdigest()

    def check_overlaps(self, min_distance=MIN_PAIR_DISTANCE):
        """Raise StructureError if any pair is closer than ``min_distance``."""
        n = len(self)
        if n < 2:
            return
        i, j = np.triu_indices(n, k=1)
        d = np.linalg.norm(min_image_vectors(self.lattice, self.positions[j] - self.positions[i]), axis=1)
        bad = np.nonzero(d < min_distance)[0]
        if bad.size:
            k = bad[0]
            raise StructureError(
                f"atoms {i[k]} and {j[k]} are {d[k]:.4f} A apart (< {min_distance} A)")


def neighbor_shifts(pbc):
    """Integer image shifts in {-1,0,1} along periodic directions."""
    ranges = [(-1, 0, 1) if p else (0,) for p in pbc]
    return np.array(list(itertools.product(*ranges)), dtype=float)


def min_image_vectors(lattice: Lattice, d):
    """Shortest periodic image of each displacement in ``d`` (shape (..., 3)).

    The displacement is first wrapped into the home cell along periodic
    directions, then the 27 (or 9 for slabs) neighboring images are searched.
    """
    d = np.asarray(d, dtype=float)
    shape = d.shape
    d = d.reshape(-1, 3)
    pbc = np.array(lattice.pbc)
    frac = lattice.to_fractional(d)
    frac[:, pbc] -= np.round(frac[:, pbc])
    base = lattice.to_cartesian(frac)
    shifts = neighbor_shifts(lattice.pbc) @ lattice.cell
    cand = base[:, None, :] + shifts[None, :, :]
    best = np.argmin(np.einsum("nki,nki->nk", cand, cand), axis=1)
    return cand[np.arange(len(d)), best].reshape(shape)


def min_image_distance(s: Structure, i: int, j: int) -> float:
    n = len(s)
    for k in (i, j):
        if not 0 <= k < n:
            raise IndexError(f"atom index {k} out of range for {n} atoms")
    if i == j:
        raise ValueError("min_image_distance needs two distinct atoms")
    return float(np.linalg.norm(min_image_vectors(s.lattice, s.positions[j] - s.positions[i])))


def lattice_sum_shifts(lattice: Lattice, cutoff: float):
    """All image shift vectors needed to find every pair within ``cutoff``
    once displacements have been wrapped into the home cell."""
    recip_norm = np.linalg.norm(lattice.reciprocal, axis=1)
    ranges = []
    for k in range(3):
        if lattice.pbc[k]:
            n = int(math.ceil(cutoff * recip_norm[k] + 0.5))
            ranges.append(range(-n, n + 1))
        else:
            ranges.append((0,))
    shifts = np.array(list(itertools.product(*ranges)), dtype=float)
    return shifts @ lattice.cell


def reduce_miller(miller):
    h, k, l = (int(x) for x in miller)
    if (h, k, l) == (0, 0, 0):
        raise StructureError("Miller index (0,0,0) is not a plane")
    g = math.gcd(math.gcd(abs(h), abs(k)), abs(l))
    return (h // g, k // g, l // g)


@dataclass(frozen=True)
class SlabMetadata:
    bulk_formula: str
    miller: tuple
    shift: float = 0.0
    top: bool = True
    layers: int = 3
    vacuum: float = 15.0
    mpid: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "miller", reduce_miller(self.miller))
        if not 0.0 <= self.shift < 1.0:
            raise StructureError(f"shift must be in [0, 1), got {self.shift}")
        if int(self.layers) < 1:
            raise StructureError("layers must be positive")
        if self.vacuum < 8.0:
            raise StructureError(f"vacuum must be >= 8 A, got {self.vacuum}")

    def as_info(self):
        info = {
            "bulk_formula": self.bulk_formula,
            "miller": "{} {} {}".format(*self.miller),
            "shift": self.shift,
            "top": self.top,
            "layers": self.layers,
            "vacuum": self.vacuum,
        }
        if self.mpid:
            info["mpid"] = self.mpid
        return info


@dataclass(frozen=True, eq=False)
class AdsorbateSpec:
    """Rigid reference geometry of an adsorbate, centroid at the origin."""

    key: str
    symbols: tuple
    positions: np.ndarray

    def __post_init__(self):
        symbols = tuple(self.symbols)
        pos = np.array(self.positions, dtype=float).reshape(len(symbols), 3)
        for s in symbols:
            if not elements.is_symbol(s):
                raise StructureError(f"unknown element {s!r} in adsorbate {self.key}")
        pos = pos - pos.mean(axis=0)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "positions", _frozen(pos))

    def __len__(self):
        return len(self.symbols)

    @property
    def atomic_numbers(self):
        return [elements.atomic_number(s) for s in self.symbols]

    @property
    def masses(self):
        return np.array([elements.mass(s) for s in self.symbols])

    def bonds(self, scale=1.25):
        """Pairs (i, j, r) closer than ``scale`` x the covalent-radius sum."""
        out = []
        for i, j in itertools.combinations(range(len(self)), 2):
            r = float(np.linalg.norm(self.positions[i] - self.positions[j]))
            limit = scale * (elements.covalent_radius(self.symbols[i])
                             + elements.covalent_radius(self.symbols[j]))
            if r < limit:
                out.append((i, j, r))
        return out
