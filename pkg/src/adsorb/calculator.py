"""Energy and force evaluation.

A calculator is any callable ``calc(structure) -> EnergyForces`` with a
``key`` attribute identifying it for caching.  The in-process Lennard-Jones
calculator lives here; out-of-process calculators are in ``adsorb.wire``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from types import MappingProxyType

import numpy as np

from .errors import CalculatorError, NonFiniteError, ParameterError, RelaxationError
from .structures import TAG_ADSORBATE, AdsorbateSpec, Lattice, Structure, lattice_sum_shifts

TWO_SIXTH = 2.0 ** (1.0 / 6.0)


@dataclass(frozen=True, eq=False)
class CalcParams:
    """Per-element LJ parameters with Lorentz-Berthelot mixing."""

    epsilon: dict
    sigma: dict
    cutoff: float = 8.0
    shift: bool = True

    def __post_init__(self):
        eps = dict(self.epsilon)
        sig = dict(self.sigma)
        if set(eps) != set(sig):
            raise ParameterError("epsilon and sigma must cover the same elements")
        for el in eps:
            if not (eps[el] > 0 and sig[el] > 0):
                raise ParameterError(f"epsilon and sigma must be positive for {el}")
        if not self.cutoff > 0:
            raise ParameterError("cutoff must be positive")
        object.__setattr__(self, "epsilon", MappingProxyType(eps))
        object.__setattr__(self, "sigma", MappingProxyType(sig))

    def __reduce__(self):
        return (CalcParams, (dict(self.epsilon), dict(self.sigma), self.cutoff, self.shift))

    def mixed(self, a, b):
        return math.sqrt(self.epsilon[a] * self.epsilon[b]), 0.5 * (self.sigma[a] + self.sigma[b])

    def check(self, symbols):
        """Raise ParameterError for missing elements or a cutoff below 2 max sigma."""
        present = sorted(set(symbols))
        for el in present:
            if el not in self.epsilon:
                raise ParameterError(f"no LJ parameters for element {el}")
        smax = max(self.sigma[el] for el in present)
        if self.cutoff <= 2 * smax:
            raise ParameterError(
                f"cutoff {self.cutoff} A must exceed 2 x max sigma ({2 * smax:.3f} A) "
                f"for elements {', '.join(present)}")

    def with_cutoff(self, cutoff, shift=None):
        return CalcParams(dict(self.epsilon), dict(self.sigma), cutoff,
                          self.shift if shift is None else shift)

    def digest(self):
        blob = json.dumps([sorted(self.epsilon.items()), sorted(self.sigma.items()),
                           self.cutoff, self.shift])
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def default_params(cutoff=8.0, shift=True):
    data = json.loads(resources.files("adsorb").joinpath("assets/lj_uff.json").read_text())
    conv = data["kcal_mol_to_eV"]
    eps = {el: v["D"] * conv for el, v in data["elements"].items()}
    sig = {el: v["x"] / TWO_SIXTH for el, v in data["elements"].items()}
    return CalcParams(eps, sig, cutoff, shift)


@dataclass(frozen=True, eq=False)
class EnergyForces:
    energy: float
    forces: np.ndarray

    def __post_init__(self):
        f = np.array(self.forces, dtype=float)
        if f.ndim != 2 or f.shape[1] != 3:
            raise CalculatorError(f"forces must have shape (N, 3), got {f.shape}")
        f.setflags(write=False)
        object.__setattr__(self, "energy", float(self.energy))
        object.__setattr__(self, "forces", f)


def _wrapped_displacements(lattice: Lattice, pos):
    """d[i, j] = r_j - r_i wrapped into the home cell, plus the raw displacement."""
    raw = pos[None, :, :] - pos[:, None, :]
    pbc = np.array(lattice.pbc)
    if not pbc.any():
        return raw, raw
    frac = raw @ np.linalg.inv(lattice.cell)
    frac[..., pbc] -= np.round(frac[..., pbc])
    return frac @ lattice.cell, raw


def _lj_terms(s: Structure, p: CalcParams, exclude=None):
    """Energy and forces of the LJ lattice sum.

    ``exclude`` is an optional boolean (N, N) mask of pairs whose direct
    (unwrapped) image is left out of the sum.
    """
    p.check(s.symbols)
    n = len(s)
    pos = s.positions
    eps_el = np.array([p.epsilon[x] for x in s.symbols])
    sig_el = np.array([p.sigma[x] for x in s.symbols])
    eps = np.sqrt(eps_el[:, None] * eps_el[None, :])
    sig = 0.5 * (sig_el[:, None] + sig_el[None, :])
    rc = p.cutoff
    vshift = 4 * eps * ((sig / rc) ** 12 - (sig / rc) ** 6) if p.shift else np.zeros_like(eps)

    dw, raw = _wrapped_displacements(s.lattice, pos)
    shifts = lattice_sum_shifts(s.lattice, rc)
    energy = 0.0
    forces = np.zeros((n, 3))
    eye = np.eye(n, dtype=bool)
    for L in shifts:
        d = dw + L
        r2 = np.einsum("ijk,ijk->ij", d, d)
        mask = r2 < rc * rc
        if not L.any():
            mask &= ~eye
        if exclude is not None:
            direct = np.all(np.abs(d - raw) < 1e-6, axis=-1)
            mask &= ~(exclude & direct)
        if not mask.any():
            continue
        r2m = np.where(mask, r2, 1.0)
        sr6 = (sig * sig / r2m) ** 3
        sr12 = sr6 * sr6
        v = np.where(mask, 4 * eps * (sr12 - sr6) - vshift, 0.0)
        # dV/dr / r
        dvdr_r = np.where(mask, -24 * eps * (2 * sr12 - sr6) / r2m, 0.0)
        energy += 0.5 * v.sum()
        forces += np.einsum("ij,ijk->ik", dvdr_r, d)
    return energy, forces


def lj_energy_forces(s: Structure, p: CalcParams) -> EnergyForces:
    """Pairwise LJ over all atom pairs and periodic images within the cutoff."""
    e, f = _lj_terms(s, p)
    if not (np.isfinite(e) and np.all(np.isfinite(f))):
        raise NonFiniteError("non-finite LJ energy or forces")
    return EnergyForces(e, f)


def restraint_pairs(ads: AdsorbateSpec):
    """1-2 and 1-3 pairs of the adsorbate with their reference distances."""
    bonds = ads.bonds()
    nbrs = {i: set() for i in range(len(ads))}
    for i, j, _ in bonds:
        nbrs[i].add(j)
        nbrs[j].add(i)
    pairs = {(i, j) for i, j, _ in bonds}
    for c in range(len(ads)):
        for a in nbrs[c]:
            for b in nbrs[c]:
                if a < b:
                    pairs.add((a, b))
    out = []
    for i, j in sorted(pairs):
        out.append((i, j, float(np.linalg.norm(ads.positions[i] - ads.positions[j]))))
    return out


class LJCalculator:
    """In-process LJ calculator.

    With ``adsorbate`` set, tag-2 atoms are taken to be that molecule (in
    registry order): their mutual direct-image LJ terms are dropped and
    harmonic springs hold 1-2 and 1-3 distances at the reference geometry.
    """

    def __init__(self, params: CalcParams | None = None, adsorbate: AdsorbateSpec | None = None,
                 spring_k: float = 20.0):
        self.params = params or default_params()
        self.adsorbate = adsorbate
        self.spring_k = float(spring_k)
        self._pairs = restraint_pairs(adsorbate) if adsorbate is not None else []
        parts = [self.params.digest()]
        if adsorbate is not None:
            geo = hashlib.sha256(np.ascontiguousarray(adsorbate.positions).tobytes()).hexdigest()[:8]
            parts.append(f"{adsorbate.key}:{geo}:k={self.spring_k}")
        self.key = "lj:" + "/".join(parts)

    def __repr__(self):
        return f"LJCalculator(key={self.key!r})"

    def __call__(self, s: Structure) -> EnergyForces:
        if self.adsorbate is None:
            return lj_energy_forces(s, self.params)
        ads_idx = np.nonzero(s.tags == TAG_ADSORBATE)[0]
        if len(ads_idx) and len(ads_idx) != len(self.adsorbate):
            raise CalculatorError(
                f"structure has {len(ads_idx)} adsorbate atoms, calculator expects "
                f"{len(self.adsorbate)} ({self.adsorbate.key})")
        exclude = None
        if len(ads_idx):
            exclude = np.zeros((len(s), len(s)), dtype=bool)
            exclude[np.ix_(ads_idx, ads_idx)] = True
        e, f = _lj_terms(s, self.params, exclude)
        if len(ads_idx):
            pos = s.positions
            for a, b, r0 in self._pairs:
                i, j = ads_idx[a], ads_idx[b]
                d = pos[j] - pos[i]
                r = float(np.linalg.norm(d))
                e += 0.5 * self.spring_k * (r - r0) ** 2
                g = self.spring_k * (r - r0) / r * d
                f[i] += g
                f[j] -= g
        if not (np.isfinite(e) and np.all(np.isfinite(f))):
            raise NonFiniteError("non-finite energy or forces")
        return EnergyForces(e, f)


def _as_calc(calc_or_params):
    if isinstance(calc_or_params, CalcParams):
        return LJCalculator(calc_or_params)
    return calc_or_params


def numerical_force_check(s: Structure, calc, h=1e-5, n_atoms=None, seed=0) -> float:
    """Max |analytic - central-difference| force component over a random atom subset."""
    if not 1e-5 <= h <= 1e-3:
        raise ParameterError(f"finite-difference step h={h} outside [1e-5, 1e-3]")
    calc = _as_calc(calc)
    analytic = calc(s).forces
    rng = np.random.default_rng(seed)
    n = len(s)
    k = n if n_atoms is None else min(n, n_atoms)
    atoms = np.sort(rng.choice(n, size=k, replace=False))
    worst = 0.0
    base = np.array(s.positions)
    for i in atoms:
        for c in range(3):
            plus = base.copy()
            minus = base.copy()
            plus[i, c] += h
            minus[i, c] -= h
            ep = calc(s.replace(positions=plus)).energy
            em = calc(s.replace(positions=minus)).energy
            fd = -(ep - em) / (2 * h)
            worst = max(worst, abs(fd - analytic[i, c]))
    return worst


_REF_CACHE: dict = {}


def gas_box(ads: AdsorbateSpec, box=20.0) -> Structure:
    lat = Lattice.cubic(box)
    return Structure(lat, ads.symbols, ads.positions + box / 2, [TAG_ADSORBATE] * len(ads),
                     {"adsorbate": ads.key})


def reference_energies(slab: Structure, ads: AdsorbateSpec, calc, fire=None):
    """(E_slab, E_gas): relaxed bare slab and relaxed isolated adsorbate.

    Results are cached per (slab, adsorbate, calculator, optimizer) key.
    """
    from .relax import FireParams, relax_structure

    fire = fire or FireParams()
    key = (slab.fingerprint(), ads.key,
           hashlib.sha256(np.ascontiguousarray(ads.positions).tobytes()).hexdigest(),
           getattr(calc, "key", repr(calc)), fire)
    if key in _REF_CACHE:
        return _REF_CACHE[key]
    bare = slab.select(slab.indices_with_tag(0, 1))
    res_slab = relax_structure(bare, calc, fire)
    if res_slab.status != "converged":
        raise RelaxationError(
            f"bare slab relaxation ended with status {res_slab.status} after "
            f"{res_slab.steps} steps (max force {res_slab.max_force:.3g} eV/A)")
    res_gas = relax_structure(gas_box(ads), calc, fire)
    if res_gas.status != "converged":
        raise RelaxationError(
            f"gas-phase {ads.key} relaxation ended with status {res_gas.status} after "
            f"{res_gas.steps} steps (max force {res_gas.max_force:.3g} eV/A)")
    out = (res_slab.energy, res_gas.energy)
    _REF_CACHE[key] = out
    return out


def clear_reference_cache():
    _REF_CACHE.clear()
