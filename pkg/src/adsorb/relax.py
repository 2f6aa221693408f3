"""FIRE relaxation, anomaly detection and adsorption-energy selection."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import elements
from .errors import AllFilteredError, NonFiniteError, ParameterError, StructureError
from .io import write_extxyz_frames
from .structures import TAG_ADSORBATE, TAG_FIXED, Structure, min_image_vectors

CONVERGED = "converged"
MAX_STEPS = "max-steps"
FAILED = "failed"


@dataclass(frozen=True)
class FireParams:
    dt_init: float = 0.1
    dt_max: float = 1.0
    n_min: int = 5
    f_inc: float = 1.1
    f_dec: float = 0.5
    alpha_start: float = 0.1
    f_alpha: float = 0.99
    fmax: float = 0.05
    max_steps: int = 300
    max_step_length: float = 0.2

    def __post_init__(self):
        for name in ("dt_init", "dt_max", "n_min", "f_inc", "f_dec", "alpha_start",
                     "f_alpha", "fmax", "max_steps", "max_step_length"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ParameterError(f"FIRE parameter {name} must be positive, got {v!r}")


@dataclass(frozen=True)
class AnomalyThresholds:
    bond_scale: float = 1.25
    max_stretch: float = 2.0
    desorption_distance: float = 3.5
    reconstruction_distance: float = 1.0


@dataclass(frozen=True)
class AnomalyFlags:
    dissociated: bool = False
    max_stretch: float = 1.0
    desorbed: bool = False
    min_surface_distance: float = math.inf
    reconstructed: bool = False
    max_surface_displacement: float = 0.0

    @property
    def any(self):
        return self.dissociated or self.desorbed or self.reconstructed

    def reasons(self):
        out = []
        if self.dissociated:
            out.append(f"dissociated (bond stretch x{self.max_stretch:.2f})")
        if self.desorbed:
            out.append(f"desorbed (min distance {self.min_surface_distance:.2f} A)")
        if self.reconstructed:
            out.append(f"reconstructed (surface atom moved {self.max_surface_displacement:.2f} A)")
        return out

    def as_dict(self):
        return {
            "dissociated": self.dissociated, "max_stretch": self.max_stretch,
            "desorbed": self.desorbed, "min_surface_distance": self.min_surface_distance,
            "reconstructed": self.reconstructed,
            "max_surface_displacement": self.max_surface_displacement,
        }


@dataclass(frozen=True, eq=False)
class RelaxationResult:
    final: Structure
    energy: float
    max_force: float
    steps: int
    status: str
    anomalies: AnomalyFlags = field(default_factory=AnomalyFlags)
    trajectory: list | None = None
    message: str = ""

    @property
    def valid(self):
        return self.status == CONVERGED and not self.anomalies.any

    def write_trajectory(self, path):
        if not self.trajectory:
            raise ValueError("no trajectory was recorded")
        frames = [self.final.replace(positions=p, info={**self.final.info, "energy": e})
                  for p, e in self.trajectory]
        with open(path, "w") as fh:
            fh.write(write_extxyz_frames(frames, always_tags=True))


@dataclass(frozen=True)
class AdsorptionRecord:
    delta_e: list
    delta_e_ads: float
    argmin: int
    n_valid: int
    n_anomalous: int
    ids: list
    reasons: dict


def _structure_of(c):
    return c.structure if hasattr(c, "structure") else c


def _max_force(f, free):
    if not free.any():
        return 0.0
    return float(np.sqrt((f[free] ** 2).sum(axis=1)).max())


def relax_structure(s: Structure, calc, p: FireParams | None = None, trajectory=False,
                    thresholds: AnomalyThresholds | None = None) -> RelaxationResult:
    """FIRE minimization with tag-0 atoms frozen."""
    p = p or FireParams()
    free = np.asarray(s.tags) != TAG_FIXED
    pos = np.array(s.positions)
    v = np.zeros_like(pos)
    dt = p.dt_init
    alpha = p.alpha_start
    n_pos = 0
    traj = [] if trajectory else None
    steps = 0
    current = s
    while True:
        try:
            ef = calc(current)
            energy = ef.energy
            f = np.array(ef.forces)
            if f.shape != pos.shape:
                raise NonFiniteError(f"forces shape {f.shape} for {len(pos)} atoms")
            if not (math.isfinite(energy) and np.all(np.isfinite(f))):
                raise NonFiniteError("non-finite energy or forces")
        except NonFiniteError as exc:
            result = RelaxationResult(current, math.nan, math.nan, steps, FAILED,
                                      trajectory=traj, message=f"step {steps}: {exc}")
            break
        f[~free] = 0.0
        if traj is not None:
            traj.append((np.array(pos), energy))
        fnow = _max_force(f, free)
        if fnow <= p.fmax:
            result = RelaxationResult(current, energy, fnow, steps, CONVERGED, trajectory=traj)
            break
        if steps >= p.max_steps:
            result = RelaxationResult(current, energy, fnow, steps, MAX_STEPS, trajectory=traj,
                                      message=f"max force {fnow:.3g} eV/A after {steps} steps")
            break
        vf = float(np.vdot(f, v))
        if vf > 0.0:
            fnorm = np.sqrt(np.vdot(f, f))
            vnorm = np.sqrt(np.vdot(v, v))
            v = (1.0 - alpha) * v + alpha * f / fnorm * vnorm
            if n_pos > p.n_min:
                dt = min(dt * p.f_inc, p.dt_max)
                alpha *= p.f_alpha
            n_pos += 1
        else:
            v[:] = 0.0
            alpha = p.alpha_start
            dt *= p.f_dec
            n_pos = 0
        v += dt * f
        dr = dt * v
        norm = float(np.sqrt(np.vdot(dr, dr)))
        if norm > p.max_step_length:
            dr *= p.max_step_length / norm
        pos[free] += dr[free]
        steps += 1
        current = s.replace(positions=pos)
    if thresholds is not None and result.status != FAILED:
        flags = detect_anomalies(s, result.final, thresholds)
        result = RelaxationResult(result.final, result.energy, result.max_force, result.steps,
                                  result.status, flags, result.trajectory, result.message)
    return result


def relax(c, calc, p: FireParams | None = None, trajectory=False,
          thresholds: AnomalyThresholds | None = None) -> RelaxationResult:
    """Relax a Configuration (or bare Structure) and attach anomaly flags."""
    return relax_structure(_structure_of(c), calc, p, trajectory,
                           thresholds or AnomalyThresholds())


def detect_anomalies(initial, final: Structure, thresholds: AnomalyThresholds | None = None
                     ) -> AnomalyFlags:
    t = thresholds or AnomalyThresholds()
    init = _structure_of(initial)
    if len(init) != len(final):
        raise StructureError(f"atom count changed during relaxation ({len(init)} -> {len(final)})")
    tags = np.asarray(init.tags)
    ads = np.nonzero(tags == TAG_ADSORBATE)[0]
    slab = np.nonzero(tags != TAG_ADSORBATE)[0]
    lat = init.lattice

    max_stretch = 1.0
    for i, j in itertools.combinations(ads, 2):
        r0 = np.linalg.norm(min_image_vectors(lat, init.positions[j] - init.positions[i]))
        limit = t.bond_scale * (elements.covalent_radius(init.symbols[i])
                                + elements.covalent_radius(init.symbols[j]))
        if r0 < limit:
            r1 = np.linalg.norm(min_image_vectors(lat, final.positions[j] - final.positions[i]))
            max_stretch = max(max_stretch, float(r1 / r0))

    min_dist = math.inf
    if len(ads) and len(slab):
        d = final.positions[ads][:, None, :] - final.positions[slab][None, :, :]
        min_dist = float(np.linalg.norm(min_image_vectors(lat, d), axis=-1).min())

    surf = np.nonzero(tags == 1)[0]
    max_disp = 0.0
    if len(surf):
        d = min_image_vectors(lat, final.positions[surf] - init.positions[surf])
        max_disp = float(np.linalg.norm(d, axis=-1).max())

    return AnomalyFlags(
        dissociated=max_stretch > t.max_stretch, max_stretch=max_stretch,
        desorbed=min_dist > t.desorption_distance, min_surface_distance=min_dist,
        reconstructed=max_disp > t.reconstruction_distance, max_surface_displacement=max_disp,
    )


def failure_reasons(r: RelaxationResult):
    out = []
    if r.status != CONVERGED:
        out.append(r.status + (f": {r.message}" if r.message else ""))
    out.extend(r.anomalies.reasons())
    return out


def adsorption_energy(results, e_slab: float, e_gas: float, ids=None) -> AdsorptionRecord:
    """Minimum of E_sys - E_slab - E_gas over converged, anomaly-free results."""
    results = list(results)
    ids = list(range(len(results))) if ids is None else list(ids)
    if len(ids) != len(results):
        raise ValueError("ids and results differ in length")
    delta = [r.energy - e_slab - e_gas for r in results]
    best, best_id = None, None
    reasons = {}
    n_valid = n_anom = 0
    for cid, r, de in sorted(zip(ids, results, delta), key=lambda x: x[0]):
        if r.anomalies.any:
            n_anom += 1
        if not r.valid:
            reasons[cid] = failure_reasons(r)
            continue
        n_valid += 1
        if best is None or de < best:
            best, best_id = de, cid
    if best is None:
        detail = "; ".join(f"{k}: {', '.join(v)}" for k, v in reasons.items())
        raise AllFilteredError(f"all {len(results)} configurations were filtered ({detail})",
                               reasons)
    return AdsorptionRecord(delta, best, best_id, n_valid, n_anom, ids, reasons)


def _relax_job(args):
    c, calc, p, thresholds, trajectory = args
    return relax(c, calc, p, trajectory, thresholds)


def relax_all(configs, calc, p: FireParams | None = None, parallelism=1,
              thresholds: AnomalyThresholds | None = None, trajectory=False):
    """Relax every configuration; results come back in input order."""
    jobs = [(c, calc, p, thresholds, trajectory) for c in configs]
    if parallelism <= 1 or len(jobs) <= 1:
        return [_relax_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_relax_job, jobs))
