"""Initial adsorbate-slab configurations.

Three strategies: ``heuristic`` (every symmetry site, random azimuth),
``random`` (area-uniform random sites, random 3-D rotation) and ``agent``
(sites matched to a Solution, oriented so the binding atoms face the
surface).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import NoMatchingSiteError, PlacementError
from .io import write_extxyz
from .sites import Site, _periodic_dist2, enumerate_heuristic_sites, sample_random_sites
from .structures import TAG_ADSORBATE, AdsorbateSpec, Structure, min_image_vectors

DEFAULT_HEIGHT = 2.0
DEFAULT_JITTER = 0.2
DEFAULT_RETRIES = 10
MIN_PLACEMENT_DISTANCE = 0.5
DEFAULT_N_VAR = 3
DEFAULT_N_MAX = 48
DEFAULT_MARGIN = 0.5

STREAM_HEURISTIC = 0
STREAM_RANDOM = 1
STREAM_AGENT = 2


@dataclass(frozen=True, eq=False)
class Configuration:
    structure: Structure
    strategy: str
    site: Site
    seed: int
    variant: int = 0
    binding: tuple = ()
    orientation: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def provenance(self):
        out = {"strategy": self.strategy, "site": self.site.as_dict(), "seed": self.seed,
               "variant": self.variant}
        if self.binding:
            out["binding"] = list(self.binding)
        if self.orientation:
            out["orientation"] = self.orientation
        out.update(self.extra)
        return out

    def to_extxyz(self):
        info = {
            "strategy": self.strategy, "site_kind": self.site.kind,
            "site_position": list(self.site.position),
            "site_parents": list(self.site.parents), "seed": self.seed, "variant": self.variant,
        }
        if self.binding:
            info["binding"] = list(self.binding)
        if self.orientation:
            info["orientation"] = self.orientation
        return write_extxyz(self.structure, always_tags=True, info=info)


def rng_for(seed, stream, index, variant=0):
    """Independent generator for one configuration: (seed, stream, index, variant)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, int(index), int(variant)]))


def rotation_z(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng):
    """Uniform random rotation via a uniform unit quaternion (Shoemake)."""
    u1, u2, u3 = rng.random(3)
    a, b = math.sqrt(1 - u1), math.sqrt(u1)
    w, x, y, z = (a * math.sin(2 * math.pi * u2), a * math.cos(2 * math.pi * u2),
                  b * math.sin(2 * math.pi * u3), b * math.cos(2 * math.pi * u3))
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotation_between(u, v):
    """Proper rotation taking unit vector u onto unit vector v."""
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    c = float(np.dot(u, v))
    if c > 1 - 1e-12:
        return np.eye(3)
    if c < -1 + 1e-12:
        # half turn about any axis perpendicular to u
        axis = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(u, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        return 2 * np.outer(axis, axis) - np.eye(3)
    w = np.cross(u, v)
    k = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    return np.eye(3) + k + k @ k / (1 + c)


def min_slab_distance(slab: Structure, ads_positions):
    d = np.asarray(ads_positions)[:, None, :] - slab.positions[None, :, :]
    return float(np.linalg.norm(min_image_vectors(slab.lattice, d), axis=-1).min())


def _assemble(slab, ads, positions):
    return slab.extend(ads.symbols, positions, [TAG_ADSORBATE] * len(ads),
                       info={**slab.info, "adsorbate": ads.key})


def _site_point(site, height):
    return np.array(site.position) + np.array([0.0, 0.0, height])


def place_heuristic(slab: Structure, ads: AdsorbateSpec, site: Site, binding_index=0, seed=0,
                    height=DEFAULT_HEIGHT, jitter=DEFAULT_JITTER, retries=DEFAULT_RETRIES,
                    rng=None) -> Configuration:
    """Random azimuth, binding atom at site + h z, small in-plane jitter."""
    if not 0 <= binding_index < len(ads):
        raise PlacementError(f"binding index {binding_index} out of range for {ads.key}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2 * math.pi)
    local = ads.positions @ rotation_z(theta).T
    base = local - local[binding_index] + _site_point(site, height)
    for _ in range(retries):
        dx, dy = rng.uniform(-jitter, jitter, size=2)
        pos = base + np.array([dx, dy, 0.0])
        if min_slab_distance(slab, pos) >= MIN_PLACEMENT_DISTANCE:
            return Configuration(_assemble(slab, ads, pos), "heuristic", site, seed,
                                 binding=(binding_index,))
    raise PlacementError(
        f"{ads.key} collides with the slab at {site.kind} site {site.position} "
        f"after {retries} attempts")


def place_random(slab: Structure, ads: AdsorbateSpec, site: Site, seed=0, height=DEFAULT_HEIGHT,
                 retries=DEFAULT_RETRIES, rng=None) -> Configuration:
    """Uniform random 3-D rotation with the center of mass at site + h z."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    masses = ads.masses
    for _ in range(retries):
        local = ads.positions @ random_rotation(rng).T
        com = masses @ local / masses.sum()
        pos = local - com + _site_point(site, height)
        if min_slab_distance(slab, pos) >= MIN_PLACEMENT_DISTANCE:
            return Configuration(_assemble(slab, ads, pos), "random", site, seed)
    raise PlacementError(
        f"{ads.key} collides with the slab at random site {site.position} "
        f"after {retries} attempts")


def _center(points, weights):
    w = np.asarray(weights, dtype=float)
    return w @ points / w.sum()


def agent_orientation(ads: AdsorbateSpec, binding, orientation, phi=0.0, weighting="uniform"):
    """Adsorbate coordinates rotated for agent placement, binding center at the origin."""
    binding = list(binding)
    if not binding:
        raise PlacementError("agent placement needs at least one binding atom")
    if len(set(binding)) != len(binding) or not all(0 <= b < len(ads) for b in binding):
        raise PlacementError(f"invalid binding indices {binding} for {ads.key}")
    if orientation == "side-on" and len(binding) < 2:
        raise PlacementError("contract violation: side-on placement needs >= 2 binding atoms")
    if orientation not in ("end-on", "side-on"):
        raise PlacementError(f"unknown orientation {orientation!r}")
    pos = np.array(ads.positions)
    weights = ads.masses[binding] if weighting == "mass" else np.ones(len(binding))
    bc = _center(pos[binding], weights)
    rest = [i for i in range(len(ads)) if i not in binding]
    u = pos[rest].mean(axis=0) - bc if rest else None
    local = pos - bc

    if orientation == "end-on":
        rot = np.eye(3)
        if u is not None and np.linalg.norm(u) > 1e-9:
            rot = rotation_between(u, np.array([0.0, 0.0, 1.0]))
        return local @ (rotation_z(phi) @ rot).T

    # side-on: binding atoms in a plane parallel to the surface, the rest above
    bpos = local[binding]
    if len(binding) == 2:
        e1 = bpos[1] - bpos[0]
        e1 /= np.linalg.norm(e1)
        e3 = None
        if u is not None:
            e3 = u - np.dot(u, e1) * e1
        if e3 is None or np.linalg.norm(e3) < 1e-9:
            e3 = np.cross(e1, [0.0, 0.0, 1.0])
            if np.linalg.norm(e3) < 1e-6:
                e3 = np.cross(e1, [0.0, 1.0, 0.0])
        e3 /= np.linalg.norm(e3)
    else:
        _, sv, vt = np.linalg.svd(bpos - bpos.mean(axis=0))
        if sv[1] < 1e-6:
            # collinear binding atoms: treat like a pair along their line
            return agent_orientation(ads, [binding[0], binding[-1]], "side-on", phi, weighting)
        e3 = vt[2]
        if u is not None and np.dot(u, e3) < 0:
            e3 = -e3
        e1 = bpos[0] - np.dot(bpos[0], e3) * e3
        if np.linalg.norm(e1) < 1e-9:
            e1 = vt[0]
        e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    frame = np.column_stack([e1, e2, e3])
    t1 = np.array([math.cos(phi), math.sin(phi), 0.0])
    t3 = np.array([0.0, 0.0, 1.0])
    target = np.column_stack([t1, np.cross(t3, t1), t3])
    return local @ (target @ frame.T).T


def azimuth_redundant(local, tol=1e-6):
    """True when every atom lies on the z axis, so azimuthal variants coincide."""
    return bool(np.all(np.linalg.norm(np.asarray(local)[:, :2], axis=1) < tol))


def place_agent(slab: Structure, ads: AdsorbateSpec, site: Site, binding, orientation,
                variant=0, n_var=DEFAULT_N_VAR, height=DEFAULT_HEIGHT, seed=0,
                weighting="uniform") -> Configuration:
    """Binding-atom center at site + h z, oriented per the Solution."""
    phi = variant * 2 * math.pi / n_var
    local = agent_orientation(ads, binding, orientation, phi, weighting)
    pos = local + _site_point(site, height)
    dmin = min_slab_distance(slab, pos)
    if dmin < MIN_PLACEMENT_DISTANCE:
        raise PlacementError(
            f"{ads.key} {orientation} at {site.kind} site {site.position} (variant {variant}) "
            f"is {dmin:.2f} A from the slab")
    return Configuration(_assemble(slab, ads, pos), "agent", site, seed, variant,
                         tuple(int(b) for b in binding), orientation)


def match_sites(sites, solution, margin=DEFAULT_MARGIN, cell=None):
    """Sites matching the Solution's site type and surface-element multiset.

    Falls back to a kind-only match when no site has the requested
    elements.  Sites of other kinds within ``margin`` (in-plane) of a match
    are admitted as well.
    """
    want = Counter(solution.surface_binding_atoms)
    kind = solution.site_type
    matched = [s for s in sites if s.kind == kind and Counter(s.parent_elements) == want]
    if not matched:
        matched = [s for s in sites if s.kind == kind]
    if not matched:
        raise NoMatchingSiteError(
            f"no {kind} sites on this surface (available: "
            f"{', '.join(sorted({s.kind for s in sites})) or 'none'})")
    if margin > 0:
        ref = np.array([s.position[:2] for s in matched])
        chosen = {id(s) for s in matched}
        out = []
        for s in sites:
            if id(s) in chosen:
                out.append(s)
                continue
            p = np.array([s.position[:2]])
            d = _periodic_dist2(p, ref, cell) if cell is not None else np.linalg.norm(ref - p, axis=1)
            if np.min(d) <= margin:
                out.append(s)
        matched = out
    return matched


def generate_configurations(slab: Structure, ads: AdsorbateSpec, solution, binding,
                            n_max=DEFAULT_N_MAX, seed=0, n_var=DEFAULT_N_VAR,
                            margin=DEFAULT_MARGIN, height=DEFAULT_HEIGHT, sites=None,
                            weighting="uniform"):
    """Agent configurations: matched sites x azimuth variants, round-robin over sites."""
    if sites is None:
        sites = enumerate_heuristic_sites(slab)
    matched = match_sites(sites, solution, margin, cell=np.array(slab.lattice.cell[:2, :2]))
    probe = agent_orientation(ads, binding, solution.orientation, 0.0, weighting)
    n_eff = 1 if azimuth_redundant(probe) else n_var
    out, errors = [], []
    for v in range(n_eff):
        for site in matched:
            if len(out) >= n_max:
                return out
            try:
                out.append(place_agent(slab, ads, site, binding, solution.orientation, v, n_eff,
                                       height, seed, weighting))
            except PlacementError as exc:
                errors.append(str(exc))
    if not out:
        raise PlacementError("no agent configuration could be placed: " + "; ".join(errors))
    return out


def heuristic_configurations(slab: Structure, ads: AdsorbateSpec, binding_index=0, seed=0,
                             height=DEFAULT_HEIGHT, sites=None):
    """One heuristic placement per enumerated site (collisions skipped)."""
    if sites is None:
        sites = enumerate_heuristic_sites(slab)
    out = []
    for k, site in enumerate(sites):
        try:
            out.append(place_heuristic(slab, ads, site, binding_index, seed, height,
                                       rng=rng_for(seed, STREAM_HEURISTIC, k)))
        except PlacementError:
            continue
    if not out:
        raise PlacementError("no heuristic configuration could be placed")
    return out


def random_configurations(slab: Structure, ads: AdsorbateSpec, n=50, seed=0,
                          height=DEFAULT_HEIGHT):
    """``n`` random-site placements with uniform random rotations."""
    sites = sample_random_sites(slab, n, seed)
    out = []
    for k, site in enumerate(sites):
        try:
            out.append(place_random(slab, ads, site, seed, height,
                                    rng=rng_for(seed, STREAM_RANDOM, k)))
        except PlacementError:
            continue
    if not out:
        raise PlacementError("no random configuration could be placed")
    return out
