"""Surface atom detection, periodic Delaunay triangulation and site enumeration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .errors import DegeneracyError, EmptyRequestError, NoSurfaceError
from .structures import TAG_FIXED, TAG_SURFACE, Structure

SITE_KINDS = ("ontop", "bridge", "hollow")
DEDUP_TOL = 0.05
COCIRCULAR_TOL = 0.05
_PARENT_COUNTS = {"ontop": (1,), "bridge": (2,), "hollow": (3, 4), "random": (3,)}


@dataclass(frozen=True)
class Site:
    position: tuple
    kind: str
    parents: tuple
    parent_elements: tuple
    triangle: int | None = None

    def __post_init__(self):
        if self.kind not in _PARENT_COUNTS:
            raise ValueError(f"unknown site kind {self.kind!r}")
        if len(self.parents) not in _PARENT_COUNTS[self.kind]:
            raise ValueError(f"{self.kind} site needs {_PARENT_COUNTS[self.kind]} parents")
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        object.__setattr__(self, "parents", tuple(int(i) for i in self.parents))
        object.__setattr__(self, "parent_elements", tuple(self.parent_elements))

    @property
    def element_multiset(self):
        return tuple(sorted(self.parent_elements))

    def as_dict(self):
        out = {"kind": self.kind, "position": list(self.position),
               "parents": list(self.parents), "parent_elements": list(self.parent_elements)}
        if self.triangle is not None:
            out["triangle"] = self.triangle
        return out


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Home-cell triangles of the periodic surface.

    ``triangles`` holds atom indices; ``corners`` the unfolded in-plane
    coordinates (T, 3, 2) of each triangle, so a triangle may poke out of
    the cell while its centroid lies inside.
    """

    vertices: tuple
    triangles: np.ndarray
    corners: np.ndarray
    z: float
    cell2: np.ndarray
    merged: tuple = ()

    @property
    def areas(self):
        return triangle_areas(self.corners)

    def __len__(self):
        return len(self.triangles)


def triangle_areas(corners):
    c = np.asarray(corners, dtype=float)
    u = c[:, 1, :2] - c[:, 0, :2]
    v = c[:, 2, :2] - c[:, 0, :2]
    return 0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])


def _cell2(slab: Structure):
    return np.array(slab.lattice.cell[:2, :2], dtype=float)


def fold_xy(xy, cell2):
    """Map in-plane points into the home cell, fractional coords in [0, 1)."""
    xy = np.asarray(xy, dtype=float)
    f = xy @ np.linalg.inv(cell2)
    f = f - np.floor(f + 1e-9)
    f[np.abs(f) < 1e-9] = 0.0
    return f @ cell2


def _periodic_dist2(a, b, cell2):
    """In-plane minimum-image distance between points a (n, 2) and b (m, 2)."""
    d = a[:, None, :] - b[None, :, :]
    f = d @ np.linalg.inv(cell2)
    f -= np.round(f)
    d = f @ cell2
    shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], float) @ cell2
    cand = d[..., None, :] + shifts
    return np.sqrt((cand ** 2).sum(-1).min(-1))


def surface_atoms(slab: Structure, delta_layer=0.5):
    """Indices of tag-0/1 atoms within ``delta_layer`` of the highest one."""
    idx = [i for i, t in enumerate(slab.tags) if t in (TAG_FIXED, TAG_SURFACE)]
    if not idx or TAG_SURFACE not in slab.tags:
        raise NoSurfaceError("structure has no free-surface (tag 1) atoms")
    z = slab.positions[idx, 2]
    zmax = z.max()
    return [i for i, zi in zip(idx, z) if zi >= zmax - delta_layer]


def _tie_breaker(n):
    # A fixed tiny displacement per surface atom, identical for all its
    # periodic images, so cocircular point sets triangulate periodically.
    rng = np.random.default_rng(20240531)
    return rng.uniform(-1.0, 1.0, size=(n, 2)) * 1e-5


def triangulate_surface(slab: Structure, delta_layer=0.5) -> Triangulation:
    surf = surface_atoms(slab, delta_layer)
    cell2 = _cell2(slab)
    if abs(np.linalg.det(cell2)) < 1e-9:
        raise DegeneracyError("in-plane cell is degenerate")
    base = fold_xy(slab.positions[surf, :2], cell2)
    jitter = _tie_breaker(len(surf))
    pts, owner = [], []
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            shift = np.array([i, j], float) @ cell2
            pts.append(base + shift)
            owner.extend(range(len(surf)))
    pts = np.vstack(pts)
    owner = np.array(owner)
    jittered = pts + np.tile(jitter, (9, 1))
    if len(pts) < 3:
        raise DegeneracyError("fewer than 3 surface points")
    try:
        tri = Delaunay(jittered)
    except QhullError as exc:
        raise DegeneracyError(f"surface layer is degenerate (collinear?): {exc}") from None
    inv = np.linalg.inv(cell2)
    keep = []
    for k, simplex in enumerate(tri.simplices):
        f = pts[simplex].mean(axis=0) @ inv
        if np.all((f >= -1e-9) & (f < 1 - 1e-9)):
            keep.append(k)
    if not keep:
        raise DegeneracyError("no triangles found in the home cell")
    keep = np.array(keep)
    simplices = tri.simplices[keep]
    atom_tri = np.array([[surf[owner[v]] for v in s] for s in simplices])
    corners = pts[simplices]
    areas = triangle_areas(corners)
    # lexicographic order on (sorted atom indices, centroid) for determinism
    if np.any(areas <= 1e-6):
        raise DegeneracyError("zero-area triangle in surface triangulation")
    centroids = np.round(corners.mean(axis=1), 6)
    order = np.array(sorted(range(len(keep)), key=lambda k: (
        tuple(sorted(atom_tri[k])), tuple(centroids[k]))))
    total = areas.sum()
    cell_area = abs(np.linalg.det(cell2))
    if abs(total - cell_area) > 1e-6 * max(1.0, cell_area):
        raise DegeneracyError(
            f"home-cell triangles cover {total:.6f} A^2, cell is {cell_area:.6f} A^2")
    merged = _cocircular_pairs(tri, keep, pts, order, [surf[o] for o in owner])
    z = float(np.mean(slab.positions[surf, 2]))
    return Triangulation(tuple(surf), atom_tri[order], corners[order], z, cell2, merged)


def _circumcircle(c):
    (ax, ay), (bx, by), (cx, cy) = c
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
          + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
          + (cx * cx + cy * cy) * (bx - ax)) / d
    center = np.array([ux, uy])
    return center, float(np.linalg.norm(c[0] - center))


def _cocircular_pairs(tri, keep, pts, order, atom_of):
    """Home-cell triangles whose neighbor across an edge shares their circumcircle.

    Returns tuples (triangle position in sorted order, quad center xy,
    atom indices of the four corners).  In small cells several corners
    can be images of the same atom, so indices may repeat.
    """
    pos_of = {int(keep[k]): p for p, k in enumerate(order)}
    out = []
    for k in keep:
        simplex = tri.simplices[k]
        center, radius = _circumcircle(pts[simplex])
        for nb in tri.neighbors[k]:
            if nb < 0:
                continue
            other = [v for v in tri.simplices[nb] if v not in simplex]
            if len(other) != 1:
                continue
            if abs(np.linalg.norm(pts[other[0]] - center) - radius) < COCIRCULAR_TOL:
                quad = tuple(sorted(atom_of[v] for v in (*simplex.tolist(), int(other[0]))))
                out.append((pos_of[int(k)], center, quad))
    return tuple(out)


def _dedup(points, cell2, tol=DEDUP_TOL):
    """Indices of the first occurrence of each point under periodic folding."""
    kept = []
    for i, p in enumerate(points):
        if kept:
            d = _periodic_dist2(p[None, :], np.array([points[k] for k in kept]), cell2)[0]
            if d.min() < tol:
                continue
        kept.append(i)
    return kept


def enumerate_heuristic_sites(slab: Structure, delta_layer=0.5):
    """Ontop, bridge and hollow sites of the top layer, folded and deduplicated."""
    t = triangulate_surface(slab, delta_layer)
    cell2 = t.cell2
    z = t.z
    syms = slab.symbols
    sites = []

    ontop_xy = fold_xy(slab.positions[list(t.vertices), :2], cell2)
    for k in _dedup(list(ontop_xy), cell2):
        i = t.vertices[k]
        sites.append(Site((*ontop_xy[k], z), "ontop", (i,), (syms[i],)))

    # 4-fold hollows from cocircular triangle pairs
    all_quad_xy = [fold_xy(center, cell2) for _, center, _ in t.merged]
    quad_keep = _dedup(all_quad_xy, cell2)
    quad_xy = [all_quad_xy[k] for k in quad_keep]
    quad_parents = [t.merged[k][2] for k in quad_keep]
    merged_any = {pos for pos, _, _ in t.merged}

    edges_xy, edges_parents = [], []
    for tri_atoms, corner in zip(t.triangles, t.corners):
        for a, b in ((0, 1), (1, 2), (0, 2)):
            edges_xy.append(fold_xy(0.5 * (corner[a] + corner[b]), cell2))
            edges_parents.append((int(tri_atoms[a]), int(tri_atoms[b])))
    for k in _dedup(edges_xy, cell2):
        xy = edges_xy[k]
        if quad_xy and _periodic_dist2(xy[None, :], np.array(quad_xy), cell2).min() < DEDUP_TOL:
            continue  # diagonal of a 4-fold hollow, not a bridge
        a, b = edges_parents[k]
        sites.append(Site((*xy, z), "bridge", (a, b), (syms[a], syms[b])))

    for pos, (tri_atoms, corner) in enumerate(zip(t.triangles, t.corners)):
        if pos in merged_any:
            continue
        xy = fold_xy(corner.mean(axis=0), cell2)
        parents = tuple(int(x) for x in tri_atoms)
        sites.append(Site((*xy, z), "hollow", parents, tuple(syms[i] for i in parents)))
    for xy, parents in zip(quad_xy, quad_parents):
        sites.append(Site((*xy, z), "hollow", parents, tuple(syms[i] for i in parents)))
    return sites


def sample_in_triangles(corners, n, rng):
    """Area-weighted uniform samples; returns (triangle indices, xy points)."""
    corners = np.asarray(corners, dtype=float)[..., :2]
    areas = triangle_areas(corners)
    idx = rng.choice(len(corners), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = corners[idx, 0], corners[idx, 1], corners[idx, 2]
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return idx, pts


def sample_random_sites(slab: Structure, n: int, seed: int, delta_layer=0.5):
    """``n`` area-uniform random surface sites (kind "random")."""
    if n < 1:
        raise EmptyRequestError("number of random sites must be at least 1")
    t = triangulate_surface(slab, delta_layer)
    rng = np.random.default_rng(seed)
    idx, pts = sample_in_triangles(t.corners, n, rng)
    folded = fold_xy(pts, t.cell2)
    out = []
    for k, xy in zip(idx, folded):
        parents = tuple(int(x) for x in t.triangles[k])
        out.append(Site((*xy, t.z), "random", parents,
                        tuple(slab.symbols[i] for i in parents), triangle=int(k)))
    return out


def barycentric(p, corner):
    """Barycentric coordinates of xy point ``p`` in triangle ``corner`` (3, 2)."""
    a, b, c = (np.asarray(x, float)[:2] for x in corner)
    m = np.column_stack([b - a, c - a])
    l1, l2 = np.linalg.solve(m, np.asarray(p, float)[:2] - a)
    return np.array([1 - l1 - l2, l1, l2])
