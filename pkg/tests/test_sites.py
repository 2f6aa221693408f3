from collections import Counter

import numpy as np
import pytest
from scipy.stats import chisquare

from adsorb.errors import EmptyRequestError, NoSurfaceError
from adsorb.sites import (Site, barycentric, enumerate_heuristic_sites, sample_in_triangles,
                          sample_random_sites, surface_atoms, triangle_areas, triangulate_surface)
from adsorb.structures import Lattice, Structure

from conftest import alloy_slab, fcc_slab


def kinds(sites):
    c = Counter(s.kind for s in sites)
    return c["ontop"], c["bridge"], c["hollow"]


class TestSurfaceAtoms:
    def test_top_layer_of_fcc111(self, pt111):
        top = surface_atoms(pt111)
        assert len(top) == 4
        zmax = pt111.positions[:, 2].max()
        assert np.allclose(pt111.positions[top, 2], zmax)

    def test_adatom_only(self, pt111):
        zmax = pt111.positions[:, 2].max()
        s = pt111.extend(["Pt"], [[0.3, 0.2, zmax + 2.0]], [1])
        assert list(surface_atoms(s)) == [len(s) - 1]

    def test_all_adsorbate_raises(self):
        s = Structure(Lattice.cubic(10.0), ["H", "H"], [[0, 0, 0], [1, 0, 0]], [2, 2])
        with pytest.raises(NoSurfaceError):
            surface_atoms(s)


class TestTriangulation:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_triangular_lattice_two_per_cell(self, n):
        t = triangulate_surface(fcc_slab((1, 1, 1), supercell=(n, n)))
        assert len(t.triangles) == 2 * n * n

    def test_square_lattice_two_per_cell(self):
        t = triangulate_surface(fcc_slab((1, 0, 0), supercell=(2, 2)))
        assert len(t.triangles) == 8

    def test_areas_tile_the_cell(self, pd3cu111):
        t = triangulate_surface(pd3cu111)
        cell = pd3cu111.lattice.cell
        area = abs(np.linalg.det(cell[:2, :2]))
        assert t.areas.sum() == pytest.approx(area, rel=1e-9)


class TestHeuristicSites:
    def test_fcc111_counts(self):
        assert kinds(enumerate_heuristic_sites(fcc_slab((1, 1, 1), supercell=(1, 1)))) == (1, 3, 2)

    def test_fcc111_counts_scale_with_cell(self, pt111):
        assert kinds(enumerate_heuristic_sites(pt111)) == (4, 12, 8)

    def test_fcc100_fourfold_hollow(self):
        sites = enumerate_heuristic_sites(fcc_slab((1, 0, 0), supercell=(1, 1)))
        assert kinds(sites) == (1, 2, 1)
        hollow = next(s for s in sites if s.kind == "hollow")
        assert len(hollow.parents) == 4

    def test_fcc100_hollow_at_square_center(self):
        s = fcc_slab((1, 0, 0), a=4.0, supercell=(2, 2))
        cell2 = s.lattice.cell[:2, :2]
        shifts = np.array([[i, j] for i in (-1, 0, 1) for j in (-1, 0, 1)]) @ cell2
        for h in (x for x in enumerate_heuristic_sites(s) if x.kind == "hollow"):
            for p in h.parents:
                d = s.positions[p, :2] + shifts - np.asarray(h.position[:2])
                # half the square diagonal: (a / sqrt 2) / sqrt 2 = a / 2
                assert np.linalg.norm(d, axis=1).min() == pytest.approx(2.0, abs=1e-6)

    def test_l12_111_bridge_partition(self, pd3cu111):
        sites = enumerate_heuristic_sites(pd3cu111)
        bridges = Counter(s.element_multiset for s in sites if s.kind == "bridge")
        assert set(bridges) == {("Pd", "Pd"), ("Cu", "Pd")}
        assert bridges[("Pd", "Pd")] == bridges[("Cu", "Pd")] == 24

    def test_l12_111_hollows(self, pd3cu111):
        sites = enumerate_heuristic_sites(pd3cu111)
        hollows = Counter(s.element_multiset for s in sites if s.kind == "hollow")
        assert hollows == {("Cu", "Pd", "Pd"): 24, ("Pd", "Pd", "Pd"): 8}

    def test_sites_sit_at_surface_height(self, pt111):
        zmax = pt111.positions[:, 2].max()
        for s in enumerate_heuristic_sites(pt111):
            assert s.position[2] == pytest.approx(zmax)

    def test_sites_are_distinct(self, pd3cu111):
        sites = enumerate_heuristic_sites(pd3cu111)
        xy = np.array([s.position[:2] for s in sites])
        d = np.linalg.norm(xy[:, None] - xy[None], axis=-1) + np.eye(len(xy)) * 1e9
        assert d.min() > 0.05

    def test_deterministic(self, pd3cu111):
        a = [s.as_dict() for s in enumerate_heuristic_sites(pd3cu111)]
        b = [s.as_dict() for s in enumerate_heuristic_sites(pd3cu111)]
        assert a == b

    def test_site_validation(self):
        with pytest.raises(ValueError):
            Site((0, 0, 0), "bridge", (1,), ("Pt",))


class TestRandomSites:
    def test_same_seed_same_site(self, pt111):
        a = sample_random_sites(pt111, 1, seed=3)[0]
        b = sample_random_sites(pt111, 1, seed=3)[0]
        assert a.as_dict() == b.as_dict()

    def test_different_seed_differs(self, pt111):
        a = sample_random_sites(pt111, 1, seed=3)[0]
        b = sample_random_sites(pt111, 1, seed=4)[0]
        assert a.position != b.position

    def test_zero_raises(self, pt111):
        with pytest.raises(EmptyRequestError):
            sample_random_sites(pt111, 0, seed=0)

    def test_random_kind_and_parents(self, pt111):
        for s in sample_random_sites(pt111, 20, seed=1):
            assert s.kind == "random"
            assert len(s.parents) == 3

    def test_area_ratio_one_to_three(self):
        corners = np.array([[[0, 0], [1, 0], [0, 1]], [[2, 0], [5, 0], [2, 1]]], float)
        assert triangle_areas(corners).tolist() == [0.5, 1.5]
        idx, pts = sample_in_triangles(corners, 10_000, np.random.default_rng(12345))
        counts = np.bincount(idx, minlength=2)
        assert chisquare(counts, [2500, 7500]).pvalue > 0.01
        for k, p in zip(idx, pts):
            assert np.all(barycentric(p, corners[k]) >= -1e-12)
