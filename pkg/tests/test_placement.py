import math

import numpy as np
import pytest

from adsorb.agent.solution import Solution
from adsorb.errors import NoMatchingSiteError, PlacementError
from adsorb.placement import (agent_orientation, azimuth_redundant, generate_configurations,
                              heuristic_configurations, match_sites, place_agent, place_heuristic,
                              place_random, random_configurations, random_rotation,
                              rotation_between)
from adsorb.registry import adsorbate_from_registry
from adsorb.sites import Site, enumerate_heuristic_sites

from conftest import alloy_slab, fcc_slab


def ads_positions(c):
    s = c.structure
    return s.positions[s.tags == 2]


@pytest.fixture(scope="module")
def pt_sites(pt111):
    return enumerate_heuristic_sites(pt111)


def first(sites, kind):
    return next(s for s in sites if s.kind == kind)


class TestRotations:
    def test_random_rotation_is_proper(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            r = random_rotation(rng)
            assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
            assert np.linalg.det(r) == pytest.approx(1.0)

    @pytest.mark.parametrize("u", [[1, 0, 0], [0, 0, -1], [0, 0, 1], [1, 2, 3]])
    def test_rotation_between(self, u):
        u = np.array(u, float)
        r = rotation_between(u, np.array([0, 0, 1.0]))
        assert np.allclose(r @ (u / np.linalg.norm(u)), [0, 0, 1], atol=1e-12)


class TestHeuristic:
    def test_h_ontop(self, pt111, pt_sites):
        site = first(pt_sites, "ontop")
        c = place_heuristic(pt111, adsorbate_from_registry("H"), site, 0, seed=1)
        (h,) = ads_positions(c)
        assert h[2] == pytest.approx(site.position[2] + 2.0)
        assert np.all(np.abs(h[:2] - np.array(site.position[:2])) <= 0.2 + 1e-12)

    def test_oh_binding_oxygen(self, pt111, pt_sites):
        site = first(pt_sites, "hollow")
        c = place_heuristic(pt111, adsorbate_from_registry("OH"), site, 0, seed=2)
        o, h = ads_positions(c)
        assert o[2] == pytest.approx(site.position[2] + 2.0)
        assert np.linalg.norm(h - o) == pytest.approx(0.97, abs=1e-6)

    def test_deterministic(self, pt111, pt_sites):
        site = first(pt_sites, "bridge")
        ads = adsorbate_from_registry("OCHCH3")
        a = place_heuristic(pt111, ads, site, 0, seed=5)
        b = place_heuristic(pt111, ads, site, 0, seed=5)
        assert np.array_equal(a.structure.positions, b.structure.positions)

    def test_bad_binding_index(self, pt111, pt_sites):
        with pytest.raises(PlacementError):
            place_heuristic(pt111, adsorbate_from_registry("OH"), pt_sites[0], 5)

    def test_collision_raises(self, pt111, pt_sites):
        with pytest.raises(PlacementError):
            place_heuristic(pt111, adsorbate_from_registry("H"), first(pt_sites, "ontop"),
                            height=0.1, jitter=0.0)

    def test_one_per_site(self, pt111, pt_sites):
        cs = heuristic_configurations(pt111, adsorbate_from_registry("H"), seed=7)
        assert len(cs) == len(pt_sites) == 24
        assert all(c.strategy == "heuristic" for c in cs)


class TestRandom:
    def test_h_at_site(self, pt111):
        site = Site((1.0, 1.0, pt111.positions[:, 2].max()), "random", (8, 9, 10),
                    ("Pt", "Pt", "Pt"))
        c = place_random(pt111, adsorbate_from_registry("H"), site, seed=0)
        assert np.allclose(ads_positions(c)[0], np.array(site.position) + [0, 0, 2.0])

    def test_rigid_body(self, pt111):
        ads = adsorbate_from_registry("CH2CH2OH")
        for c in random_configurations(pt111, ads, n=5, seed=3):
            p = ads_positions(c)
            d0 = np.linalg.norm(ads.positions[:, None] - ads.positions[None], axis=-1)
            d1 = np.linalg.norm(p[:, None] - p[None], axis=-1)
            assert np.allclose(d0, d1, atol=1e-9)

    def test_count_and_determinism(self, pt111):
        ads = adsorbate_from_registry("OH")
        a = random_configurations(pt111, ads, n=10, seed=4)
        b = random_configurations(pt111, ads, n=10, seed=4)
        assert len(a) == 10
        assert all(np.array_equal(x.structure.positions, y.structure.positions)
                   for x, y in zip(a, b))


class TestAgentPlacement:
    def test_nnh_side_on_bridge(self, pt111, pt_sites):
        site = first(pt_sites, "bridge")
        c = place_agent(pt111, adsorbate_from_registry("NNH"), site, [0, 1], "side-on")
        n1, n2, h = ads_positions(c)
        z = site.position[2] + 2.0
        assert n1[2] == pytest.approx(z, abs=0.01)
        assert n2[2] == pytest.approx(z, abs=0.01)
        assert h[2] > z
        assert np.allclose(0.5 * (n1 + n2), np.array(site.position) + [0, 0, 2.0], atol=1e-9)

    def test_pair_center_maps_to_site(self):
        local = agent_orientation(adsorbate_from_registry("NNH"), [0, 1], "side-on")
        assert np.allclose(0.5 * (local[0] + local[1]), 0.0, atol=1e-12)

    def test_oh_end_on_points_up(self, pt111, pt_sites):
        c = place_agent(pt111, adsorbate_from_registry("OH"), first(pt_sites, "hollow"), [0],
                        "end-on")
        o, h = ads_positions(c)
        u = (h - o) / np.linalg.norm(h - o)
        assert np.allclose(u, [0, 0, 1], atol=1e-6)

    def test_three_binding_atoms_coplanar(self):
        ads = adsorbate_from_registry("CH2CH2OH")
        binding = [0, 3, 4]  # not a mirror plane of the molecule
        local = agent_orientation(ads, binding, "side-on")
        assert np.ptp(local[binding, 2]) < 1e-9
        rest = [i for i in range(len(ads)) if i not in binding]
        assert local[rest, 2].mean() > 0

    def test_side_on_needs_two(self):
        with pytest.raises(PlacementError):
            agent_orientation(adsorbate_from_registry("OH"), [0], "side-on")

    def test_azimuth_variants_rotate(self):
        ads = adsorbate_from_registry("NNH")
        a = agent_orientation(ads, [0, 1], "side-on", 0.0)
        b = agent_orientation(ads, [0, 1], "side-on", 2 * math.pi / 3)
        assert not np.allclose(a, b)
        assert np.allclose(np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1))

    def test_axial_adsorbates_redundant(self):
        assert azimuth_redundant(agent_orientation(adsorbate_from_registry("OH"), [0], "end-on"))
        assert azimuth_redundant(agent_orientation(adsorbate_from_registry("H"), [0], "end-on"))
        assert not azimuth_redundant(
            agent_orientation(adsorbate_from_registry("NNH"), [0], "end-on"))


class TestMatchSites:
    def test_mixed_bridge_on_l12(self, pd3cu111):
        sites = enumerate_heuristic_sites(pd3cu111)
        out = match_sites(sites, Solution("bridge", ["Cu", "Pd"], ["N"], "end-on"), margin=0)
        assert out and all(s.kind == "bridge" and s.element_multiset == ("Cu", "Pd")
                           for s in out)

    def test_ontop_monometallic(self, pt_sites):
        out = match_sites(pt_sites, Solution("ontop", ["Pt"], ["O"], "end-on"))
        assert out == [s for s in pt_sites if s.kind == "ontop"]

    def test_kind_only_fallback(self):
        s = alloy_slab("Pd3Cu", (1, 0, 0), supercell=(2, 2))
        sites = enumerate_heuristic_sites(s)
        out = match_sites(sites, Solution("hollow", ["Pd", "Pd", "Pd"], ["H"], "end-on"),
                          margin=0)
        assert out == [x for x in sites if x.kind == "hollow"]

    def test_margin_admits_neighbours(self, pt_sites, pt111):
        sol = Solution("hollow", ["Pt", "Pt", "Pt"], ["H"], "end-on")
        cell = pt111.lattice.cell[:2, :2]
        narrow = match_sites(pt_sites, sol, margin=0.5, cell=cell)
        wide = match_sites(pt_sites, sol, margin=1.0, cell=cell)
        assert len(narrow) == 8
        assert len(wide) > len(narrow)
        assert any(s.kind == "bridge" for s in wide)

    def test_missing_kind_raises(self, pt_sites):
        ontop = [s for s in pt_sites if s.kind == "ontop"]
        with pytest.raises(NoMatchingSiteError):
            match_sites(ontop, Solution("hollow", ["Pt", "Pt", "Pt"], ["H"], "end-on"))


class TestGenerate:
    def test_product_of_sites_and_variants(self, pt111):
        ads = adsorbate_from_registry("NNH")
        sol = Solution("ontop", ["Pt"], ["N"], "end-on")
        cs = generate_configurations(pt111, ads, sol, [0], n_max=48, n_var=3)
        assert len(cs) == 12

    def test_round_robin_cap(self, pt111):
        ads = adsorbate_from_registry("NNH")
        sol = Solution("ontop", ["Pt"], ["N"], "end-on")
        cs = generate_configurations(pt111, ads, sol, [0], n_max=5, n_var=3)
        assert len(cs) == 5
        assert len({c.site.position for c in cs}) >= math.ceil(5 / 3)

    def test_axial_collapses_variants(self, pt111):
        ads = adsorbate_from_registry("H")
        sol = Solution("hollow", ["Pt", "Pt", "Pt"], ["H"], "end-on")
        assert len(generate_configurations(pt111, ads, sol, [0])) == 8

    def test_provenance(self, pt111):
        ads = adsorbate_from_registry("OH")
        sol = Solution("bridge", ["Pt", "Pt"], ["O"], "end-on")
        c = generate_configurations(pt111, ads, sol, [0], seed=11)[0]
        p = c.provenance
        assert p["strategy"] == "agent" and p["seed"] == 11 and p["binding"] == [0]
        assert p["site"]["kind"] == "bridge"
        assert "strategy=agent" in c.to_extxyz()
