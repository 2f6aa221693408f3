"""Regenerate fixtures/solutions.json, fixtures/mocks/*.json and tests/data/mocks/*.json.

The per-system solutions are the published example trial (run 1) plus two
synthetic companion runs.  The companions vary element order and add or drop
one element where the subset rule allows it.  Systems 15 and 20 differ in
surface atoms by two elements, and system 16 binds through a different
adsorbate atom, so 17 of 20 systems are consistent.
"""
import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

# (id, adsorbate, catalyst, miller, site, surface atoms, adsorbate atoms, orientation)
SYSTEMS = [
    (1, "H", "Mo3Pd", (1, 1, 1), "hollow", ["Mo", "Mo", "Pd"], ["H"], "end-on"),
    (2, "NNH", "Mo3Pd", (1, 1, 1), "hollow", ["Mo", "Mo", "Pd"], ["N", "N"], "side-on"),
    (3, "H", "CuPd3", (1, 1, 1), "hollow", ["Cu", "Pd", "Pd"], ["H"], "end-on"),
    (4, "NNH", "CuPd3", (1, 1, 1), "hollow", ["Pd", "Pd", "Cu"], ["N", "N"], "side-on"),
    (5, "H", "Cu3Ag", (1, 1, 1), "hollow", ["Cu", "Ag", "Cu"], ["H"], "end-on"),
    (6, "NNH", "Cu3Ag", (1, 1, 1), "bridge", ["Cu", "Ag"], ["N", "H"], "end-on"),
    (7, "H", "Ru3Mo", (1, 1, 1), "hollow", ["Ru", "Mo", "Mo"], ["H"], "end-on"),
    (8, "NNH", "Ru3Mo", (1, 1, 1), "bridge", ["Ru", "Mo"], ["N", "N"], "side-on"),
    (9, "OH", "Pt", (1, 1, 1), "hollow", ["Pt", "Pt", "Pt"], ["O"], "end-on"),
    (10, "OH", "Pt", (1, 0, 0), "hollow", ["Pt", "Pt", "Pt"], ["O"], "end-on"),
    (11, "OH", "Pd", (1, 1, 1), "hollow", ["Pd", "Pd", "Pd"], ["O", "H"], "end-on"),
    (12, "OH", "Au", (1, 1, 1), "ontop", ["Au"], ["O"], "end-on"),
    (13, "OH", "Ag", (1, 0, 0), "ontop", ["Ag"], ["O"], "end-on"),
    (14, "OH", "CoPt", (1, 1, 1), "bridge", ["Co", "Pt"], ["O"], "end-on"),
    (15, "CH2CH2OH", "Cu6Ga2", (1, 0, 0), "bridge", ["Cu", "Ga"], ["C", "O"], "side-on"),
    (16, "CH2CH2OH", "Au2Hf", (1, 0, 2), "bridge", ["Hf", "Au"], ["C", "O"], "end-on"),
    (17, "OCHCH3", "Rh2Ti2", (1, 1, 1), "bridge", ["Ti", "Rh"], ["O", "C"], "side-on"),
    (18, "OCHCH3", "Al3Zr", (1, 0, 1), "bridge", ["Zr", "Al"], ["O", "C"], "side-on"),
    (19, "OCHCH3", "Hf2Zn6", (1, 1, 0), "bridge", ["Zn", "Hf"], ["O", "C"], "side-on"),
    (20, "ONN(CH3)2", "Bi2Ti6", (2, 1, 1), "bridge", ["Bi", "Ti"], ["N", "N"], "side-on"),
]

# Companion runs 2 and 3: (surface, adsorbate) overrides; None keeps run 1.
COMPANIONS = {
    1: [(["Mo", "Pd", "Mo"], None), (["Mo", "Mo", "Pd"], None)],
    2: [(["Mo", "Pd"], None), (None, ["N", "N", "H"])],
    4: [(["Cu", "Pd", "Pd"], None), (None, ["N"])],
    6: [(None, ["N"]), (["Ag", "Cu"], ["N"])],
    8: [(["Ru", "Mo", "Mo"], None), (["Ru", "Mo"], ["N"])],
    11: [(None, ["O"]), (None, ["O"])],
    14: [(["Pt", "Co"], None), (["Co", "Pt", "Pt"], None)],
    15: [(["Cu", "Cu", "Ga", "Ga"], None), (["Cu", "Ga"], None)],
    16: [(None, ["C"]), (None, ["O"])],
    17: [(None, ["O"]), (["Rh", "Ti"], None)],
    20: [(["Ti"], None), (["Bi", "Ti", "Ti", "Ti"], None)],
}

# Published replies that break the one-atom end-on rule, and the fix a
# second planner turn would give after the Critic objects.
CORRECTIONS = {
    6: {"adsorbate_binding_atoms": ["N"]},
    11: {"adsorbate_binding_atoms": ["O"]},
    16: {"orientation": "side-on"},
}


def solution(site, surf, ads, orient, why):
    return {"site_type": site, "surface_binding_atoms": surf,
            "adsorbate_binding_atoms": ads, "orientation": orient, "reasoning": why}


def reply(sol):
    why = sol["reasoning"]
    body = {k: v for k, v in sol.items() if k != "reasoning"}
    body["reasoning"] = why
    return f"{why}\n\n```json\n{json.dumps(body, indent=2)}\n```"


def solutions_fixture():
    systems = []
    for sid, ads, cat, miller, site, surf, a_atoms, orient in SYSTEMS:
        runs = [{"surface": surf, "adsorbate": a_atoms}]
        for s_over, a_over in COMPANIONS.get(sid, [(None, None), (None, None)]):
            runs.append({"surface": s_over or surf, "adsorbate": a_over or a_atoms})
        systems.append({"system_id": sid, "adsorbate": ads,
                        "catalyst": f"{cat} ({''.join(map(str, miller))})", "runs": runs})
    return {"_comment": "Run 1 is the published example trial; runs 2 and 3 are synthetic.",
            "systems": systems}


def system_mocks():
    out = {}
    for sid, ads, cat, miller, site, surf, a_atoms, orient in SYSTEMS:
        first = solution(site, surf, a_atoms, orient,
                         f"Proposed {site} binding of {ads} on {cat}.")
        responses = [reply(first)]
        if sid in CORRECTIONS:
            fixed = dict(first, **CORRECTIONS[sid])
            fixed["reasoning"] = "Revised after review so the atom count fits the orientation."
            responses.append(reply(fixed))
        out[f"system{sid:02d}.json"] = {
            "match": {"adsorbate": ads, "catalyst": cat, "miller": list(miller)},
            "responses": responses}
    out["oracle_pt111_h.json"] = {
        "match": {"adsorbate": "H", "catalyst": "Pt", "miller": [1, 1, 1]},
        "responses": [reply(solution("hollow", ["Pt", "Pt", "Pt"], ["H"], "end-on",
                                     "H prefers the threefold hollow on close-packed Pt."))]}
    return out


def test_mocks():
    good = solution("hollow", ["Pt", "Pt", "Pt"], ["O"], "end-on", "O sits in the hollow.")
    bad = solution("bridge", ["Pt", "Pt", "Pt"], ["O", "H"], "end-on", "Three atoms bridge.")
    return {
        "reject_then_accept.json": {
            "match": {"adsorbate": "OH", "catalyst": "Pt", "miller": [1, 1, 1]},
            "responses": [reply(bad), reply(good)]},
        "always_incoherent.json": {
            "match": {"adsorbate": "OH", "catalyst": "Pt", "miller": [1, 0, 0]},
            "responses": [reply(bad)] * 6},
        "prose_then_json.json": {
            "match": {"adsorbate": "OH", "catalyst": "Pd", "miller": [1, 1, 1]},
            "responses": ["The hydroxyl should bind through oxygen at a hollow site.",
                          '{"site_type": "hollow", "orientation": "flat"}',
                          reply(dict(good, surface_binding_atoms=["Pd", "Pd", "Pd"]))]},
    }


def write_all(mapping, directory):
    directory.mkdir(parents=True, exist_ok=True)
    for name, doc in mapping.items():
        (directory / name).write_text(json.dumps(doc, indent=2) + "\n")


def main():
    (ROOT / "fixtures" / "solutions.json").write_text(
        json.dumps(solutions_fixture(), indent=2) + "\n")
    write_all(system_mocks(), ROOT / "fixtures" / "mocks")
    write_all(test_mocks(), ROOT / "tests" / "data" / "mocks")


if __name__ == "__main__":
    main()
