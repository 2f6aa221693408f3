"""Regenerate src/adsorb/assets/adsorbates/*.extxyz from internal coordinates.

Bond lengths and angles are textbook values; the registry atom order is the
order of the rows below and must not change once published, because
binding indices refer to it.  Each geometry is relaxed with the built-in
calculator in adsorbate mode (bond and 1-3 restraints only), which leaves
it unchanged; the relaxation is run anyway as a consistency check.
"""
from pathlib import Path

import numpy as np

# (symbol, bond_to, r, angle_to, angle, dihedral_to, dihedral); indices are 0-based.
ZMATS = {
    "H": [("H",)],
    "OH": [("O",), ("H", 0, 0.97)],
    "NNH": [("N",), ("N", 0, 1.25), ("H", 1, 1.04, 0, 107.0)],
    "OCHCH3": [
        ("O",),
        ("C", 0, 1.21),
        ("H", 1, 1.11, 0, 120.0),
        ("C", 1, 1.50, 0, 120.0, 2, 180.0),
        ("H", 3, 1.09, 1, 109.5, 0, 0.0),
        ("H", 3, 1.09, 1, 109.5, 0, 120.0),
        ("H", 3, 1.09, 1, 109.5, 0, -120.0),
    ],
    "CH2CH2OH": [
        ("C",),
        ("H", 0, 1.08),
        ("H", 0, 1.08, 1, 118.0),
        ("C", 0, 1.50, 1, 121.0, 2, 180.0),
        ("H", 3, 1.09, 0, 109.5, 1, 60.0),
        ("H", 3, 1.09, 0, 109.5, 1, -60.0),
        ("O", 3, 1.43, 0, 109.5, 1, 180.0),
        ("H", 6, 0.96, 3, 108.5, 0, 180.0),
    ],
    "ONN(CH3)2": [
        ("O",),
        ("N", 0, 1.23),
        ("N", 1, 1.34, 0, 114.0),
        ("C", 2, 1.46, 1, 116.0, 0, 0.0),
        ("H", 3, 1.09, 2, 109.5, 1, 0.0),
        ("H", 3, 1.09, 2, 109.5, 1, 120.0),
        ("H", 3, 1.09, 2, 109.5, 1, -120.0),
        ("C", 2, 1.46, 1, 122.0, 0, 180.0),
        ("H", 7, 1.09, 2, 109.5, 1, 60.0),
        ("H", 7, 1.09, 2, 109.5, 1, 180.0),
        ("H", 7, 1.09, 2, 109.5, 1, -60.0),
    ],
}


def zmat_to_xyz(rows):
    pos = []
    for k, row in enumerate(rows):
        if k == 0:
            pos.append(np.zeros(3))
            continue
        b, r = row[1], row[2]
        if k == 1:
            pos.append(pos[b] + np.array([r, 0.0, 0.0]))
            continue
        a, ang = row[3], np.radians(row[4])
        if k == 2 or len(row) < 7:
            # place in the xy plane
            u = pos[a] - pos[b]
            u /= np.linalg.norm(u)
            perp = np.cross(u, [0.0, 0.0, 1.0])
            if np.linalg.norm(perp) < 1e-8:
                perp = np.cross(u, [0.0, 1.0, 0.0])
            perp /= np.linalg.norm(perp)
            w = np.cross(perp, u)
            pos.append(pos[b] + r * (np.cos(ang) * u + np.sin(ang) * w))
            continue
        d, dih = row[5], np.radians(row[6])
        bc = pos[b] - pos[a]
        bc /= np.linalg.norm(bc)
        n = np.cross(pos[a] - pos[d], bc)
        n /= np.linalg.norm(n)
        m = np.cross(n, bc)
        local = np.array([-r * np.cos(ang), r * np.sin(ang) * np.cos(dih), r * np.sin(ang) * np.sin(dih)])
        pos.append(pos[b] + local[0] * bc + local[1] * m + local[2] * n)
    return np.array(pos)


def main():
    from adsorb.calculator import LJCalculator, default_params
    from adsorb.io import write_extxyz
    from adsorb.relax import FireParams, relax_structure
    from adsorb.structures import AdsorbateSpec, Lattice, Structure

    out = Path(__file__).resolve().parents[1] / "src/adsorb/assets/adsorbates"
    out.mkdir(parents=True, exist_ok=True)
    for key, rows in ZMATS.items():
        symbols = [r[0] for r in rows]
        spec = AdsorbateSpec(key, symbols, zmat_to_xyz(rows))
        box = Structure(Lattice.cubic(20.0, (False, False, False)), spec.symbols,
                        spec.positions + 10.0, [2] * len(spec), {"adsorbate": key})
        res = relax_structure(box, LJCalculator(default_params(), adsorbate=spec),
                              FireParams(fmax=1e-6, max_steps=2000))
        final = res.final.positions - res.final.positions.mean(axis=0)
        s = Structure(Lattice.cubic(20.0, (False, False, False)), spec.symbols, final,
                      [2] * len(spec), {"adsorbate": key})
        (out / f"{key}.extxyz").write_text(write_extxyz(s, always_tags=True))
        print(key, res.status, res.steps, res.energy)


if __name__ == "__main__":
    main()
