from pathlib import Path

import numpy as np
import pytest

from adsorb.calculator import CalcParams
from adsorb.slab import BulkSpec, build_slab, default_bulk
from adsorb.structures import Lattice, SlabMetadata, Structure

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
TEST_MOCKS = Path(__file__).resolve().parent / "data" / "mocks"


def fcc_slab(miller=(1, 1, 1), a=4.0, layers=3, supercell=(2, 2), formula="Pt"):
    return build_slab(BulkSpec("fcc", a, (formula,)), SlabMetadata(formula, miller, layers=layers),
                      supercell)


def alloy_slab(formula, miller=(1, 1, 1), layers=3, supercell=(2, 2), shift=0.0):
    return build_slab(default_bulk(formula), SlabMetadata(formula, miller, shift, layers=layers),
                      supercell)


def reduced_params(elements=("Pt",), cutoff=3.0):
    """epsilon = sigma = 1 for every element: reduced LJ units."""
    return CalcParams({e: 1.0 for e in elements}, {e: 1.0 for e in elements}, cutoff)


def dimer(r, symbol="Pt", box=30.0):
    return Structure(Lattice.cubic(box), [symbol, symbol], [[0, 0, 0], [r, 0, 0]], [1, 1])


def random_box(seed, n=20, box=9.0, symbols=("Pt", "Pd", "Cu"), min_dist=2.0):
    """Periodic box of ``n`` atoms with no pair closer than ``min_dist``."""
    rng = np.random.default_rng(seed)
    lat = Lattice.cubic(box)
    pos = []
    while len(pos) < n:
        p = rng.random(3) * box
        ok = True
        for q in pos:
            d = p - q
            d -= box * np.round(d / box)
            if np.linalg.norm(d) < min_dist:
                ok = False
                break
        if ok:
            pos.append(p)
    syms = [symbols[k % len(symbols)] for k in range(n)]
    return Structure(lat, syms, pos, [1] * n)


@pytest.fixture(scope="session")
def pt111():
    return fcc_slab()


@pytest.fixture(scope="session")
def pd3cu111():
    return alloy_slab("Pd3Cu")
