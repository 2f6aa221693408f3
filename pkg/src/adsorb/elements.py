"""Element table: symbols, atomic numbers, masses and covalent radii.

Backed by ``ase.data``; only elements 1-103 are accepted.
"""
from ase.data import atomic_masses, chemical_symbols, covalent_radii

MAX_Z = 103

_Z = {sym: z for z, sym in enumerate(chemical_symbols) if 1 <= z <= MAX_Z}

# Groups 1-12 plus the post-transition metals; everything else counts as non-metal.
_NONMETALS = {
    "H", "He", "B", "C", "N", "O", "F", "Ne", "Si", "P", "S", "Cl", "Ar",
    "Ge", "As", "Se", "Br", "Kr", "Sb", "Te", "I", "Xe", "At", "Rn",
}


def is_symbol(symbol):
    return symbol in _Z


def atomic_number(symbol):
    try:
        return _Z[symbol]
    except KeyError:
        raise KeyError(f"unknown element {symbol!r}") from None


def symbol(z):
    if not 1 <= z <= MAX_Z:
        raise KeyError(f"atomic number {z} out of range 1-{MAX_Z}")
    return chemical_symbols[z]


def mass(symbol):
    return float(atomic_masses[atomic_number(symbol)])


def covalent_radius(symbol):
    return float(covalent_radii[atomic_number(symbol)])


def is_metal(symbol):
    atomic_number(symbol)
    return symbol not in _NONMETALS


def normalize_symbol(text):
    """'cu' -> 'Cu'; raises KeyError for anything that is not an element."""
    s = text.strip()
    s = s[:1].upper() + s[1:].lower()
    atomic_number(s)
    return s
