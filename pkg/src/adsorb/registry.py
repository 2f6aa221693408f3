"""Adsorbate registry backed by shipped extXYZ geometries.

Keys are opaque strings (SMILES-like); they are looked up, never parsed.
The atom order in each asset file is the canonical order that binding
indices refer to.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import ParseError, RegistryError
from .io import parse_extxyz
from .structures import AdsorbateSpec

_ASSET_DIR = "assets/adsorbates"


def _assets():
    return resources.files("adsorb").joinpath(_ASSET_DIR)


def registry_keys():
    return sorted(p.name[: -len(".extxyz")] for p in _assets().iterdir()
                  if p.name.endswith(".extxyz"))


def normalize_key(key: str) -> str:
    k = key.strip()
    return k[1:] if k.startswith("*") else k


def adsorbate_from_registry(key: str) -> AdsorbateSpec:
    """AdsorbateSpec for a registry key (a leading '*' is ignored) or a geometry file path."""
    k = normalize_key(key)
    if k in registry_keys():
        s = parse_extxyz(_assets().joinpath(f"{k}.extxyz").read_text())
        return AdsorbateSpec(k, s.symbols, s.positions)
    path = Path(key)
    if path.is_file():
        try:
            s = parse_extxyz(path.read_text())
        except ParseError as exc:
            raise RegistryError(f"cannot read adsorbate geometry {path}: {exc}") from None
        name = s.info.get("adsorbate", path.stem)
        return AdsorbateSpec(str(name), s.symbols, s.positions)
    raise RegistryError(
        f"unknown adsorbate {key!r}; registry keys: {', '.join(registry_keys())} "
        "(or pass a path to an extXYZ geometry file)")
