"""The Solution record and the parser that extracts it from model replies."""
from __future__ import annotations

import json
from dataclasses import dataclass

from .. import elements
from ..errors import SolutionParseError

SITE_TYPES = ("ontop", "bridge", "hollow")
ORIENTATIONS = ("end-on", "side-on")
REQUIRED_KEYS = ("site_type", "surface_binding_atoms", "adsorbate_binding_atoms", "orientation")

_SITE_SYNONYMS = {
    "ontop": "ontop", "on-top": "ontop", "on top": "ontop", "top": "ontop", "atop": "ontop",
    "bridge": "bridge", "bridging": "bridge", "short bridge": "bridge", "long bridge": "bridge",
    "hollow": "hollow", "fcc hollow": "hollow", "hcp hollow": "hollow", "fcc": "hollow",
    "hcp": "hollow", "3-fold hollow": "hollow", "three-fold hollow": "hollow",
    "threefold hollow": "hollow", "4-fold hollow": "hollow", "four-fold hollow": "hollow",
    "fourfold hollow": "hollow",
}
_ORIENTATION_SYNONYMS = {
    "end-on": "end-on", "end on": "end-on", "endon": "end-on", "end_on": "end-on",
    "monodentate": "end-on",
    "side-on": "side-on", "side on": "side-on", "sideon": "side-on", "side_on": "side-on",
    "bidentate": "side-on", "tridentate": "side-on",
}


@dataclass(frozen=True)
class Solution:
    site_type: str
    surface_binding_atoms: tuple
    adsorbate_binding_atoms: tuple
    orientation: str
    reasoning: str = ""

    def __post_init__(self):
        if self.site_type not in SITE_TYPES:
            raise SolutionParseError(f"site_type {self.site_type!r} not in {SITE_TYPES}",
                                     "site_type")
        if self.orientation not in ORIENTATIONS:
            raise SolutionParseError(f"orientation {self.orientation!r} not in {ORIENTATIONS}",
                                     "orientation")
        for name in ("surface_binding_atoms", "adsorbate_binding_atoms"):
            value = tuple(getattr(self, name))
            if not value:
                raise SolutionParseError(f"{name} is empty", name)
            for sym in value:
                if not elements.is_symbol(sym):
                    raise SolutionParseError(f"{name} has invalid element {sym!r}", name)
            object.__setattr__(self, name, value)

    def as_dict(self, with_reasoning=True):
        out = {
            "site_type": self.site_type,
            "surface_binding_atoms": list(self.surface_binding_atoms),
            "adsorbate_binding_atoms": list(self.adsorbate_binding_atoms),
            "orientation": self.orientation,
        }
        if with_reasoning:
            out["reasoning"] = self.reasoning
        return out

    @classmethod
    def from_dict(cls, d, reasoning=None):
        return _from_mapping(d, reasoning)

    def signature(self):
        """Order-free identity used when comparing solutions across trials."""
        return (self.site_type, tuple(sorted(self.surface_binding_atoms)),
                tuple(sorted(self.adsorbate_binding_atoms)), self.orientation)


def _json_objects(text):
    """Top-level balanced JSON objects in ``text``, in order of appearance."""
    decoder = json.JSONDecoder()
    out = []
    i = text.find("{")
    while i != -1:
        try:
            obj, end = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            i = text.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            out.append((i, obj))
        i = text.find("{", end)
    return out


def _norm_word(value, table, field):
    if not isinstance(value, str):
        raise SolutionParseError(f"{field} must be a string, got {value!r}", field)
    key = " ".join(value.strip().lower().replace("_", " ").split())
    key_dash = key.replace(" ", "-")
    for k in (key, key_dash, key.replace("-", " ")):
        if k in table:
            return table[k]
    raise SolutionParseError(f"unrecognized {field} {value!r}", field)


def _norm_elements(value, field):
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    if not isinstance(value, (list, tuple)) or not value:
        raise SolutionParseError(f"{field} must be a non-empty list of element symbols", field)
    out = []
    for v in value:
        try:
            out.append(elements.normalize_symbol(str(v)))
        except KeyError:
            raise SolutionParseError(f"{field} has invalid element {v!r}", field) from None
    return tuple(out)


def _from_mapping(d, reasoning=None):
    lowered = {str(k).strip().lower(): v for k, v in d.items()}
    for key in REQUIRED_KEYS:
        if key not in lowered:
            raise SolutionParseError(f"missing key {key!r}", key)
    text = lowered.get("reasoning", "")
    if reasoning is not None and not text:
        text = reasoning
    return Solution(
        site_type=_norm_word(lowered["site_type"], _SITE_SYNONYMS, "site_type"),
        surface_binding_atoms=_norm_elements(lowered["surface_binding_atoms"],
                                             "surface_binding_atoms"),
        adsorbate_binding_atoms=_norm_elements(lowered["adsorbate_binding_atoms"],
                                               "adsorbate_binding_atoms"),
        orientation=_norm_word(lowered["orientation"], _ORIENTATION_SYNONYMS, "orientation"),
        reasoning=str(text).strip(),
    )


def parse_solution_block(text: str) -> Solution:
    """Parse the last JSON object in a model reply into a Solution."""
    objs = _json_objects(text or "")
    if not objs:
        raise SolutionParseError("no JSON object found in reply", "json")
    start, obj = objs[-1]
    return _from_mapping(obj, reasoning=text[:start])
