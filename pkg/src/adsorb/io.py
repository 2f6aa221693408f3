"""Extended-XYZ reading and writing.

Only the subset needed here is supported: a ``Lattice`` key, optional
``Properties``/``pbc``/``adsorbate_indices`` keys, and atom lines of the form
``Symbol x y z [tag]``.  Any other header ``key=value`` pairs are kept in
``Structure.info``.
"""
from __future__ import annotations

import math
import shlex
from pathlib import Path

import numpy as np

from . import elements
from .errors import ParseError, StructureError
from .structures import TAG_ADSORBATE, TAG_SURFACE, Lattice, Structure

_RESERVED = {"Lattice", "Properties", "pbc", "adsorbate_indices"}


def _parse_bool(text):
    t = text.strip().upper()
    if t in ("T", "TRUE", "1"):
        return True
    if t in ("F", "FALSE", "0"):
        return False
    raise ValueError(text)


def _parse_header(line, lineno):
    try:
        tokens = shlex.split(line)
    except ValueError as exc:
        raise ParseError(f"unbalanced quotes in header ({exc})", lineno) from None
    out = {}
    for tok in tokens:
        if "=" not in tok:
            out[tok] = "T"
            continue
        key, value = tok.split("=", 1)
        out[key] = value
    return out


def _parse_properties(spec, lineno):
    """Return (species_col, pos_col, tags_col or None, total_columns)."""
    parts = spec.split(":")
    if len(parts) % 3:
        raise ParseError(f"malformed Properties {spec!r}", lineno)
    cols = {}
    col = 0
    for name, _kind, width in zip(parts[0::3], parts[1::3], parts[2::3]):
        try:
            w = int(width)
        except ValueError:
            raise ParseError(f"malformed Properties width {width!r}", lineno) from None
        cols[name] = col
        col += w
    if "species" not in cols or "pos" not in cols:
        raise ParseError("Properties must declare species and pos", lineno)
    return cols["species"], cols["pos"], cols.get("tags"), col


def _parse_frame(lines, start):
    """Parse one frame beginning at index ``start``; returns (Structure, next_index)."""
    lineno = start + 1
    try:
        n = int(lines[start].strip())
    except ValueError:
        raise ParseError(f"malformed atom count {lines[start].strip()!r}", lineno) from None
    if n < 1:
        raise ParseError(f"malformed atom count {n}", lineno)
    if start + 1 >= len(lines):
        raise ParseError("missing header line", lineno + 1)
    header = _parse_header(lines[start + 1], lineno + 1)
    if "Lattice" not in header:
        raise ParseError("missing Lattice key", lineno + 1)
    try:
        cell = [float(x) for x in header["Lattice"].split()]
    except ValueError:
        raise ParseError("malformed Lattice value", lineno + 1) from None
    if len(cell) != 9 or not all(math.isfinite(x) for x in cell):
        raise ParseError("Lattice needs 9 finite numbers", lineno + 1)
    pbc = (True, True, True)
    if "pbc" in header:
        try:
            pbc = tuple(_parse_bool(x) for x in header["pbc"].split())
        except ValueError:
            raise ParseError(f"malformed pbc {header['pbc']!r}", lineno + 1) from None
        if len(pbc) != 3:
            raise ParseError("pbc needs three flags", lineno + 1)
    if "Properties" in header:
        sp_col, pos_col, tag_col, ncols = _parse_properties(header["Properties"], lineno + 1)
    else:
        sp_col, pos_col, tag_col, ncols = 0, 1, None, None

    symbols, positions, tags = [], [], []
    first = start + 2
    if first + n > len(lines):
        raise ParseError(f"expected {n} atom lines, found {len(lines) - first}", len(lines))
    for k in range(n):
        ln = first + k + 1
        words = lines[first + k].split()
        if len(words) < pos_col + 3:
            raise ParseError("too few columns in atom line", ln)
        sym = words[sp_col]
        if not elements.is_symbol(sym):
            raise ParseError(f"unknown element {sym!r}", ln)
        try:
            xyz = [float(x) for x in words[pos_col:pos_col + 3]]
        except ValueError:
            raise ParseError("malformed coordinate", ln) from None
        if not all(math.isfinite(x) for x in xyz):
            raise ParseError("non-finite coordinate", ln)
        tag = None
        if tag_col is not None:
            tag = words[tag_col]
        elif ncols is None and len(words) >= 5:
            tag = words[4]
        if tag is not None:
            try:
                tag = int(tag)
            except ValueError:
                raise ParseError(f"malformed tag {tag!r}", ln) from None
        symbols.append(sym)
        positions.append(xyz)
        tags.append(tag)

    if any(t is None for t in tags):
        ads = set()
        if "adsorbate_indices" in header:
            try:
                ads = {int(x) for x in header["adsorbate_indices"].replace(",", " ").split()}
            except ValueError:
                raise ParseError("malformed adsorbate_indices", lineno + 1) from None
        tags = [t if t is not None else (TAG_ADSORBATE if i in ads else TAG_SURFACE)
                for i, t in enumerate(tags)]

    info = {k: v for k, v in header.items() if k not in _RESERVED}
    try:
        s = Structure(Lattice(np.reshape(cell, (3, 3)), pbc), symbols, positions, tags, info)
    except StructureError as exc:
        raise ParseError(str(exc), lineno) from None
    return s, first + n


def parse_extxyz_frames(text):
    lines = text.splitlines()
    frames = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        s, i = _parse_frame(lines, i)
        frames.append(s)
    if not frames:
        raise ParseError("empty file", 1)
    return frames


def parse_extxyz(text) -> Structure:
    frames = parse_extxyz_frames(text)
    if len(frames) > 1:
        raise ParseError(f"expected one frame, found {len(frames)}", 1)
    return frames[0]


def _format_value(v):
    if isinstance(v, bool):
        return "T" if v else "F"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        v = " ".join(_format_value(x) for x in v)
    s = str(v)
    if not s or any(c.isspace() for c in s) or '"' in s or "=" in s:
        return '"' + s.replace('"', "'") + '"'
    return s


def write_extxyz(s: Structure, always_tags=False, info=None) -> str:
    with_tags = always_tags or bool(np.any(s.tags != TAG_SURFACE))
    cell = " ".join(repr(float(x)) for x in s.lattice.cell.reshape(-1))
    props = "species:S:1:pos:R:3" + (":tags:I:1" if with_tags else "")
    pbc = " ".join("T" if p else "F" for p in s.lattice.pbc)
    head = [f'Lattice="{cell}"', f"Properties={props}", f'pbc="{pbc}"']
    extra = dict(s.info)
    if info:
        extra.update(info)
    for k, v in extra.items():
        head.append(f"{k}={_format_value(v)}")
    out = [str(len(s)), " ".join(head)]
    for sym, (x, y, z), t in zip(s.symbols, s.positions, s.tags):
        line = f"{sym:<2s} {x:14.6f} {y:14.6f} {z:14.6f}"
        if with_tags:
            line += f" {int(t)}"
        out.append(line)
    return "\n".join(out) + "\n"


def write_extxyz_frames(frames, always_tags=False) -> str:
    return "".join(write_extxyz(f, always_tags=always_tags) for f in frames)


def read_extxyz(path) -> Structure:
    return parse_extxyz(Path(path).read_text())


def save_extxyz(path, s: Structure, **kw):
    Path(path).write_text(write_extxyz(s, **kw))
