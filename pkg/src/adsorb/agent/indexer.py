"""Binding Indexer: element symbols of a Solution -> adsorbate atom indices."""
from __future__ import annotations

import json
import re

from ..errors import ChatError, DerivationError
from . import prompts


def deterministic_indices(symbols, ads):
    used = set()
    out = []
    for el in symbols:
        for i, s in enumerate(ads.symbols):
            if s == el and i not in used:
                used.add(i)
                out.append(i)
                break
        else:
            have = ads.symbols.count(el)
            raise DerivationError(
                f"adsorbate {ads.key} {list(ads.symbols)} has {have} {el} atom(s), "
                f"cannot bind {list(symbols).count(el)}")
    return tuple(out)


def valid_indices(indices, symbols, ads):
    if len(indices) != len(symbols) or len(set(indices)) != len(indices):
        return False
    for i, el in zip(indices, symbols):
        if not isinstance(i, int) or isinstance(i, bool) or not 0 <= i < len(ads):
            return False
        if ads.symbols[i] != el:
            return False
    return True


def indexer_messages(sol, ads):
    user = (
        f"Adsorbate {ads.key}.\n"
        f"Atomic-number array: {json.dumps(ads.atomic_numbers)}\n"
        f"Element array: {json.dumps(list(ads.symbols))}\n"
        f"Binding atoms: {json.dumps(list(sol.adsorbate_binding_atoms))}"
    )
    return [{"role": "system", "content": prompts.indexer_system()},
            {"role": "user", "content": user}]


def _parse_array(reply):
    found = re.findall(r"\[[^\[\]]*\]", reply or "")
    for chunk in reversed(found):
        try:
            value = json.loads(chunk)
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            return value
    return None


def derive_binding_indices(sol, ads, chat=None, use_llm=False, transcript=None):
    """Lowest unused index per element, position-wise; an LLM answer is used only if valid."""
    base = deterministic_indices(sol.adsorbate_binding_atoms, ads)
    if not (use_llm and chat is not None):
        return base
    messages = indexer_messages(sol, ads)
    try:
        reply = chat(messages)
    except ChatError as exc:
        if transcript is not None:
            transcript.append({"module": "indexer", "messages": messages, "reply": None,
                               "error": str(exc)})
        return base
    if transcript is not None:
        transcript.append({"module": "indexer", "messages": messages, "reply": reply})
    proposed = _parse_array(reply)
    if proposed is not None and valid_indices(proposed, sol.adsorbate_binding_atoms, ads):
        return tuple(proposed)
    return base
