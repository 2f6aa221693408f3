"""Rule-based Critic with optional advisory LLM review.

Rules R1 and R3 check the surface side of a Solution, R2 and R4 the
adsorbate side.  The LLM can add objections but never clear a rule failure.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

from ..errors import ChatError
from . import prompts
from .solution import Solution, _json_objects

SITE_ARITY = {"ontop": (1,), "bridge": (2,), "hollow": (3, 4)}
SURFACE_RULES = ("R1", "R3")
ADSORBATE_RULES = ("R2", "R4")


@dataclass(frozen=True)
class CritiqueVerdict:
    accepted: bool
    violations: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "violations", tuple(tuple(v) for v in self.violations))
        if self.accepted != (not self.violations):
            raise ValueError("a verdict is accepted exactly when it has no violations")

    def messages(self):
        return [f"[{rule}] {msg}" for rule, msg in self.violations]

    def as_dict(self):
        return {"accepted": self.accepted,
                "violations": [{"rule": r, "message": m} for r, m in self.violations]}


def rule_violations(sol: Solution, surface_elements, ads_symbols):
    out = []
    n_surf = len(sol.surface_binding_atoms)
    want = SITE_ARITY[sol.site_type]
    if n_surf not in want:
        need = " or ".join(str(x) for x in want)
        out.append(("R1", f"a {sol.site_type} site involves {need} surface atom(s), "
                          f"but {n_surf} were given {list(sol.surface_binding_atoms)}"))
    n_ads = len(sol.adsorbate_binding_atoms)
    if sol.orientation == "end-on" and n_ads != 1:
        out.append(("R2", f"end-on binding uses exactly one adsorbate atom, "
                          f"but {n_ads} were given {list(sol.adsorbate_binding_atoms)}"))
    if sol.orientation == "side-on" and n_ads < 2:
        out.append(("R2", f"side-on binding needs at least two adsorbate atoms, "
                          f"but {n_ads} was given"))
    missing = sorted(set(sol.surface_binding_atoms) - set(surface_elements))
    if missing:
        out.append(("R3", f"surface binding atoms {missing} are not in the surface layer "
                          f"(present: {sorted(set(surface_elements))})"))
    have = Counter(ads_symbols)
    need = Counter(sol.adsorbate_binding_atoms)
    excess = sorted(el for el in need if need[el] > have.get(el, 0))
    if excess:
        out.append(("R4", f"adsorbate binding atoms {list(sol.adsorbate_binding_atoms)} are "
                          f"not contained in the adsorbate {list(ads_symbols)}"))
    return out


def critic_messages(sol: Solution, surface_elements, ads, context=""):
    user = (
        f"Adsorbate {ads.key} with atoms {list(ads.symbols)}.\n"
        f"Surface layer elements: {sorted(set(surface_elements))}.\n"
        + (f"{context}\n" if context else "")
        + "Proposal:\n" + json.dumps(sol.as_dict(with_reasoning=False))
    )
    return [{"role": "system", "content": prompts.critic_system()},
            {"role": "user", "content": user}]


def _llm_issues(reply):
    objs = _json_objects(reply or "")
    if not objs:
        return None
    doc = objs[-1][1]
    if doc.get("accept") is True:
        return []
    issues = doc.get("issues") or ["rejected without a stated reason"]
    return [str(i) for i in issues]


def critique(sol: Solution, surface_elements, ads, chat=None, use_llm=False, transcript=None):
    violations = rule_violations(sol, surface_elements, ads.symbols)
    if use_llm and chat is not None:
        messages = critic_messages(sol, surface_elements, ads)
        try:
            reply = chat(messages)
        except ChatError as exc:
            reply = None
            if transcript is not None:
                transcript.append({"module": "critic", "messages": messages,
                                   "reply": None, "error": str(exc)})
        else:
            if transcript is not None:
                transcript.append({"module": "critic", "messages": messages, "reply": reply})
        issues = _llm_issues(reply) if reply is not None else None
        for issue in issues or []:
            violations.append(("LLM", issue))
    return CritiqueVerdict(not violations, violations)
