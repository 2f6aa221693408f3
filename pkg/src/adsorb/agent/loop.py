"""Planner and the plan -> critique -> index loop."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from ..errors import AgentFailure, PlannerError, SolutionParseError
from ..registry import adsorbate_from_registry, normalize_key
from ..sites import surface_atoms
from ..structures import Structure, reduce_miller
from . import prompts
from .critic import critique, rule_violations
from .indexer import derive_binding_indices
from .solution import parse_solution_block


@dataclass(frozen=True)
class Query:
    adsorbate_key: str
    catalyst_formula: str
    miller: tuple
    slab_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "adsorbate_key", normalize_key(self.adsorbate_key))
        object.__setattr__(self, "miller", reduce_miller(self.miller))

    def describe(self):
        h, k, l = self.miller
        return (f"Adsorbate: {self.adsorbate_key}\nCatalyst: {self.catalyst_formula}\n"
                f"Surface: ({h}{k}{l})")


@dataclass(frozen=True)
class AgentConfig:
    chat: object
    max_cycles: int = 3
    max_parse_retries: int = 3
    use_llm_critic: bool = False
    use_llm_indexer: bool = False

    def __post_init__(self):
        if self.max_cycles < 1 or self.max_parse_retries < 1:
            raise ValueError("max_cycles and max_parse_retries must be >= 1")


@dataclass(frozen=True)
class AgentResult:
    solution: object
    binding: tuple
    transcript: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.solution, self.binding, self.transcript))

    @property
    def planner_calls(self):
        return sum(1 for t in self.transcript if t["module"] == "planner")


def surface_elements(slab: Structure):
    return sorted({slab.symbols[i] for i in surface_atoms(slab)})


def slab_summary(slab: Structure) -> str:
    top = surface_atoms(slab)
    counts = Counter(slab.symbols[i] for i in top)
    comp = ", ".join(f"{el} x{n}" for el, n in sorted(counts.items()))
    bulk = Counter(slab.symbols)
    bulk_comp = ", ".join(f"{el} x{n}" for el, n in sorted(bulk.items()))
    return (f"Top-layer atoms per cell: {comp}.\n"
            f"Whole slab: {bulk_comp} in {len(set(slab.tags.tolist()))} tag group(s).\n"
            f"Site types available: ontop, bridge, hollow.")


def planner_messages(q: Query, summary: str, feedback=None):
    user = q.describe() + "\n" + summary
    if feedback:
        prev, problems = feedback
        user += ("\n\nA previous proposal was rejected:\n" + json.dumps(prev)
                 + "\nProblems found:\n" + "\n".join(f"- {p}" for p in problems)
                 + "\nPropose a corrected configuration.")
    user += "\n\nEnd your answer with the JSON object described in the instructions."
    return [{"role": "system", "content": prompts.planner_system()},
            {"role": "user", "content": user}]


CORRECTIVE = ("Your reply could not be read: {error}. Answer again and end with a single JSON "
              "object with the keys site_type, surface_binding_atoms, adsorbate_binding_atoms "
              "and orientation.")


def plan_solution(q: Query, summary: str, chat, max_retries=3, transcript=None, feedback=None):
    """Ask the planner; on an unreadable reply, add a corrective turn and try again."""
    messages = planner_messages(q, summary, feedback)
    reply = None
    for _ in range(max_retries):
        reply = chat(messages)
        if transcript is not None:
            transcript.append({"module": "planner", "messages": list(messages), "reply": reply})
        try:
            return parse_solution_block(reply)
        except SolutionParseError as exc:
            messages = messages + [{"role": "assistant", "content": reply},
                                   {"role": "user", "content": CORRECTIVE.format(error=exc)}]
    raise PlannerError(f"planner reply unreadable after {max_retries} attempts", reply)


def run_agent_loop(q: Query, slab: Structure, config: AgentConfig, ads=None) -> AgentResult:
    """Plan, critique and re-plan (at most ``max_cycles`` times), then derive indices."""
    ads = ads or adsorbate_from_registry(q.adsorbate_key)
    surf = surface_elements(slab)
    summary = slab_summary(slab)
    transcript = []
    feedback = None
    for _ in range(config.max_cycles):
        try:
            sol = plan_solution(q, summary, config.chat, config.max_parse_retries,
                                transcript, feedback)
        except PlannerError as exc:
            raise AgentFailure(str(exc), transcript) from exc
        verdict = critique(sol, surf, ads, config.chat, config.use_llm_critic, transcript)
        transcript.append({"module": "critic-rules", "messages": [],
                           "reply": json.dumps(verdict.as_dict(), sort_keys=True)})
        if verdict.accepted:
            break
        feedback = (sol.as_dict(with_reasoning=False), verdict.messages())
    else:
        raise AgentFailure(
            f"no consistent solution after {config.max_cycles} planner/critic cycles; "
            f"last problems: {'; '.join(feedback[1])}", transcript)
    leftover = rule_violations(sol, surf, ads.symbols)
    if leftover:
        raise AgentFailure(f"accepted solution violates {leftover}", transcript)
    binding = derive_binding_indices(sol, ads, config.chat, config.use_llm_indexer, transcript)
    return AgentResult(sol, binding, transcript)
