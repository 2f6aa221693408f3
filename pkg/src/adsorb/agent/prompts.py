"""Prompt templates shipped as editable text assets."""
from __future__ import annotations

from importlib import resources

NAMES = ("reasoning-questions", "knowledge-prompt", "planner-system", "critic-system",
         "indexer-system")


def load(name: str) -> str:
    if name not in NAMES:
        raise KeyError(f"unknown prompt {name!r}; available: {', '.join(NAMES)}")
    return resources.files("adsorb").joinpath(f"assets/prompts/{name}.txt").read_text().strip()


def planner_system() -> str:
    return load("planner-system").format(reasoning_questions=load("reasoning-questions"))


def critic_system() -> str:
    return load("critic-system").format(knowledge=load("knowledge-prompt"))


def indexer_system() -> str:
    return load("indexer-system")
