"""Small reference graphs with hidden vertices, shipped as JSON."""
from __future__ import annotations

import json
from importlib import resources

from ..graph import CausalGraph

FIXTURES = ("fig1a", "fig1b", "fig1c", "fig1d", "figA1a", "figA1b", "figC1")


def load_fixture(name: str) -> CausalGraph:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    text = resources.files(__package__).joinpath(f"{name}.json").read_text(encoding="utf-8")
    return CausalGraph.from_dict(json.loads(text))


def fixture_path(name: str):
    return resources.files(__package__).joinpath(f"{name}.json")
