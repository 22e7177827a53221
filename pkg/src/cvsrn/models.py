"""Built-in case-study models shipped as ``.srn`` files."""

from __future__ import annotations

from importlib import resources

from .core import Model
from .dsl import parse_model

BUILTIN_NAMES = ("birthdeath", "dimerization", "distmod", "lacoperon")

# models whose truncated state space is small enough for the FSP oracle
FSP_SCOPE = {"birthdeath", "dimerization", "distmod"}


def builtin_source(name: str) -> str:
    if name not in BUILTIN_NAMES:
        raise KeyError(f"unknown built-in model {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    return resources.files("cvsrn").joinpath("models", f"{name}.srn").read_text(encoding="utf-8")


def builtin_model(name: str) -> Model:
    return parse_model(builtin_source(name), name=name)


def builtin_models() -> list[Model]:
    return [builtin_model(name) for name in BUILTIN_NAMES]
