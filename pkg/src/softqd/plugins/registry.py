from __future__ import annotations

import importlib
from typing import Any, Callable

from softqd.core.errors import DomainError
from softqd.core.interfaces import ProblemDefinition

# Registry name -> (factory path, default keyword arguments).
DOMAINS: dict[str, tuple[str, dict[str, Any]]] = {
    "lp-4": ("softqd.domains.linear_projection:LinearProjectionProblem", {"behavior_dim": 4}),
    "lp-8": ("softqd.domains.linear_projection:LinearProjectionProblem", {"behavior_dim": 8}),
    "lp-16": ("softqd.domains.linear_projection:LinearProjectionProblem", {"behavior_dim": 16}),
    "hill": ("softqd.domains.gaussian_hill:GaussianHillProblem", {}),
}


def load_factory(dotted_path: str) -> Callable[..., ProblemDefinition]:
    try:
        module_path, attr_name = dotted_path.split(":", 1)
        module = importlib.import_module(module_path)
        factory = getattr(module, attr_name)
    except (ValueError, ImportError, AttributeError) as exc:
        raise DomainError(f"Unable to load domain factory: {dotted_path}") from exc
    return factory


def build_problem(name: str, **overrides: Any) -> ProblemDefinition:
    """Build a problem from a registry name or a ``module:Factory`` path."""
    if name in DOMAINS:
        dotted_path, defaults = DOMAINS[name]
    elif ":" in name:
        dotted_path, defaults = name, {}
    else:
        known = ", ".join(sorted(DOMAINS))
        raise DomainError(f"Unknown domain {name!r} (known: {known})")
    factory = load_factory(dotted_path)
    try:
        return factory(**{**defaults, **overrides})
    except (TypeError, ValueError) as exc:
        raise DomainError(f"Invalid options for domain {name!r}: {exc}") from exc
