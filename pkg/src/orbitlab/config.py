"""Experiment configuration: loading, schema validation and pre-flight diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .errors import ConfigError
from .freegroup import SubgroupChain, ball_size

DEFAULT_GRIDS = {
    "free_quotient": {"n_even_max": 8},
    "free_sphere2": {"n_even_max": 5},
}


def load_schema() -> dict:
    return json.loads(resources.files("orbitlab").joinpath("schema/experiment.schema.json").read_text())


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.message}"


def max_radius(config: dict) -> int:
    grid = config.get("grid", {})
    radii = grid.get("radii")
    if radii:
        return max(radii)
    n = grid.get("n_even_max", DEFAULT_GRIDS.get(config["kind"], {}).get("n_even_max", 1))
    return 2 * n


def group_rank(config: dict) -> int:
    gens = config.get("group", {}).get("generators", "sanov")
    if gens == "lps5":
        return 3
    if isinstance(gens, list):
        return len(gens)
    return 2


def max_T(config: dict) -> float:
    kind = config["kind"]
    if kind == "monotonicity_audit":
        return float(config["monotonicity"].get("T_max", 200.0))
    Ts = config.get("grid", {}).get("T")
    return float(max(Ts)) if Ts else 0.0


def estimated_elements(config: dict) -> float:
    """Predicted number of group elements the largest ball holds."""
    kind = config["kind"]
    if kind in ("free_quotient", "free_sphere2"):
        return float(ball_size(group_rank(config), max_radius(config)))
    if kind == "ratio" and config.get("ratio", {}).get("setting", "plane") == "finite":
        return float(ball_size(group_rank(config), max_radius(config)))
    T = max_T(config)
    return 6.0 * T * T


def build_chain(config: dict) -> SubgroupChain | None:
    from .matgroup import CongruenceQuotient
    from .experiments import resolve_generators
    group = config.get("group", {})
    chain = group.get("chain")
    if not chain:
        return None
    gens = resolve_generators(group.get("generators", "elementary"))
    levels = [CongruenceQuotient(N).left_regular_action(gens, name=f"SL2(Z/{N})") for N in chain]
    return SubgroupChain(levels, base=0)


def validate(config: dict, budget_override: int | None = None) -> list:
    """Schema errors, budget estimates and chain checks; never raises."""
    diags = []
    validator = jsonschema.Draft202012Validator(load_schema())
    for err in sorted(validator.iter_errors(config), key=lambda e: list(e.path)):
        where = "/".join(str(p) for p in err.path) or "<root>"
        diags.append(Diagnostic("error", f"schema: {where}: {err.message}"))
    if diags:
        return diags
    budget = budget_override if budget_override is not None else config["budget"]
    est = estimated_elements(config)
    level = "warning" if est > budget else "info"
    diags.append(Diagnostic(level, f"predicted largest ball ~{est:.3g} elements (budget {budget})"))
    if config.get("group", {}).get("chain"):
        try:
            build_chain(config)
        except (ConfigError, KeyError, ValueError) as exc:
            diags.append(Diagnostic("error", f"subgroup chain: {exc}"))
    return diags


def has_errors(diags) -> bool:
    return any(d.level == "error" for d in diags)
