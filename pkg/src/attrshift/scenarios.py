"""Scenario files: parsing, validation, and the built-in fixtures.

A scenario file is YAML with a versioned schema:

    schema_version: 1
    scenarios:
      - id: canonical_1d
        category: custom          # one of the eight attribute categories, or custom
        frames: 32
        dim: 1
        notes: optional free text (e.g. the original prompt pair)
        conditions:
          initial: {mean: [-1.0], var: [0.1]}
          final:   {mean: [ 1.0], var: [0.1]}
          neutral: {mean: [ 0.0], var: [0.1]}
          # further custom-named conditions are allowed

``initial``, ``final`` and ``neutral`` are required; initial and final must
differ. Mean/var vectors must have length ``dim`` with positive variances.

Built-in scenarios ship with the package and are addressable from the CLI
as ``builtin:<name>`` (e.g. ``builtin:canonical_1d``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .denoisers import COND_FINAL, COND_INITIAL, COND_NEUTRAL, COND_NULL, GaussianCondition
from .errors import NonPositiveVariance, ParseError, ValidationError

SCENARIO_SCHEMA_VERSION = 1

# The eight attribute-transition categories plus a free-form bucket.
CATEGORIES = ("age", "beard", "makeup", "hair", "color", "material", "light", "weather", "custom")

REQUIRED_CONDITIONS = (COND_INITIAL, COND_FINAL, COND_NEUTRAL)

BUILTIN_PREFIX = "builtin:"


@dataclass(frozen=True)
class ScenarioSpec:
    """One benchmark scenario: dimensions plus named Gaussian conditions."""

    id: str
    category: str
    frames: int
    dim: int
    conditions: Mapping[str, GaussianCondition]
    notes: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "conditions", dict(self.conditions))
        self._validate()

    def _validate(self) -> None:
        where = f"scenario {self.id!r}"
        if not self.id:
            raise ValidationError("scenario id must be a non-empty string")
        if self.category not in CATEGORIES:
            raise ValidationError(f"{where}: unknown category {self.category!r}; expected one of {CATEGORIES}")
        if self.frames < 1 or self.dim < 1:
            raise ValidationError(f"{where}: frames and dim must be >= 1")
        for name in REQUIRED_CONDITIONS:
            if name not in self.conditions:
                raise ValidationError(f"{where}: missing required condition {name!r}")
        if COND_NULL in self.conditions:
            raise ValidationError(f"{where}: {COND_NULL!r} is reserved for the unconditional score")
        for name, cond in self.conditions.items():
            if cond.dim != self.dim:
                raise ValidationError(
                    f"{where}: condition {name!r} has dim {cond.dim}, scenario dim is {self.dim}"
                )
        ini, fin = self.conditions[COND_INITIAL], self.conditions[COND_FINAL]
        if np.array_equal(ini.mean, fin.mean) and np.array_equal(ini.var, fin.var):
            raise ValidationError(f"{where}: initial and final conditions are identical")

    def attribute_axis(self) -> np.ndarray:
        """Unit vector from the initial to the final condition mean.

        Falls back to the first coordinate axis if the means coincide (the
        conditions then differ only in variance).
        """
        delta = self.conditions[COND_FINAL].mean - self.conditions[COND_INITIAL].mean
        norm = np.linalg.norm(delta)
        if norm == 0.0:
            axis = np.zeros(self.dim)
            axis[0] = 1.0
            return axis
        return delta / norm


def _parse_condition(raw: object, where: str) -> GaussianCondition:
    if not isinstance(raw, dict) or set(raw) != {"mean", "var"}:
        raise ParseError(f"{where}: condition must be a mapping with exactly 'mean' and 'var'")
    try:
        return GaussianCondition(mean=np.asarray(raw["mean"], dtype=np.float64),
                                 var=np.asarray(raw["var"], dtype=np.float64))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from exc
    except NonPositiveVariance as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _parse_scenario(raw: object, index: int) -> ScenarioSpec:
    where = f"scenarios[{index}]"
    if not isinstance(raw, dict):
        raise ParseError(f"{where}: expected a mapping, got {type(raw).__name__}")
    known = {"id", "category", "frames", "dim", "conditions", "notes"}
    unknown = set(raw) - known
    if unknown:
        raise ParseError(f"{where}: unknown fields {sorted(unknown)}")
    for req in ("id", "category", "frames", "dim", "conditions"):
        if req not in raw:
            raise ParseError(f"{where}: missing field {req!r}")
    if not isinstance(raw["id"], str):
        raise ParseError(f"{where}: field 'id' must be a string")
    if not isinstance(raw["frames"], int) or not isinstance(raw["dim"], int):
        raise ParseError(f"{where} ({raw['id']!r}): 'frames' and 'dim' must be integers")
    if not isinstance(raw["conditions"], dict):
        raise ParseError(f"{where} ({raw['id']!r}): 'conditions' must be a mapping")
    conditions = {
        str(name): _parse_condition(value, f"{where}.conditions.{name}")
        for name, value in raw["conditions"].items()
    }
    return ScenarioSpec(
        id=raw["id"],
        category=str(raw["category"]),
        frames=raw["frames"],
        dim=raw["dim"],
        conditions=conditions,
        notes=str(raw.get("notes", "")),
    )


def parse_scenarios(text: str, source: str = "<string>") -> list[ScenarioSpec]:
    """Parse scenario YAML text; raises ParseError/ValidationError with positions."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        pos = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"{source}: invalid YAML{pos}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: top level must be a mapping")
    version = doc.get("schema_version")
    if version != SCENARIO_SCHEMA_VERSION:
        raise ParseError(
            f"{source}: schema_version must be {SCENARIO_SCHEMA_VERSION}, got {version!r}"
        )
    raw_list = doc.get("scenarios")
    if not isinstance(raw_list, list) or not raw_list:
        raise ParseError(f"{source}: 'scenarios' must be a non-empty list")
    specs = [_parse_scenario(raw, i) for i, raw in enumerate(raw_list)]
    seen: dict[str, int] = {}
    for i, spec in enumerate(specs):
        if spec.id in seen:
            raise ValidationError(
                f"{source}: duplicate scenario id {spec.id!r} (entries {seen[spec.id]} and {i})"
            )
        seen[spec.id] = i
    return specs


def load_scenarios(path: str | Path) -> list[ScenarioSpec]:
    """Load and validate a scenario file; ``builtin:<name>`` resolves to shipped data."""
    text, source = _read_scenario_source(path)
    return parse_scenarios(text, source=source)


def builtin_scenario_names() -> list[str]:
    root = resources.files("attrshift").joinpath("data/scenarios")
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def _read_scenario_source(path: str | Path) -> tuple[str, str]:
    path_str = str(path)
    if path_str.startswith(BUILTIN_PREFIX):
        name = path_str[len(BUILTIN_PREFIX):]
        ref = resources.files("attrshift").joinpath(f"data/scenarios/{name}.yaml")
        if not ref.is_file():
            raise ParseError(
                f"unknown builtin scenario file {name!r}; available: {builtin_scenario_names()}"
            )
        return ref.read_text(encoding="utf-8"), path_str
    p = Path(path)
    if not p.is_file():
        raise ParseError(f"scenario file not found: {p}")
    return p.read_text(encoding="utf-8"), str(p)
