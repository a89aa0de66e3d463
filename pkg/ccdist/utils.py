import hashlib
import json
import os
from typing import Any, Dict, List, Sequence

import numpy as np

from ccdist.exceptions import DimensionMismatch, SpecParseError, UnknownFixture
from ccdist.groups import (
    GroupPoint,
    StepTwoGroup,
    builtin_group,
    group_from_dict,
    group_to_dict,
)


def parse_group_spec(text: str) -> StepTwoGroup:
    """
    Function to parse a Group-spec JSON document

    Args:
    text (str): JSON text of the form {"q": int, "m": int, "U": [[...], ...]}

    Returns:
    StepTwoGroup: The validated group

    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecParseError(
            f"Invalid group spec JSON at line {e.lineno}, column {e.colno}: {e.msg}",
            line=e.lineno,
            column=e.colno,
        )
    return group_from_dict(data)


def load_group_spec(file_path: str) -> StepTwoGroup:
    """
    Function to load a group from a Group-spec JSON file

    Args:
    file_path (str): Path to the json file holding the group spec

    Returns:
    StepTwoGroup: The validated group

    """
    if not os.path.exists(file_path):
        raise ValueError("Invalid file path provided, File may not exist")
    if not str(file_path).endswith(".json"):
        raise ValueError("Invalid file format. Only JSON files are allowed")
    with open(file_path, "r", encoding="utf8") as f:
        return parse_group_spec(f.read())


ALIASES = {"heisenberg": "heisenberg(1)"}


def resolve_group(name_or_path: str) -> StepTwoGroup:
    """A fixture name such as heisenberg(1), or the path of a Group-spec file."""
    name_or_path = ALIASES.get(str(name_or_path).strip().lower(), name_or_path)
    if str(name_or_path).endswith(".json"):
        return load_group_spec(name_or_path)
    try:
        return builtin_group(name_or_path)
    except UnknownFixture:
        if os.path.exists(name_or_path):
            return load_group_spec(name_or_path)
        raise


def group_to_spec(group: StepTwoGroup) -> str:
    return json.dumps(group_to_dict(group), sort_keys=True, separators=(",", ":"))


def group_digest(group: StepTwoGroup) -> str:
    """SHA-256 of the canonical spec, independent of the group's name."""
    data = group_to_dict(group)
    data.pop("name")
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf8")).hexdigest()


def _parse_floats(text: str, what: str) -> List[float]:
    parts = [p.strip() for p in text.split(",")]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise SpecParseError(f"Invalid {what} component in '{text}'")


def parse_point(group: StepTwoGroup, text: str) -> GroupPoint:
    """
    Function to parse the point syntax "x1,...,xq;t1,...,tm"

    Args:
    group (StepTwoGroup): The group the point belongs to
    text (str): The point

    Returns:
    GroupPoint: The parsed point

    """
    if text.count(";") != 1:
        raise SpecParseError("Point must have the form 'x1,...,xq;t1,...,tm'")
    x_text, t_text = text.split(";")
    x = _parse_floats(x_text, "x")
    t = _parse_floats(t_text, "t")
    if len(x) != group.q or len(t) != group.m:
        raise DimensionMismatch(
            f"Point needs {group.q} horizontal and {group.m} vertical components"
        )
    try:
        return GroupPoint.of(x, t)
    except ValueError as e:
        raise SpecParseError(str(e))


def parse_floats(text: str) -> List[float]:
    if not text.strip():
        return []
    return _parse_floats(text, "list")


def format_point(g: GroupPoint) -> str:
    return f"{format_vector(g.x)};{format_vector(g.t)}"


def format_float(value: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return f"{value:.17g}"


def format_vector(values: Sequence[float]) -> str:
    return ",".join(format_float(float(v)) for v in values)


def to_jsonable(value: Any) -> Any:
    """Converts numpy scalars and arrays inside nested containers to plain Python."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def dumps(payload: Dict[str, Any]) -> str:
    """Deterministic JSON; floats keep full round-trip precision."""
    return json.dumps(to_jsonable(payload), sort_keys=True, allow_nan=False)
