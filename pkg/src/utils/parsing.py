"""
Parsing of the small call syntax used in run files, e.g. ``gaussian(0,0,0,1)``.
"""

import re
from typing import List, Tuple

_CALL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$")


def parse_call(spec: str) -> Tuple[str, List[str]]:
    """
    Splits ``name(arg1, arg2, ...)`` into its name and raw argument strings.

    Args:
        spec (str): The call expression.

    Returns:
        Tuple[str, List[str]]: Lower-cased name and stripped arguments.

    Raises:
        ValueError: If the expression is not a call.
    """
    match = _CALL.match(spec)
    if match is None:
        raise ValueError(f"expected name(args...), got {spec!r}")
    name, body = match.groups()
    args = [a.strip() for a in body.split(",")] if body.strip() else []
    return name.lower(), args


def parse_floats(args: List[str], expected: int, name: str) -> List[float]:
    if len(args) != expected:
        raise ValueError(f"{name} takes {expected} arguments, got {len(args)}")
    try:
        return [float(a) for a in args]
    except ValueError as e:
        raise ValueError(f"{name}: arguments must be numbers, got {args}") from e


def split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]
