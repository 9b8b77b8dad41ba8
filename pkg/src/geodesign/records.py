"""Line-oriented structured text records.

Reports serialise to single lines of tab-separated ``name=value`` fields.
Floats are written with ``repr`` so a serialise/parse round trip returns
bit-identical values.  ``None`` is written as ``NA``.
"""

from __future__ import annotations

from .exceptions import ConfigError


def format_record(fields: dict) -> str:
    parts = []
    for name, value in fields.items():
        if value is None:
            text = "NA"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        if "\t" in text or "\n" in text or "=" in text:
            raise ConfigError(f"record value for {name!r} contains a reserved character")
        parts.append(f"{name}={text}")
    return "\t".join(parts)


def parse_record(line: str) -> dict[str, str]:
    out = {}
    for part in line.rstrip("\n").split("\t"):
        if "=" not in part:
            raise ConfigError(f"malformed record field {part!r}")
        name, _, text = part.partition("=")
        out[name] = text
    return out


def parse_float(text: str) -> float | None:
    return None if text == "NA" else float(text)


def parse_int(text: str) -> int | None:
    return None if text == "NA" else int(text)
