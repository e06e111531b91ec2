"""Line-based ``key = value`` file grammar shared by problem, config and
suite files.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Vector values are comma-separated numbers. Keys may repeat only where the
consuming schema allows it (obstacle entries).
"""

from __future__ import annotations


class KvError(ValueError):
    """Malformed or unknown content in a key=value file."""


def parse_kv_text(text: str, source: str = "<string>") -> list[tuple[str, str]]:
    """Parse to an ordered list of (key, value) pairs."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KvError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise KvError(f"{source}:{lineno}: empty key")
        pairs.append((key, value))
    return pairs


def parse_kv_file(path) -> list[tuple[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_text(fh.read(), source=str(path))


def as_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise KvError(f"key {key!r}: expected a number, got {value!r}") from None


def as_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise KvError(f"key {key!r}: expected an integer, got {value!r}") from None


def as_vector(key: str, value: str, n: int | None = None) -> list[float]:
    try:
        vec = [float(tok) for tok in value.split(",")]
    except ValueError:
        raise KvError(f"key {key!r}: expected comma-separated numbers, got {value!r}") from None
    if n is not None and len(vec) != n:
        raise KvError(f"key {key!r}: expected {n} components, got {len(vec)}")
    return vec


def reject_unknown(pairs, allowed, source: str = "file") -> None:
    for key, _ in pairs:
        if key not in allowed:
            raise KvError(f"{source}: unknown key {key!r}")
