"""Plain ``key = value`` config files (no sections)."""

from __future__ import annotations

import configparser
from pathlib import Path

from .errors import InvalidConfig


def load_kv_config(path: str | Path) -> dict[str, str]:
    """Read a flat key-value file; ``#`` and ``;`` start comments.

    Keys are normalised to lowercase with dashes replaced by underscores so
    the same file can mirror CLI flags.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string("[_]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise InvalidConfig(f"bad config {path}: {exc}") from exc
    return {k.replace("-", "_"): v.strip() for k, v in parser["_"].items()}
