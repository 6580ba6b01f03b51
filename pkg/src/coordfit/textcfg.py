"""Plain-text key=value config files ('#' comments, one pair per line)."""

from __future__ import annotations


def read_kv_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_kv_file(path, pairs: dict) -> None:
    with open(path, "w") as fh:
        for key, value in pairs.items():
            fh.write(f"{key}={value}\n")
