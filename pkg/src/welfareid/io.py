"""Configuration files, config hashing and deterministic CSV/JSON output."""
import csv
import hashlib
import json

import numpy as np


class ConfigError(ValueError):
    """Bad configuration file or value."""


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment, blank lines are ignored."""
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key = key.strip().replace("-", "_")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of the effective configuration."""
    text = json.dumps({k: _plain(v) for k, v in config.items()}, sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows, digest):
    """CSV with a leading ``# config_sha256=...`` line and a mandatory header row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_sha256={digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path, payload, digest):
    body = {"config_sha256": digest, **{k: _plain(v) for k, v in payload.items()}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")
