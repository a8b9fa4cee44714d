"""Parameter checkpoints: a manifest plus one ATNP blob per tensor.

A checkpoint is a directory containing manifest.txt (key=value lines:
format_version, head, seed, and `tensor.<name>.dims = d1xd2`) and
<name>.atnp files.  Loading validates the version and every tensor's
dims against the manifest.
"""

from __future__ import annotations

import os

import numpy as np

from .atnp import read_atnp, write_atnp

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Version mismatch, dim mismatch, or missing/truncated file."""


def save_checkpoint(path, params: dict, head: str, seed: int,
                    extra: dict | None = None) -> None:
    os.makedirs(path, exist_ok=True)
    lines = [f"format_version={FORMAT_VERSION}", f"head={head}", f"seed={seed}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    for name in sorted(params):
        arr = np.asarray(params[name], dtype=np.float64)
        dims = "x".join(str(d) for d in arr.shape)
        lines.append(f"tensor.{name}.dims={dims}")
        write_atnp(os.path.join(path, f"{name}.atnp"), arr)
    with open(os.path.join(path, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Returns (params, manifest) after validating dims; raises CheckpointError."""
    manifest_path = os.path.join(path, "manifest.txt")
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(manifest_path)
    manifest = {}
    with open(manifest_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                k, v = line.split("=", 1)
                manifest[k] = v
    if manifest.get("format_version") != str(FORMAT_VERSION):
        raise CheckpointError(
            f"unsupported checkpoint version {manifest.get('format_version')!r}")
    params = {}
    for key, val in manifest.items():
        if not (key.startswith("tensor.") and key.endswith(".dims")):
            continue
        name = key[len("tensor."):-len(".dims")]
        want = tuple(int(d) for d in val.split("x"))
        blob = os.path.join(path, f"{name}.atnp")
        if not os.path.exists(blob):
            raise CheckpointError(f"missing tensor blob {name}.atnp")
        arr = read_atnp(blob)
        if arr.shape != want:
            raise CheckpointError(
                f"tensor {name}: manifest says {want}, file has {arr.shape}")
        params[name] = arr
    return params, manifest
