"""Per-run manifest: run config, status and file checksums."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

MANIFEST = "manifest"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def file_entries(run_dir, names):
    run_dir = Path(run_dir)
    out = []
    for name in sorted(names):
        path = run_dir / name
        out.append({"name": name, "bytes": path.stat().st_size, "sha256": sha256_file(path)})
    return out


def write_manifest(run_dir, run_id, config, status, names, **extra) -> dict:
    data = {"run_id": run_id, "status": status, "config": config.to_dict(),
            "files": file_entries(run_dir, names)}
    data.update(extra)
    Path(run_dir, MANIFEST).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return data
