"""Run manifest: resolved config, stage status and sha256 digests of outputs."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .. import __version__
from ..io import SCHEMA_VERSION, write_json

MANIFEST_NAME = "manifest.json"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class StageStatus:
    status: str  # pass | fail | error
    outputs: list[str] = field(default_factory=list)
    error: str | None = None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"status": self.status, "outputs": self.outputs, "error": self.error, "seconds": round(self.seconds, 3)}


@dataclass
class RunManifest:
    config: dict
    seed: int
    root: Path
    started: str = field(default_factory=now_iso)
    finished: str | None = None
    stages: dict[str, StageStatus] = field(default_factory=dict)
    digests: dict[str, str] = field(default_factory=dict)
    tool_version: str = __version__

    @property
    def exit_code(self) -> int:
        return 0 if self.stages and all(s.status == "pass" for s in self.stages.values()) else 1

    def key(self, path: Path) -> str:
        """Digest key: path relative to the manifest directory when inside it."""
        path = Path(path).resolve()
        try:
            return path.relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return str(path)

    def record(self, stage: str, status: StageStatus) -> None:
        self.stages[stage] = status
        for p in status.outputs:
            self.digests[p] = sha256_file(self.resolve_path(p))

    def resolve_path(self, key: str) -> Path:
        p = Path(key)
        return p if p.is_absolute() else self.root / p

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool": "nonhyp",
            "tool_version": self.tool_version,
            "config": self.config,
            "seed": self.seed,
            "started": self.started,
            "finished": self.finished,
            "stages": {k: v.to_dict() for k, v in self.stages.items()},
            "digests": dict(sorted(self.digests.items())),
            "exit_code": self.exit_code,
        }

    def write(self) -> Path:
        self.finished = self.finished or now_iso()
        return write_json(self.root / MANIFEST_NAME, self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        m = cls(data["config"], data["seed"], path.parent, data.get("started", ""), data.get("finished"))
        m.tool_version = data.get("tool_version", "")
        for name, st in data.get("stages", {}).items():
            m.stages[name] = StageStatus(st["status"], list(st.get("outputs", [])), st.get("error"), st.get("seconds", 0.0))
        m.digests = dict(data.get("digests", {}))
        return m


@dataclass
class VerifyReport:
    ok: list[str] = field(default_factory=list)
    modified: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.modified and not self.missing

    def lines(self) -> list[str]:
        out = [f"OK       {k}" for k in self.ok]
        out += [f"MODIFIED {k}" for k in self.modified]
        out += [f"MISSING  {k}" for k in self.missing]
        return out


def verify_manifest(manifest: RunManifest) -> VerifyReport:
    """Recompute every recorded digest and classify the outputs."""
    rep = VerifyReport()
    for key, digest in sorted(manifest.digests.items()):
        path = manifest.resolve_path(key)
        if not path.is_file():
            rep.missing.append(key)
        elif sha256_file(path) != digest:
            rep.modified.append(key)
        else:
            rep.ok.append(key)
    return rep
