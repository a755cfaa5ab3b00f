"""
Run Manifest Module.

Every pipeline stage writes a manifest next to its outputs listing each file it produced with a
SHA-256 checksum, so reruns can be compared file by file.
"""

import hashlib
import logging
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field

from config import TOOL_VERSION

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


class RunManifest(BaseModel):
    command: str
    config_hash: str = ""
    seed: Optional[int] = None
    inputs: list[str] = Field(default_factory=list)
    outputs: dict[str, str] = Field(default_factory=dict)
    tool_version: str = TOOL_VERSION
    wall_time_s: float = 0.0

    def add_output(self, path: Path, root: Path):
        """Records a written file, keyed by its path relative to the stage directory."""
        self.outputs[Path(path).relative_to(root).as_posix()] = sha256_file(path)

    def write(self, directory: Path) -> Path:
        path = Path(directory) / MANIFEST_NAME
        path.write_text(self.model_dump_json(indent=2))
        logger.info(f"Wrote manifest for '{self.command}' with {len(self.outputs)} outputs to {path}")
        return path

    @classmethod
    def read(cls, directory: Path) -> "RunManifest":
        return cls.model_validate_json((Path(directory) / MANIFEST_NAME).read_text())
