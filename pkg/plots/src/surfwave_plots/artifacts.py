"""Read-only access to surfwave artifact directories.

Everything here goes through the published file interfaces (manifest,
key = value reports, CSVs, the OFF mesh); nothing imports the simulation
package. Hashes are re-checked before any data is handed out, so stale or
tampered artifact directories are refused.
"""

import csv
import hashlib
from pathlib import Path

import numpy as np


class ArtifactError(RuntimeError):
    """Missing or unusable artifact files."""


class StaleArtifactError(ArtifactError):
    """Manifest hashes do not match the file contents."""


def read_keyvalues(path) -> dict:
    out = {}
    with open(path) as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def read_csv_columns(path) -> dict:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [row for row in reader if row]
    return {name: np.array([float(r[j]) for r in rows]) for j, name in enumerate(header)}


def read_off(path):
    """Minimal OFF reader: (vertices (V,3), triangles (F,3))."""
    lines = []
    with open(path) as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append(line)
    if not lines or lines[0] != "OFF":
        raise ArtifactError(f"{path}: not an OFF file")
    nv, nf = (int(x) for x in lines[1].split()[:2])
    verts = np.array([[float(x) for x in lines[2 + i].split()] for i in range(nv)])
    tris = np.array([[int(x) for x in lines[2 + nv + i].split()[1:4]] for i in range(nf)])
    return verts, tris


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class RunArtifacts:
    """One artifact directory with verified hashes.

    Loads the manifest on construction and checks every listed file before
    exposing any table; plotting code never writes to the directory except
    for new figure files.
    """

    def __init__(self, run_dir):
        self.run_dir = Path(run_dir)
        manifest_path = self.run_dir / "manifest.txt"
        if not manifest_path.exists():
            raise ArtifactError(f"no manifest in {self.run_dir}")
        self.manifest = read_keyvalues(manifest_path)
        self._verify()

    def _verify(self):
        for key, recorded in self.manifest.items():
            if not key.startswith("file."):
                continue
            path = self.run_dir / key[len("file."):]
            if not path.exists():
                raise StaleArtifactError(f"missing artifact {path.name}")
            if _sha256(path) != recorded:
                raise StaleArtifactError(f"hash mismatch for {path.name}")

    def _managed(self, name) -> Path:
        path = self.run_dir / name
        if f"file.{name}" not in self.manifest or not path.exists():
            raise ArtifactError(f"artifact {name} not present in {self.run_dir}")
        return path

    def trajectory(self) -> dict:
        return read_csv_columns(self._managed("trajectory.csv"))

    def envelope(self) -> dict:
        return read_csv_columns(self._managed("envelope.csv"))

    def fields(self) -> dict:
        return read_csv_columns(self._managed("fields.csv"))

    def certification(self) -> dict:
        return read_keyvalues(self._managed("certification.txt"))

    def mesh(self):
        return read_off(self._managed("mesh.off"))
