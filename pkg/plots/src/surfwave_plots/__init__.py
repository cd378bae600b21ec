"""Offline figures for surfwave artifact directories.

Reads only the published artifact files (manifest, CSVs, OFF mesh) and
refuses directories whose manifest hashes do not match.
"""

from .artifacts import ArtifactError, RunArtifacts, StaleArtifactError
from .figures import plot_energy_decay, plot_surface_fields

__version__ = "0.1.0"
