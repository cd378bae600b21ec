"""Render all figures for one artifact directory.

Usage: surfwave-plots <run-dir>   (or python -m surfwave_plots <run-dir>)
"""

import sys

from .artifacts import ArtifactError
from .figures import plot_energy_decay, plot_surface_fields


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1 or argv[0] in ("-h", "--help"):
        print(__doc__.strip(), file=sys.stderr)
        return 2
    try:
        written = plot_energy_decay(argv[0])
        written += plot_surface_fields(argv[0])
    except (ArtifactError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
