"""Packaged example networks and scenarios.

Four networks ship with the package: a two-link corridor, a diamond with
one route choice, and two braided corridors (single and doubled) for
scaling runs.  ``parallel3.ttd.yaml`` is a ready-made travel time
distribution for the three-node network used throughout the unit tests.
"""

from importlib import resources
from pathlib import Path

# name -> (network file, scenario file)
FIXTURES = {
    "twolinks": ("twolinks.net.yaml", "twolinks.scn.yaml"),
    "diamond": ("diamond.net.yaml", "diamond.scn.yaml"),
    "sf": ("sf.net.yaml", "sf.scn.yaml"),
    "twosf": ("twosf.net.yaml", "twosf.scn.yaml"),
}


def fixture_path(name: str) -> Path:
    """Absolute path of a packaged fixture file."""
    path = Path(str(resources.files(__package__).joinpath(name)))
    if not path.exists():
        known = sorted(p.name for p in path.parent.glob("*.yaml"))
        raise FileNotFoundError(f"no fixture {name!r}; available: {known}")
    return path
