"""Shipped run configurations."""
from importlib.resources import files


def path(name: str):
    """Filesystem path of a shipped recipe, e.g. ``path("rabi.json")``."""
    return files(__name__) / name
