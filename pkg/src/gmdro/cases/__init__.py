"""Bundled example cases."""

import importlib.resources


def path(name):
    """Filesystem path of a bundled case (e.g. 'case4', 'epri21')."""
    res = importlib.resources.files(__package__) / f"{name}.json"
    if not res.is_file():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return str(res)
