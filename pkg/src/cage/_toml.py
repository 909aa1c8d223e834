import sys
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def load_toml(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def bundled_path(filename):
    """Filesystem path of a file shipped in ``cage/data``."""
    return resources.files("cage").joinpath("data").joinpath(filename)
