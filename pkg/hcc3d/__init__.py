from hcc3d.version import __version__

__all__ = ["__version__"]
