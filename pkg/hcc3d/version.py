from importlib import metadata

__version__ = metadata.version("hcc3d")
