"""percept: numpy building blocks for small vision and audio classifiers.

Submodules are imported on demand (``percept.layers``, ``percept.audio``, ...)
so the command line can cap thread pools before numpy and numba start.
"""

__version__ = "0.1.0"
