"""Residual frames + pseudo-3D CNN for action recognition, on a small numpy autograd engine."""

__version__ = "0.1.0"
