"""Multi-grained trajectory graph convolutional network for 3D motion prediction."""

__version__ = "0.1.0"
