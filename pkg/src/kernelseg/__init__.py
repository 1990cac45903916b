"""Instance segmentation of point clouds with dynamic instance kernels."""

__version__ = "0.1.0"
