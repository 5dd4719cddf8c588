"""Multi-user meeting rooms built from calibrated spherical panoramas."""

__version__ = "0.1.0"
