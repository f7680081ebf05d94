"""Additive-Schwarz preconditioning for finite cell discretizations on
multi-level hp meshes."""

__version__ = "0.1.0"
