"""Behavioral simulator of memory-immersed collaborative digitization for CiM arrays."""

__version__ = "0.1.0"
