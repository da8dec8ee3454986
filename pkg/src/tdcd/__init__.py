"""Simulator for tiered decentralized coordinate descent over vertically and
horizontally partitioned data."""

__version__ = "0.1.0"
