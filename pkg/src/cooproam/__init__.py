"""Cooperative roaming: fast 802.11 handoffs through peer cooperation."""

__version__ = "0.1.0"
