"""Pricing and routing toolkit for mixed-autonomy parallel road networks."""

__version__ = "0.1.0"
