"""Consequential decision-making under selective labels."""

__version__ = "1.0.0"
