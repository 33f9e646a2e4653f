"""Contextual bandits under context drift and over arm taxonomies."""

__version__ = "0.1.0"
