"""Schema-aware text-to-SQL semantic parsing toolkit."""

__version__ = "0.1.0"
