"""Config-driven, resumable cross-language retrieval experiments."""

__version__ = "0.1.0"
