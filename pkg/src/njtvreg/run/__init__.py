"""Command-line entry points for njtvreg."""
