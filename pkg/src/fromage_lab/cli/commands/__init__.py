"""Subcommands of the fromage-lab CLI."""
