"""Semantics-aware sampling and transmission for remote tracking of Markov sources."""
