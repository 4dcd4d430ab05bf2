"""Imitation learning from observation with automatic discount scheduling."""
