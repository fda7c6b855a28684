"""Two-fighter adversarial imitation: physics arena, learned rewards, MAPPO."""

__version__ = "0.1.0"
