"""PPO with prioritized trajectory replay on small discrete-control tasks."""

__version__ = "0.1.0"
