"""Multi-agent actor-critic replenishment for a warehouse feeding several stores."""

__version__ = "0.1.0"
