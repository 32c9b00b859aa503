"""epnlab: environments, agents, and training harness for rapid task-solving
in freshly sampled worlds."""

__version__ = "0.1.0"
