"""Accelerated path integral control: rollout core, plants, costs, DDP reference and MPC."""

__version__ = "0.1.0"
