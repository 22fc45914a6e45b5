"""Reactive obstacle avoidance for a quadrotor controlled in a ground vehicle's body frame."""

__version__ = "0.1.0"
