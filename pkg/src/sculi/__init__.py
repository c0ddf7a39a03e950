"""Side-channel simulation of a B-233 kP accelerator and a horizontal attack on it."""

__version__ = "0.1.0"
