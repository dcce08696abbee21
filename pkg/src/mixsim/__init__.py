"""mixsim: closed-loop mixed-reality driving simulation at desk scale."""

__version__ = "0.1.0"
