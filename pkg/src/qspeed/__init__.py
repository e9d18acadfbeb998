"""Speed of quantum states under unitary evolution as a witness of useful asymmetry and entanglement."""

__version__ = "0.1.0"
