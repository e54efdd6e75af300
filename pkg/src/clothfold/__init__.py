"""Language-guided cloth folding pipeline: planning, perception, simulation,
training, and evaluation for desk-scale pick-and-place folding."""

__version__ = "0.1.0"
