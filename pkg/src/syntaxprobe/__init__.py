"""Layer-wise diagnostic probing of recurrent representations."""

__version__ = "0.1.0"
