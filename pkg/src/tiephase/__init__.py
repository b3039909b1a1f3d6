"""Transport-of-intensity phase imaging with twin-beam noise subtraction."""

__version__ = "0.1.0"
