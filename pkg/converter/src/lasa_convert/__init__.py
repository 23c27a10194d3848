from .convert import convert, read_shape

__version__ = "0.1.0"
__all__ = ["convert", "read_shape", "__version__"]
