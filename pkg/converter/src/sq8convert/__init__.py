"""TFLite flatbuffer to SQ8 converter.

Talks to the secure engine exclusively through the SQ8/SQ8I file formats;
the engine package is never imported.
"""

from .convert import ConversionError, convert

__version__ = "0.1.0"

__all__ = ["convert", "ConversionError", "__version__"]
