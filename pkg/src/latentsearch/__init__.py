"""latentsearch: compress once, search without decoding, reconstruct on demand.

A single learned analysis pass over an image yields both an entropy-coded
bitstream and a semantic search embedding; both live in one append-only
database.
"""

__version__ = "0.1.0"

from . import errors  # noqa: F401
