"""rml2sigset: convert RML2016.10a/b pickles and RML2018.01a HDF5 files
into SIGSET containers consumable by any SIGSET-speaking trainer."""

from .convert import RmlSource, convert, detect_source
from .sigset import read_sigset, write_sigset_streaming

__all__ = ["RmlSource", "convert", "detect_source",
           "read_sigset", "write_sigset_streaming"]

__version__ = "0.1.0"
