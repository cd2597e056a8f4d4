"""Entropy coding: integer CDFs, the range coder and the container format."""

from .cdf import (PRECISION, RESIDUAL_CLAMP, CDFError, QuantizedCDF, ScaleTable,
                  build_symbol_cdf, default_scale_table, quantize_cdf, uniform_cdf)
from .container import (BadMagicError, ChecksumError, Container, ContainerError, LengthError,
                        UnsupportedVersionError, parse_container, serialize_container)
from .rangecoder import (CDFTable, CodecError, CorruptStreamError, SymbolRangeError,
                         decode_symbols, encode_symbols, rc_decode, rc_encode)

__all__ = [
    "PRECISION", "RESIDUAL_CLAMP", "CDFError", "QuantizedCDF", "ScaleTable", "build_symbol_cdf",
    "default_scale_table", "quantize_cdf", "uniform_cdf", "BadMagicError", "ChecksumError",
    "Container", "ContainerError", "LengthError", "UnsupportedVersionError", "parse_container",
    "serialize_container", "CDFTable", "CodecError", "CorruptStreamError", "SymbolRangeError",
    "decode_symbols", "encode_symbols", "rc_decode", "rc_encode",
]
