"""Range coding of integer symbols against frozen or adaptive frequency tables."""

from .coder import RangeDecoder, RangeEncoder, decode, encode, table_cross_entropy
from .tables import CdfTable, build_table, freeze_gaussian_tables, snap_gaussian, table_from_cdf

__all__ = [
    "CdfTable", "RangeDecoder", "RangeEncoder", "build_table", "decode", "encode",
    "freeze_gaussian_tables", "snap_gaussian", "table_cross_entropy", "table_from_cdf",
]
