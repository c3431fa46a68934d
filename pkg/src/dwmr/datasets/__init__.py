from .container import DatasetFormatError, read_dataset, read_header, write_dataset
from .digits import DigitSource, glyph_template, split_sources, synth_glyph_source
from .generate import (
    BENCHMARKS,
    N_CELLS,
    N_CLASSES,
    OBS_SHAPE,
    SPLIT_SIZES,
    SPLITS,
    TransitionRecord,
    TransitionSet,
    build_splits,
    dequantize,
    generate_split,
    generate_trajectory,
    quantize,
)
from .idx import IDXError, parse_idx, read_idx_file, write_idx

__all__ = [
    "DatasetFormatError", "read_dataset", "read_header", "write_dataset", "DigitSource",
    "glyph_template", "split_sources", "synth_glyph_source", "BENCHMARKS", "N_CELLS",
    "N_CLASSES", "OBS_SHAPE", "SPLIT_SIZES", "SPLITS", "TransitionRecord", "TransitionSet",
    "build_splits", "dequantize", "generate_split", "generate_trajectory", "quantize",
    "IDXError", "parse_idx", "read_idx_file", "write_idx",
]
