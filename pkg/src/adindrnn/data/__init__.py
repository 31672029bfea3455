"""EEG ingestion: EDF files, seizure annotations, segmentation."""

from .annotations import AnnotationError, SeizureAnnotation, parse_annotations, read_annotations, write_annotations_csv
from .edf import EdfParseError, EdfRecord, digital_to_physical, parse_edf, read_edf, write_edf
from .segmentation import (
    NONSEIZURE,
    SEIZURE,
    LabeledDataset,
    Segment,
    SegmentationError,
    SegmentStatistics,
    assemble_dataset,
    common_channels,
    load_segment_cache,
    save_segment_cache,
    segment_record,
    segment_statistics,
    seizure_overlap,
)
from .synthetic import make_synthetic_records, make_synthetic_segments

__all__ = [
    "AnnotationError",
    "SeizureAnnotation",
    "parse_annotations",
    "read_annotations",
    "write_annotations_csv",
    "EdfParseError",
    "EdfRecord",
    "digital_to_physical",
    "parse_edf",
    "read_edf",
    "write_edf",
    "NONSEIZURE",
    "SEIZURE",
    "LabeledDataset",
    "Segment",
    "SegmentationError",
    "SegmentStatistics",
    "assemble_dataset",
    "common_channels",
    "load_segment_cache",
    "save_segment_cache",
    "segment_record",
    "segment_statistics",
    "seizure_overlap",
    "make_synthetic_records",
    "make_synthetic_segments",
]
