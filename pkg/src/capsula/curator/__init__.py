"""Curation: slice a traced script down to what each output needs."""

from .fmt import format_script
from .slicing import (
    CurationError,
    CurationResult,
    DependencyView,
    EmitUnparseable,
    HashMismatch,
    InconsistentTrace,
    InputFile,
    InvalidGraph,
    MissingInput,
    SliceSet,
    UnknownTarget,
    backward_slice,
    backward_slice_union,
    build_dependency_view,
    close_slice,
    collect_inputs,
    curate,
    curated_lines,
    emit_curated_script,
    structural_closure,
)

__all__ = [
    "CurationError",
    "CurationResult",
    "DependencyView",
    "EmitUnparseable",
    "HashMismatch",
    "InconsistentTrace",
    "InputFile",
    "InvalidGraph",
    "MissingInput",
    "SliceSet",
    "UnknownTarget",
    "backward_slice",
    "backward_slice_union",
    "build_dependency_view",
    "close_slice",
    "collect_inputs",
    "curate",
    "curated_lines",
    "emit_curated_script",
    "format_script",
    "structural_closure",
]
