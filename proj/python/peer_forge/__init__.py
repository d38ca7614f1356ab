"""PEER collaborative editing toolkit: sessions, backends, diffs and metrics."""

from ._core import (
    Backend,
    PeerError,
    Session,
    apply_diff,
    autonomous_schedule,
    build_example,
    cite_accuracy,
    collaborative_schedule,
    decode_citation_markers,
    decode_controls,
    derive_seed,
    em,
    em_diff,
    encode_citation_markers,
    encode_controls,
    evaluate,
    gleu,
    make_backend,
    manual_schedule,
    mock_backend,
    normalize_wikitext,
    rouge,
    sample_words,
    sari,
    update_rouge,
    word_diff,
)

__version__ = "0.1.0"
