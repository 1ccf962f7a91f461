"""Few-shot NER with in-context demonstrations: python surface of the C++ core."""

from ._core import (
    GrapenerError,
    assemble_instance,
    density_score,
    draw_sample,
    format_mean_std_pct,
    iob2_to_spans,
    mean_std,
    nearest_match,
    parse_conll,
    run_experiment,
    score_spans,
    select_grape,
    select_popular,
    spans_to_iob2,
    to_conll,
)

__all__ = [
    "GrapenerError",
    "assemble_instance",
    "density_score",
    "draw_sample",
    "format_mean_std_pct",
    "iob2_to_spans",
    "mean_std",
    "nearest_match",
    "parse_conll",
    "run_experiment",
    "score_spans",
    "select_grape",
    "select_popular",
    "spans_to_iob2",
    "to_conll",
]
