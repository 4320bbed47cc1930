"""Python bindings for the USDA C++ core."""

import json

from ._core import (  # noqa: F401
    UsdaError,
    __version__,
    crf_log_likelihood,
    crf_log_partition,
    map_rating,
    run,
    satisfaction_rule,
    viterbi_decode,
)
from . import _core


def gen_synthetic(n, seed=0, rule="repeat-da-dissatisfied", confusion=0.25):
    return [json.loads(s) for s in _core.gen_synthetic(n, seed, rule, confusion)]


def impact_score(traces, q, c, use_g=False):
    lines = [t if isinstance(t, str) else json.dumps(t) for t in traces]
    return _core.impact_score(lines, list(q), c, use_g)
