"""Python access to the listen core library."""

import json

from . import _listen
from ._listen import (
    ListenError,
    adapter_forward,
    build_final_prompt,
    encode,
    extract_yes_no,
    gen_clip,
    layer_weights,
    masked_nll,
    parse_final_prompt,
    rule_response,
)

__all__ = [
    "ListenError",
    "adapter_forward",
    "build_corpus",
    "build_final_prompt",
    "encode",
    "extract_yes_no",
    "gen_clip",
    "layer_weights",
    "masked_nll",
    "metrics",
    "ontology",
    "parse_final_prompt",
    "rule_response",
]


def build_corpus(n_train=200, n_eval=50, ontology_size=8, seed=0, snr_db=20.0):
    """Corpus manifest as a dict."""
    return json.loads(_listen.build_corpus(n_train, n_eval, ontology_size, seed, snr_db))


def ontology():
    """The built-in event ontology as a dict."""
    return json.loads(_listen.ontology_json())


def metrics(gold, answers):
    """Acc, F1(Y), F1(N), F1(W) and yes-rate for raw answers against yes/no gold labels."""
    return json.loads(_listen.metrics(list(gold), list(answers)))
