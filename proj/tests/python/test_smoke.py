import math

import numpy as np
import pytest

import listen


def test_corpus_is_deterministic_and_split():
    a = listen.build_corpus(n_train=12, n_eval=10, seed=3)
    b = listen.build_corpus(n_train=12, n_eval=10, seed=3)
    assert a == b
    splits = [c["split"] for c in a["clips"]]
    assert splits.count("train") == 12
    assert splits.count("eval") == 10


def test_clip_encoder_and_adapter_shapes():
    wave, caption = listen.gen_clip(["dog_bark"], duration=1.0, seed=1)
    assert wave.dtype == np.float32
    assert wave.shape == (16000,)
    assert "dog barking" in caption
    layers = listen.encode(wave)
    assert len(layers) == 4
    assert layers[0].shape == (100, 32)
    prefix = listen.adapter_forward(layers)
    assert prefix.shape == (8, 64)


def test_layer_weights_are_a_simplex():
    w = listen.layer_weights(np.array([10.0, 0.0, 0.0, 0.0]))
    assert w.sum() == pytest.approx(1.0)
    assert w[0] == pytest.approx(math.exp(10) / (math.exp(10) + 3), rel=1e-9)


def test_prompt_round_trip():
    text, begin, end = listen.build_final_prompt("A dog barks.", "Replay the audio.")
    assert text[begin:end] == "A dog barks."
    assert listen.parse_final_prompt(text) == ("[Begin of audio]", "A dog barks.", "[End of audio]", "Replay the audio.")


def test_metrics_worked_example():
    m = listen.metrics(["yes", "no", "no", "no"], ["Yes.", "yes", "No", "yes"])
    assert m["acc"] == pytest.approx(0.5)
    assert m["f1_yes"] == pytest.approx(0.5)
    assert m["f1_no"] == pytest.approx(0.5)
    assert m["yes_rate"] == pytest.approx(0.75)


def test_nll_and_errors():
    logits = np.zeros((2, 100))
    assert listen.masked_nll(logits, [1, 2], [1, 1]) == pytest.approx(math.log(100))
    with pytest.raises(listen.ListenError):
        listen.masked_nll(logits, [1, 2], [0, 0])
    with pytest.raises(listen.ListenError):
        listen.rule_response("neg", ["x"], [])
    assert listen.extract_yes_no("I hear water pouring.") == "unknown"
