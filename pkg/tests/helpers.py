"""Shared builders for model-level tests."""

import numpy as np

from morphtag import corpus as C
from morphtag.numerics import Tape, no_grad
from morphtag.tagger import FeatureConfig, TaggerModel
from oracles import central_differences, max_relative_error


def small_model(train_corpus, model_kind="bilstm", context="word", feature_level="morpheme",
                hidden=4, dim=5, seed=0, min_count=1, dropout_p=0.0):
    vocab = C.build_vocabulary(train_corpus, min_count=min_count)
    return TaggerModel.initialise(vocab, FeatureConfig(feature_level, False, dim), hidden, model_kind,
                                  context, dropout_p, rng=np.random.default_rng(seed))


def randomise(model, seed=1, scale=0.5):
    """Perturb every parameter so no gradient is accidentally zero."""
    rng = np.random.default_rng(seed)
    for p in model.params.values():
        p.data = p.data + rng.normal(0.0, scale, p.shape)


def model_gradient_error(model, instances):
    """Largest relative error between tape and central-difference gradients of the loss."""
    params = model.params
    for p in params.values():
        p.grad = None
    with Tape() as tape:
        value = model.loss(instances, train=False)
    tape.backward(value, params.values())
    names = sorted(params)

    def f():
        with no_grad():
            return model.loss(instances, train=False).item()

    numeric = central_differences(f, [params[n].data for n in names])
    return max(max_relative_error(params[n].grad, g) for n, g in zip(names, numeric))


# (criterion, passed, detail) rows printed by the terminal-summary hook in conftest
ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, bool(passed), detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    return passed
