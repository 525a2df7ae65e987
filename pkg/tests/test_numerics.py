import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from morphtag import numerics as N
from morphtag.errors import NonFiniteGradient, NotScalar, ShapeMismatch
from oracles import central_differences, max_relative_error


def param(a, name=None):
    return N.Tensor(np.array(a, dtype=np.float64), requires_grad=True, name=name)


def grad_of(build, *arrays_):
    ps = [param(a) for a in arrays_]
    with N.Tape() as tape:
        out = build(*ps)
    tape.backward(out, ps)
    return [p.grad for p in ps]


def check_gradient(build, *arrays_, tol=1e-6):
    analytic = grad_of(build, *arrays_)
    copies = [np.array(a, dtype=np.float64) for a in arrays_]

    def f():
        with N.no_grad():
            return build(*[N.Tensor(c) for c in copies]).item()

    numeric = central_differences(f, copies)
    for a, n in zip(analytic, numeric):
        assert max_relative_error(a, n) < tol


def test_logsumexp_of_zeros():
    assert N.logsumexp(np.zeros(4)).item() == pytest.approx(math.log(4), abs=1e-15)


def test_logsumexp_large_values_stay_finite():
    assert N.logsumexp(np.array([1000.0, 1000.0])).item() == pytest.approx(1000 + math.log(2))
    assert N.logsumexp(np.array([-1000.0, -1e4])).item() == pytest.approx(-1000.0)


def test_logsumexp_all_neg_inf():
    assert N.logsumexp(np.array([-np.inf, -np.inf])).item() == -np.inf


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50)))
def test_logsumexp_bounds(x):
    v = N.logsumexp(x).item()
    assert x.max() - 1e-12 <= v <= x.max() + math.log(len(x)) + 1e-12


def test_dropout_zero_is_identity():
    x = np.random.default_rng(0).normal(size=(3, 4))
    out = N.dropout(N.Tensor(x), 0.0, train=True, rng=np.random.default_rng(1))
    assert np.array_equal(out.data, x)
    assert np.array_equal(N.dropout(N.Tensor(x), 0.5, train=False).data, x)


def test_dropout_fixed_mask():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    out = N.dropout(N.Tensor(x), 0.5, train=True, mask=np.array([1, 0, 1, 0]))
    assert np.array_equal(out.data, [2.0, 0.0, 6.0, 0.0])
    g = grad_of(lambda a: N.dropout(a, 0.5, True, mask=np.array([1, 0, 1, 0])).sum(), x)[0]
    assert np.array_equal(g, [2.0, 0.0, 2.0, 0.0])


def test_dropout_rejects_p_one():
    with pytest.raises(ValueError):
        N.dropout(N.Tensor(np.ones(2)), 1.0, train=True, rng=np.random.default_rng(0))


def test_gather_gradient_counts_repeats():
    g = grad_of(lambda t: N.gather(t, [0, 2, 0]).sum(), np.zeros((4, 2)))[0]
    assert np.array_equal(g, [[2, 2], [0, 0], [1, 1], [0, 0]])


def test_sum_gradient_is_ones():
    g = grad_of(lambda w: w.sum(), np.arange(6.0).reshape(2, 3))[0]
    assert np.array_equal(g, np.ones((2, 3)))


def test_backward_needs_scalar():
    w = param(np.ones(3))
    with N.Tape() as tape:
        out = w * 2.0
    with pytest.raises(NotScalar):
        tape.backward(out)
    with pytest.raises(NotScalar):
        N.backward(out)


def test_disconnected_parameter_gets_zero_gradient():
    a, b = param(np.ones(3)), param(np.ones((2, 2)))
    with N.Tape() as tape:
        out = (a * a).sum()
    tape.backward(out, [a, b])
    assert np.array_equal(b.grad, np.zeros((2, 2)))
    assert np.array_equal(a.grad, 2 * np.ones(3))


def test_gradients_accumulate():
    a = param(np.ones(2))
    for _ in range(2):
        with N.Tape() as tape:
            out = (a * 3.0).sum()
        tape.backward(out)
    assert np.array_equal(a.grad, [6.0, 6.0])


def test_no_grad_records_nothing():
    a = param(np.ones(2))
    with N.Tape() as tape:
        with N.no_grad():
            (a * 2.0).sum()
        assert len(tape) == 0
        (a * 2.0).sum()
        assert len(tape) == 2


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        N.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        N.add(np.ones(3), np.ones(4))
    with pytest.raises(ShapeMismatch):
        N.concat([np.ones((2, 2)), np.ones((3, 3))], axis=0)
    with pytest.raises(ShapeMismatch):
        N.reshape(np.ones(6), (4,))


R = np.random.default_rng(42)
W25 = R.normal(size=(2, 5))


@pytest.mark.parametrize(
    "name, build, inputs",
    [
        ("add_broadcast", lambda a, b: ((a + b) * (a + b)).sum(), [R.normal(size=(3, 4)), R.normal(size=(1, 4))]),
        ("sub", lambda a, b: ((a - b) * a).sum(), [R.normal(size=(2, 3)), R.normal(size=(3,))]),
        ("mul", lambda a, b: (a * b * b).sum(), [R.normal(size=(3, 2)), R.normal(size=(3, 1))]),
        ("matmul", lambda a, b: N.tanh(a @ b).sum(), [R.normal(size=(3, 4)), R.normal(size=(4, 2))]),
        ("concat", lambda a, b: (N.concat([a, b], axis=1) * np.arange(5.0)).sum(), [R.normal(size=(2, 2)), R.normal(size=(2, 3))]),
        ("reshape", lambda a: (N.reshape(a, (3, 2)) * np.arange(6.0).reshape(3, 2)).sum(), [R.normal(size=(2, 3))]),
        ("index_basic", lambda a: (a[1:, ::2] * a[1:, ::2]).sum(), [R.normal(size=(3, 4))]),
        ("index_advanced", lambda a: (a[np.array([0, 2, 0]), np.array([1, 1, 1])] * np.array([1.0, 2.0, 3.0])).sum(), [R.normal(size=(3, 2))]),
        ("gather", lambda t: N.tanh(N.gather(t, np.array([[0, 1], [1, 3]]))).sum(), [R.normal(size=(4, 3))]),
        ("where", lambda a, b: (N.where(np.array([[True, False, True]]), a, b) * a).sum(), [R.normal(size=(2, 3)), R.normal(size=(2, 3))]),
        ("tanh", lambda a: N.tanh(a).sum(), [R.normal(size=(5,))]),
        ("sigmoid", lambda a: (N.sigmoid(a) * a).sum(), [R.normal(size=(5,))]),
        ("exp", lambda a: N.exp(a).sum(), [R.normal(size=(2, 2))]),
        ("sum_axis", lambda a: (N.sum(a, axis=0) * np.array([1.0, -2.0, 3.0])).sum(), [R.normal(size=(2, 3))]),
        ("logsumexp_axis", lambda a: (N.logsumexp(a, axis=1) * np.array([1.0, 2.0])).sum(), [R.normal(size=(2, 4))]),
        ("logsumexp_all", lambda a: N.logsumexp(a), [R.normal(size=(3, 2))]),
        ("log_softmax", lambda a: (N.log_softmax(a, axis=-1) * W25).sum(), [R.normal(size=(2, 5))]),
        ("dropout_mask", lambda a: (N.dropout(a, 0.3, True, mask=np.array([1, 0, 1, 1])) * a).sum(), [R.normal(size=(4,))]),
    ],
)
def test_op_gradients(name, build, inputs):
    check_gradient(build, *inputs)


# -- optimiser ----------------------------------------------------------------------


def test_adam_first_step_moves_lr_against_gradient():
    params = {"w": np.array([1.0, -2.0, 0.5])}
    adam_grads = {"w": np.array([3.0, -0.2, 1e-3])}
    N.adam_step(params, adam_grads, lr=0.1)
    assert params["w"] == pytest.approx(np.array([0.9, -1.9, 0.4]), abs=1e-5)


def test_adam_decoupled_weight_decay():
    params = {"w": np.array([2.0])}
    N.adam_step(params, {"w": np.array([0.0])}, lr=0.1, weight_decay=0.5)
    assert params["w"][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_clip_halves_norm_eight_gradient():
    grads = [np.array([4.0, 0.0]), np.array([[0.0, 4.0 * math.sqrt(3)]])]
    clipped, norm = N.clip_by_global_norm(grads, 4.0)
    assert norm == pytest.approx(8.0)
    assert N.global_norm(clipped) == pytest.approx(4.0)
    for c, g in zip(clipped, grads):
        assert np.allclose(c, g / 2)


def test_clip_inf_is_noop():
    grads = [np.array([1e6, -1e6])]
    clipped, _ = N.clip_by_global_norm(grads, math.inf)
    assert np.array_equal(clipped[0], grads[0])


def test_clip_applies_before_adam():
    # With clipping, direction is preserved and the first Adam step is still -lr*sign.
    params = {"w": np.array([0.0, 0.0])}
    N.adam_step(params, {"w": np.array([100.0, -50.0])}, lr=0.01, clip_norm=1.0)
    assert params["w"] == pytest.approx(np.array([-0.01, 0.01]), abs=1e-6)


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_nonfinite_gradient_names_parameter(bad):
    params = {"ok": np.ones(2), "lstm.W": np.ones(2)}
    before = {k: v.copy() for k, v in params.items()}
    with pytest.raises(NonFiniteGradient) as info:
        N.adam_step(params, {"ok": np.ones(2), "lstm.W": np.array([1.0, bad])}, lr=0.1)
    assert info.value.name == "lstm.W"
    assert all(np.array_equal(params[k], before[k]) for k in params)


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(5)
        params = {"a": rng.normal(size=(3, 3)), "b": rng.normal(size=3)}
        state = None
        for _ in range(5):
            state = N.adam_step(params, {k: rng.normal(size=v.shape) for k, v in params.items()},
                                lr=0.01, weight_decay=1e-4, clip_norm=1.0, state=state)
        return params

    a, b = run(), run()
    assert all(np.array_equal(a[k], b[k]) for k in a)


@settings(max_examples=30)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), st.floats(0.1, 10.0))
def test_clip_never_exceeds_threshold(values, c):
    clipped, _ = N.clip_by_global_norm([np.array(values)], c)
    assert N.global_norm(clipped) <= c * (1 + 1e-12)


@settings(max_examples=30)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=6), st.floats(0.1, 10.0))
def test_clip_preserves_direction(values, c):
    g = np.array(values)
    (clipped,), norm = N.clip_by_global_norm([g], c)
    if norm > 0:
        assert np.allclose(clipped * norm, g * N.global_norm([clipped]), atol=1e-9 * max(1.0, norm))


def test_forward_is_bit_deterministic():
    rng = np.random.default_rng(0)
    w, x = rng.normal(size=(4, 3)), rng.normal(size=(5, 4))
    run = lambda: N.logsumexp(N.tanh(N.Tensor(x) @ N.Tensor(w)), axis=1).data
    assert run().tobytes() == run().tobytes()
