import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sensorcodec.optim import AdamState, adam_step, clip_gradients
from sensorcodec.tensor import Tensor


def adam_reference(w, grads, lr, b1=0.9, b2=0.999, eps=1e-8, decay=0.0, clip=None):
    """Scalar Adam written out term by term."""
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        if clip is not None:
            g = min(max(g, -clip), clip)
        lr_t = lr / (1 + decay * (t - 1))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr_t * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return w


def test_zero_gradients_leave_params_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0], dtype=np.float32))
    before = p.data.copy()
    state = AdamState()
    for _ in range(5):
        adam_step([p], [np.zeros(3, np.float32)], state)
    npt.assert_array_equal(p.data, before)
    assert state.step == 5


def test_first_step_moves_by_learning_rate():
    p = Tensor(np.array([0.5]))
    adam_step([p], [np.array([1.0])], AdamState(lr=0.001))
    # t=1: m_hat = g, v_hat = g^2 -> update lr * 1 / (1 + eps)
    assert 0.5 - p.data[0] == pytest.approx(0.001 / (1 + 1e-8), rel=1e-12)


def test_clipped_gradient_behaves_like_clip_value():
    a, b = Tensor(np.array([0.0])), Tensor(np.array([0.0]))
    sa, sb = AdamState(lr=0.01, clip_value=0.5), AdamState(lr=0.01)
    for g in (2.0, -3.0, 0.7, 2.0):
        adam_step([a], [np.array([g])], sa)
        adam_step([b], [np.array([min(max(g, -0.5), 0.5)])], sb)
    npt.assert_array_equal(a.data, b.data)
    assert sa.last_max_abs_grad == 0.5


@pytest.mark.parametrize("decay, clip", [(0.0, None), (1e-6, None), (0.1, 0.5)])
def test_matches_reference_sequence(decay, clip):
    grads = [0.3, -1.5, 2.2, 0.01, -0.4, 0.9]
    p = Tensor(np.array([1.0]))
    state = AdamState(lr=0.05, decay=decay, clip_value=clip)
    for g in grads:
        adam_step([p], [np.array([g])], state)
    assert p.data[0] == pytest.approx(adam_reference(1.0, grads, 0.05, decay=decay, clip=clip),
                                      rel=1e-12)


@given(st.floats(0, 1), st.integers(0, 10_000))
def test_effective_lr_non_increasing(decay, step):
    s = AdamState(lr=1e-3, decay=decay)
    assert 0 < s.effective_lr(step + 1) <= s.effective_lr(step)


@given(hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e6, 1e6)),
       st.floats(1e-3, 10))
def test_clip_bound_holds(g, clip):
    (out,) = clip_gradients([g], clip)
    assert np.abs(out).max() <= clip


def test_step_counter_increments_by_one():
    p = Tensor(np.zeros((2, 2), np.float32))
    state = AdamState()
    for k in range(1, 4):
        adam_step([p], [np.ones((2, 2), np.float32)], state)
        assert state.step == k
    assert state.m[0].shape == state.v[0].shape == (2, 2)


def test_shape_mismatch_is_an_error():
    with pytest.raises(ValueError, match="shape"):
        adam_step([Tensor(np.zeros(3))], [np.zeros(4)], AdamState())


def test_invalid_settings():
    with pytest.raises(ValueError):
        AdamState(lr=-1)
    with pytest.raises(ValueError):
        AdamState(clip_value=0)
