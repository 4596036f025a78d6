import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sensorcodec import ops
from sensorcodec.tensor import NumericError, Tape, Tensor


def T(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float32), requires_grad=grad)


# --- dense -----------------------------------------------------------------

@pytest.mark.parametrize("W, b, expected", [
    ([[1, 0], [0, 1]], [0, 0], [[1, 2]]),
    ([[0, 0], [0, 0]], [3, 4], [[3, 4]]),
    ([[1, 1], [1, 1]], [0, 1], [[3, 4]]),
])
def test_dense_examples(W, b, expected):
    out = ops.dense(T([[1, 2]]), T(W), T(b))
    npt.assert_array_equal(out.data, expected)


def test_dense_shape_mismatch():
    with pytest.raises(ValueError, match="incompatible"):
        ops.dense(T([[1, 2, 3]]), T(np.eye(2)), T([0, 0]))


# --- conv ------------------------------------------------------------------

def direct_conv1d(x, k, b, pad):
    """Loop oracle: out[n,t,f] = b[f] + sum_{j,c} xp[n,t+j,c] k[j,c,f]."""
    K = k.shape[0]
    if pad == "same":
        left = (K - 1) // 2
        x = np.pad(x, ((0, 0), (left, K - 1 - left), (0, 0)))
    N, Tp, C = x.shape
    out = np.zeros((N, Tp - K + 1, k.shape[2]))
    for n in range(N):
        for t in range(Tp - K + 1):
            for f in range(k.shape[2]):
                out[n, t, f] = b[f] + sum(x[n, t + j, c] * k[j, c, f]
                                          for j in range(K) for c in range(C))
    return out


def direct_conv2d(x, k, b, pad):
    Kh, Kw = k.shape[:2]
    if pad == "same":
        x = np.pad(x, ((0, 0), ((Kh - 1) // 2, Kh - 1 - (Kh - 1) // 2),
                       ((Kw - 1) // 2, Kw - 1 - (Kw - 1) // 2), (0, 0)))
    N, H, W, C = x.shape
    out = np.zeros((N, H - Kh + 1, W - Kw + 1, k.shape[3]))
    for n in range(N):
        for i in range(H - Kh + 1):
            for j in range(W - Kw + 1):
                patch = x[n, i:i + Kh, j:j + Kw, :]
                out[n, i, j] = b + np.einsum("hwc,hwcf->f", patch, k)
    return out


def test_conv1d_examples():
    x = T(np.array([1, 2, 3, 4]).reshape(1, 4, 1))
    out = ops.conv1d(x, T(np.array([1, 0, -1]).reshape(3, 1, 1)), T([0]), "valid")
    npt.assert_array_equal(out.data.ravel(), [-2, -2])

    xr = T(np.random.default_rng(0).normal(size=(2, 5, 1)))
    ident = ops.conv1d(xr, T(np.ones((1, 1, 1))), T([0]), "valid")
    npt.assert_array_equal(ident.data, xr.data)

    zero = ops.conv1d(T(np.zeros((1, 6, 2))), T(np.ones((3, 2, 1))), T([0.5]), "same")
    npt.assert_array_equal(zero.data, np.full((1, 6, 1), 0.5))


@pytest.mark.parametrize("pad", ["valid", "same"])
@pytest.mark.parametrize("K", [1, 2, 3, 4])
def test_conv1d_matches_loop_oracle(pad, K, rng):
    x = rng.normal(size=(2, 7, 3))
    k = rng.normal(size=(K, 3, 4))
    b = rng.normal(size=4)
    out = ops.conv1d(Tensor(x), Tensor(k), Tensor(b), pad)
    npt.assert_allclose(out.data, direct_conv1d(x, k, b, pad), rtol=1e-10, atol=1e-12)


def test_conv1d_kernel_too_wide():
    with pytest.raises(ValueError, match="exceeds"):
        ops.conv1d(T(np.zeros((1, 2, 1))), T(np.zeros((3, 1, 1))), T([0]), "valid")


def test_conv2d_examples():
    x = T(np.array([[1, 2], [3, 4]]).reshape(1, 2, 2, 1))
    out = ops.conv2d(x, T(np.ones((2, 2, 1, 1))), T([0]), "valid")
    npt.assert_array_equal(out.data.ravel(), [10])

    ident = ops.conv2d(x, T(np.ones((1, 1, 1, 1))), T([0]), "valid")
    npt.assert_array_equal(ident.data, x.data)

    const = ops.conv2d(x, T(np.zeros((3, 3, 1, 2))), T([0.25, -1]), "same")
    npt.assert_array_equal(const.data[..., 0], 0.25)
    npt.assert_array_equal(const.data[..., 1], -1)


@pytest.mark.parametrize("pad", ["valid", "same"])
@pytest.mark.parametrize("kshape", [(1, 1), (2, 3), (3, 3), (3, 2)])
def test_conv2d_matches_loop_oracle(pad, kshape, rng):
    x = rng.normal(size=(2, 5, 4, 2))
    k = rng.normal(size=(*kshape, 2, 3))
    b = rng.normal(size=3)
    out = ops.conv2d(Tensor(x), Tensor(k), Tensor(b), pad)
    npt.assert_allclose(out.data, direct_conv2d(x, k, b, pad), rtol=1e-10, atol=1e-12)


# --- pooling / upsampling --------------------------------------------------

def brute_max_pool_1d(x, p):
    n = -(-len(x) // p)
    return np.array([max(x[i * p:(i + 1) * p]) for i in range(n)])


def test_max_pool_examples():
    npt.assert_array_equal(ops.max_pool(T([[1, 3, 2, 4]]), 2, 1).data, [[3, 4]])
    npt.assert_array_equal(ops.max_pool(T(np.full((1, 6), 7.0)), 3, 1).data, [[7, 7]])
    out = ops.max_pool(T(np.array([[1, 2], [3, 4]]).reshape(1, 2, 2)), (2, 2), (1, 2))
    npt.assert_array_equal(out.data, [[[4]]])


@given(hnp.arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3)),
       st.integers(1, 4))
def test_max_pool_matches_brute_force(x, p):
    out = ops.max_pool(Tensor(x[None]), p, 1)
    npt.assert_array_equal(out.data[0], brute_max_pool_1d(x, p))


def test_max_pool_pads_with_neg_inf():
    out = ops.max_pool(T([[-5, -7, -9]]), 2, 1)
    npt.assert_array_equal(out.data, [[-5, -9]])


def test_max_pool_backward_routes_to_first_max():
    x = T([[2, 2, 1, 3]], grad=True)
    with Tape() as tape:
        y = ops.max_pool(x, 2, 1)
        loss = ops.sum(ops.mul(y, T([[10, 20]])))
    tape.backward(loss)
    npt.assert_array_equal(x.grad, [[10, 0, 0, 20]])


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 3))
def test_max_pool_conserves_gradient_mass(seed, ph, pw):
    r = np.random.default_rng(seed)
    x = Tensor(r.normal(size=(2, 5, 7, 3)), requires_grad=True)
    g = r.normal(size=(2, -(-5 // ph), -(-7 // pw), 3))
    with Tape() as tape:
        y = ops.max_pool(x, (ph, pw), (1, 2))
        loss = ops.sum(ops.mul(y, Tensor(g)))
    tape.backward(loss)
    assert x.grad.sum() == pytest.approx(g.sum(), rel=1e-12, abs=1e-12)


def test_upsample2d_examples():
    one = T(np.ones((1, 1, 1, 1)))
    npt.assert_array_equal(ops.upsample2d(one, (2, 2)).data[0, ..., 0], [[1, 1], [1, 1]])
    x = T(np.arange(6).reshape(1, 2, 3, 1))
    npt.assert_array_equal(ops.upsample2d(x, (1, 1)).data, x.data)
    row = T(np.array([1, 2]).reshape(1, 1, 2, 1))
    npt.assert_array_equal(ops.upsample2d(row, (2, 1)).data[0, ..., 0], [[1, 2], [1, 2]])


# --- lstm ------------------------------------------------------------------

def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm_step_reference(x, h, c, W, U, b, act=np.tanh):
    """One standard LSTM cell step, gate order i, f, g, o."""
    u = h.shape[1]
    z = x @ W + h @ U + b
    i, f, g, o = (z[:, k * u:(k + 1) * u] for k in range(4))
    c_new = sigmoid(f) * c + sigmoid(i) * act(g)
    return sigmoid(o) * act(c_new), c_new


def test_lstm_zero_weights_give_zero_output():
    x = T(np.random.default_rng(0).normal(size=(2, 5, 3)))
    out = ops.lstm(x, T(np.zeros((3, 16))), T(np.zeros((4, 16))), T(np.zeros(16)), 4, True)
    npt.assert_array_equal(out.data, 0)


@pytest.mark.parametrize("act", ["tanh", "relu"])
def test_lstm_single_step_matches_reference_cell(act, rng):
    x = rng.normal(size=(3, 1, 2))
    W, U, b = rng.normal(size=(2, 20)), rng.normal(size=(5, 20)), rng.normal(size=20)
    out = ops.lstm(Tensor(x), Tensor(W), Tensor(U), Tensor(b), 5, False, act)
    fn = np.tanh if act == "tanh" else (lambda v: np.maximum(v, 0))
    h, _ = lstm_step_reference(x[:, 0], np.zeros((3, 5)), np.zeros((3, 5)), W, U, b, fn)
    npt.assert_allclose(out.data, h, rtol=1e-12, atol=1e-12)


def test_lstm_sequence_unrolls_reference_cell(rng):
    x = rng.normal(size=(2, 6, 3))
    W, U, b = rng.normal(size=(3, 16)) * .5, rng.normal(size=(4, 16)) * .5, rng.normal(size=16)
    seq = ops.lstm(Tensor(x), Tensor(W), Tensor(U), Tensor(b), 4, True).data
    h, c = np.zeros((2, 4)), np.zeros((2, 4))
    for t in range(6):
        h, c = lstm_step_reference(x[:, t], h, c, W, U, b)
        npt.assert_allclose(seq[:, t], h, rtol=1e-12, atol=1e-12)


def test_lstm_last_step_equals_final_state(rng):
    args = (Tensor(rng.normal(size=(2, 4, 3))), Tensor(rng.normal(size=(3, 8))),
            Tensor(rng.normal(size=(2, 8))), Tensor(rng.normal(size=8)), 2)
    seq = ops.lstm(*args, return_sequences=True)
    last = ops.lstm(*args, return_sequences=False)
    npt.assert_array_equal(seq.data[:, -1], last.data)


def test_lstm_non_finite_state_raises():
    x = T(np.full((1, 30, 1), 1e3))
    W = T(np.full((1, 4), 1e3))
    U = T(np.full((1, 4), 1e3))
    with pytest.raises(NumericError):
        ops.lstm(x, W, U, T(np.zeros(4)), 1, True, "relu")


# --- activations / dropout --------------------------------------------------

def test_activation_examples():
    npt.assert_array_equal(ops.relu(T([-1, 0, 2])).data, [0, 0, 2])
    assert ops.sigmoid(T([0.0])).data[0] == 0.5
    npt.assert_array_equal(ops.softmax(T([[0, 0]])).data, [[0.5, 0.5]])
    x = T([1.0, -2.0])
    assert ops.activation(x, "linear") is x
    with pytest.raises(ValueError):
        ops.activation(x, "gelu")


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 8)),
                  elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    s = ops.softmax(Tensor(x)).data
    npt.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-6)


@given(hnp.arrays(np.float32, st.integers(1, 30), elements=st.floats(-15, 15, width=32)))
def test_sigmoid_in_open_unit_interval(x):
    s = ops.sigmoid(Tensor(x)).data
    assert np.all((s > 0) & (s < 1))


def test_dropout_identity_cases(rng):
    x = T(rng.normal(size=(4, 5)))
    assert ops.dropout(x, 0.5, training=False) is x
    assert ops.dropout(x, 0.0, training=True, rng=rng) is x


def test_dropout_preserves_mean_and_zero_fraction():
    x = T(np.ones((200, 500)))
    y = ops.dropout(x, 0.5, training=True, rng=np.random.default_rng(7)).data
    assert abs(y.mean() - 1.0) < 0.05
    assert abs((y == 0).mean() - 0.5) < 0.01
    npt.assert_array_equal(np.unique(y), [0.0, 2.0])


def test_dropout_is_seed_deterministic():
    x = T(np.ones((10, 10)))
    a = ops.dropout(x, 0.6, True, np.random.default_rng(3)).data
    b = ops.dropout(x, 0.6, True, np.random.default_rng(3)).data
    npt.assert_array_equal(a, b)


# --- losses ------------------------------------------------------------------

def test_mse_examples():
    assert ops.mse(T([1, 2]), T([1, 2])).item() == 0
    assert ops.mse(T([0, 0]), T([1, 1])).item() == 1
    assert ops.mse(T([2]), T([0])).item() == 4


def test_cross_entropy_examples():
    eye = np.eye(6, dtype=np.float32)
    assert ops.categorical_cross_entropy(T(eye), T(eye)).item() <= 1e-6
    uniform = np.full((3, 6), 1 / 6)
    onehot = eye[[0, 3, 5]]
    assert ops.categorical_cross_entropy(Tensor(uniform), Tensor(onehot)).item() == \
        pytest.approx(np.log(6), rel=1e-12)
    half = ops.categorical_cross_entropy(Tensor(np.array([[0.5, 0.5]])), Tensor(np.array([[1.0, 0]])))
    assert half.item() == pytest.approx(np.log(2), rel=1e-12)


def test_cross_entropy_rejects_unnormalised_rows():
    with pytest.raises(ValueError, match="sum to 1"):
        ops.categorical_cross_entropy(T([[0.5, 0.6]]), T([[1, 0]]))


# --- tape ----------------------------------------------------------------------

def test_backward_of_sum_is_ones(rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(x)
    tape.backward(loss)
    npt.assert_array_equal(x.grad, np.ones((3, 4)))


def test_disconnected_leaf_gets_zero_gradient():
    a = T([1.0, 2.0], grad=True)
    b = T([3.0], grad=True)
    with Tape() as tape:
        _ = ops.mul(b, 2.0)
        loss = ops.sum(ops.mul(a, a))
    tape.backward(loss)
    npt.assert_array_equal(a.grad, [2, 4])
    npt.assert_array_equal(b.grad, [0])


def test_backward_requires_scalar():
    a = T([1.0, 2.0], grad=True)
    with Tape() as tape:
        y = ops.mul(a, a)
    with pytest.raises(ValueError, match="scalar"):
        tape.backward(y)


def test_backward_requires_loss_on_tape():
    a = T([1.0], grad=True)
    with Tape():
        loss = ops.sum(a)
    with pytest.raises(ValueError, match="not computed on this tape"):
        Tape().backward(loss)


def test_no_tape_means_no_recording():
    a = T([1.0], grad=True)
    y = ops.sum(ops.mul(a, a))
    assert not y.requires_grad


def test_shared_input_accumulates_gradient():
    a = T([3.0], grad=True)
    with Tape() as tape:
        loss = ops.sum(ops.add(ops.mul(a, a), a))
    tape.backward(loss)
    npt.assert_array_equal(a.grad, [7.0])


def test_tape_visits_each_node_once():
    calls = []
    a = T([1.0], grad=True)
    with Tape() as tape:
        y = ops.mul(a, 2.0)
        loss = ops.sum(y)
    for node in tape.nodes:
        inner = node.backward
        node.backward = lambda g, inner=inner: (calls.append(1), inner(g))[1]
    tape.backward(loss)
    assert len(calls) == len(tape) == 2


def test_forward_is_deterministic(rng):
    x = rng.normal(size=(3, 6, 4)).astype(np.float32)
    W = rng.normal(size=(4, 12)).astype(np.float32)
    U = rng.normal(size=(3, 12)).astype(np.float32)
    b = np.zeros(12, np.float32)
    a = ops.lstm(Tensor(x), Tensor(W), Tensor(U), Tensor(b), 3, True).data
    c = ops.lstm(Tensor(x), Tensor(W), Tensor(U), Tensor(b), 3, True).data
    assert a.tobytes() == c.tobytes()


def test_float32_is_default():
    assert Tensor([1, 2]).dtype == np.float32
    out = ops.dense(T([[1, 2]]), T(np.eye(2)), T([0, 0]))
    assert out.dtype == np.float32
