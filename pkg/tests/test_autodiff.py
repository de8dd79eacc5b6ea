"""Gradient checks for every op against central finite differences."""

import numpy as np
import pytest

from phonemix import autodiff as ad
from phonemix.autodiff import Tensor


def finite_diff(f, arrays, which, eps=1e-6):
    """Central-difference gradient of scalar f wrt arrays[which]."""
    base = [a.copy() for a in arrays]
    g = np.zeros_like(base[which])
    it = np.nditer(base[which], flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        up = [a.copy() for a in base]
        dn = [a.copy() for a in base]
        up[which][i] += eps
        dn[which][i] -= eps
        g[i] = (f(*up) - f(*dn)) / (2 * eps)
        it.iternext()
    return g


def check_op(build, *shapes, seed=0, rtol=1e-6, atol=1e-8):
    """build(*tensors) -> scalar Tensor; compares autodiff grads to FD."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) for s in shapes]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*tensors)
    out.backward()

    def f(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    for i, t in enumerate(tensors):
        fd = finite_diff(f, arrays, i)
        assert np.allclose(t.grad, fd, rtol=rtol, atol=max(atol, 1e-6)), \
            f"grad mismatch for input {i}"


class TestElementwise:
    def test_add_broadcast(self):
        check_op(lambda a, b: ad.sum_(ad.mul(ad.add(a, b), ad.add(a, b))),
                 (3, 4), (4,))

    def test_mul_broadcast(self):
        check_op(lambda a, b: ad.sum_(ad.mul(a, b)), (2, 3), (3,))

    def test_exp_log_chain(self):
        check_op(lambda a: ad.sum_(ad.log(ad.add(ad.exp(a), 1.0))), (5,))

    def test_tanh(self):
        check_op(lambda a: ad.sum_(ad.tanh(a)), (4, 2))

    def test_gelu(self):
        check_op(lambda a: ad.sum_(ad.gelu(a)), (6,))

    def test_mean(self):
        check_op(lambda a: ad.mean_(ad.mul(a, a)), (3, 5))


class TestShaping:
    def test_matmul(self):
        check_op(lambda a, b: ad.sum_(ad.matmul(a, b)), (3, 4), (4, 2))

    def test_batched_matmul(self):
        check_op(lambda a, b: ad.sum_(ad.matmul(a, b)), (2, 3, 4), (2, 4, 2))

    def test_reshape_transpose(self):
        check_op(lambda a: ad.sum_(ad.mul(
            ad.transpose(ad.reshape(a, (2, 3, 2)), (1, 0, 2)), 2.0)), (6, 2))

    def test_slice_rows(self):
        check_op(lambda a: ad.sum_(ad.mul(ad.slice_rows(a, 1, 3),
                                          ad.slice_rows(a, 1, 3))), (5, 3))

    def test_gather_rows(self):
        idx = np.array([2, 0, 1])
        check_op(lambda a: ad.sum_(ad.gather_rows(a, idx)), (3, 4))


class TestNormalizations:
    def test_log_softmax(self):
        idx = np.array([1, 0])
        check_op(lambda a: ad.sum_(ad.gather_rows(ad.log_softmax(a), idx)),
                 (2, 5))

    def test_log_softmax_rows_normalize(self):
        rng = np.random.default_rng(0)
        out = ad.log_softmax(Tensor(rng.normal(size=(10, 7)) * 20))
        assert np.allclose(np.exp(out.data).sum(axis=1), 1.0, atol=1e-12)

    def test_softmax(self):
        w = np.arange(12, dtype=float).reshape(3, 4)
        check_op(lambda a: ad.sum_(ad.mul(ad.softmax(a), w)), (3, 4))

    def test_layer_norm(self):
        check_op(lambda a, g, b: ad.sum_(ad.mul(ad.layer_norm(a, g, b),
                                                ad.layer_norm(a, g, b))),
                 (4, 6), (6,), (6,), rtol=1e-5)


class TestStructured:
    def test_embedding_repeated_ids_accumulate(self):
        ids = np.array([1, 2, 1, 0])
        check_op(lambda t: ad.sum_(ad.mul(ad.embedding(t, ids),
                                          ad.embedding(t, ids))), (4, 3))

    def test_conv1d(self):
        check_op(lambda x, w, b: ad.sum_(ad.mul(
            ad.conv1d(x, w, b, stride=2, pad=1),
            ad.conv1d(x, w, b, stride=2, pad=1))), (7, 3), (3, 3, 2), (2,),
            rtol=1e-5)

    def test_conv1d_stride_one(self):
        check_op(lambda x, w, b: ad.sum_(ad.conv1d(x, w, b, stride=1, pad=1)),
                 (5, 2), (3, 2, 2), (2,))


class TestEngine:
    def test_backward_requires_scalar(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            ad.add(t, 1.0).backward()

    def test_grad_accumulates_across_reuse(self):
        a = Tensor(np.array(2.0), requires_grad=True)
        out = ad.add(ad.mul(a, a), ad.mul(a, 3.0))  # a^2 + 3a
        out.backward()
        assert np.allclose(a.grad, 2 * 2.0 + 3.0)

    def test_no_grad_builds_no_tape(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = ad.sum_(ad.mul(a, a))
        assert out._parents == ()
        assert out._backward is None

    def test_no_grad_restored_after_exit(self):
        a = Tensor(np.array(1.5), requires_grad=True)
        with ad.no_grad():
            pass
        out = ad.mul(a, a)
        out.backward()
        assert np.allclose(a.grad, 3.0)

    def test_dropout_scales_kept_values(self):
        rng = np.random.default_rng(0)
        a = Tensor(np.ones((100, 10)))
        out = ad.dropout(a, 0.5, rng)
        kept = out.data[out.data != 0]
        assert np.allclose(kept, 2.0)
        # expectation preserved
        assert abs(out.data.mean() - 1.0) < 0.1
