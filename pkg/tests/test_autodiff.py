import numpy as np
import pytest

from equireps import autodiff as ad
from equireps.autodiff import Value


def rel_err(a, b, floor=1e-8):
    return np.max(np.abs(a - b) / (np.abs(a) + np.abs(b) + floor))


def test_relu():
    x = Value(np.array([-1.0, 0.5]))
    y = ad.relu(x)
    assert np.array_equal(y.data, [0.0, 0.5])


def test_matmul_identity():
    x = Value(np.random.default_rng(0).standard_normal((4, 3)))
    y = ad.matmul(x, Value(np.eye(3)))
    assert np.array_equal(y.data, x.data)


def test_square_derivative():
    x = Value(np.array([3.0]))
    loss = ad.vsum(ad.square(x))
    loss.backward()
    assert x.grad == pytest.approx(6.0)


def test_sum_of_squares_grad():
    x = Value(np.array([1.0, 2.0]))
    ad.vsum(ad.mul(x, x)).backward()
    assert np.allclose(x.grad, [2.0, 4.0])


def test_mean_grad_is_one_over_n():
    x = Value(np.arange(5.0))
    ad.vmean(x).backward()
    assert np.allclose(x.grad, 0.2)


def test_backward_requires_scalar():
    x = Value(np.ones(3))
    with pytest.raises(ValueError):
        x.backward()


def test_repeated_backward_accumulates():
    x = Value(np.array([2.0]))
    loss = ad.vsum(ad.square(x))
    loss.backward()
    first = x.grad.copy()
    loss.backward()
    assert np.allclose(x.grad, 2 * first)
    ad.zero_grad([x])
    assert x.grad is None


def test_elementwise_shape_mismatch_is_an_error():
    with pytest.raises(ValueError):
        ad.add(Value(np.ones(3)), Value(np.ones(4)))


def test_scalar_broadcast():
    x = Value(np.ones((2, 2)))
    y = x * 3.0 + 1.0
    assert np.array_equal(y.data, np.full((2, 2), 4.0))
    ad.vsum(y).backward()
    assert np.array_equal(x.grad, np.full((2, 2), 3.0))


@pytest.mark.parametrize("op", [ad.sin, ad.sqrt, ad.square, ad.absolute, ad.relu])
def test_unary_grads_match_finite_differences(op):
    rng = np.random.default_rng(3)
    x = Value(rng.uniform(0.5, 2.0, size=(3, 4)))
    ad.vmean(op(x)).backward()

    def loss():
        return ad.vmean(op(x)).item()

    fd = ad.finite_difference_grad(loss, [x])[0]
    assert rel_err(x.grad, fd) <= 1e-6


@pytest.mark.parametrize("make", [
    lambda a, b: ad.add(a, b),
    lambda a, b: ad.sub(a, b),
    lambda a, b: ad.mul(a, b),
    lambda a, b: ad.div(a, b),
])
def test_binary_grads_match_finite_differences(make):
    rng = np.random.default_rng(4)
    a = Value(rng.uniform(0.5, 2.0, size=(2, 3)))
    b = Value(rng.uniform(0.5, 2.0, size=(2, 3)))
    ad.vmean(make(a, b)).backward()

    def loss():
        return ad.vmean(make(a, b)).item()

    fd = ad.finite_difference_grad(loss, [a, b])
    assert rel_err(a.grad, fd[0]) <= 1e-6
    assert rel_err(b.grad, fd[1]) <= 1e-6


@pytest.mark.parametrize("build", [
    lambda rng: ("channel_matmul",
                 [Value(rng.standard_normal((4, 3))), Value(rng.standard_normal((2, 5, 3)))],
                 lambda w, h: ad.channel_matmul(w, h)),
    lambda rng: ("outer_payload",
                 [Value(rng.standard_normal((2, 3, 4))), Value(rng.standard_normal((2, 2, 4)))],
                 lambda a, b: ad.outer_payload(a, b)),
    lambda rng: ("channel_scale",
                 [Value(rng.standard_normal((2, 3, 4))), Value(rng.standard_normal((2, 1, 4)))],
                 lambda h, s: ad.channel_scale(h, s)),
    lambda rng: ("bias_add",
                 [Value(rng.standard_normal((5, 1, 4))), Value(rng.standard_normal((1, 4)))],
                 lambda x, b: ad.bias_add(x, b)),
    lambda rng: ("batch_matmul",
                 [Value(rng.standard_normal((2, 3, 4))), Value(rng.standard_normal((2, 4, 2)))],
                 lambda a, b: ad.batch_matmul(a, b)),
    lambda rng: ("embed_identity",
                 [Value(rng.standard_normal((2, 1, 3)))],
                 lambda s: ad.embed_identity(s, 3)),
    lambda rng: ("swap_last2",
                 [Value(rng.standard_normal((2, 3, 4)))],
                 lambda a: ad.swap_last2(a)),
    lambda rng: ("concat",
                 [Value(rng.standard_normal((2, 3, 2))), Value(rng.standard_normal((2, 3, 4)))],
                 lambda a, b: ad.concat([a, b], axis=2)),
    lambda rng: ("narrow",
                 [Value(rng.standard_normal((2, 3, 6)))],
                 lambda a: ad.narrow(a, 2, 1, 3)),
    lambda rng: ("repeat_rows",
                 [Value(rng.standard_normal((3, 2, 2)))],
                 lambda a: ad.repeat_rows(a, 4)),
    lambda rng: ("group_sum_rows",
                 [Value(rng.standard_normal((12, 2, 2)))],
                 lambda a: ad.group_sum_rows(a, 4)),
])
def test_structured_op_grads_match_finite_differences(build):
    rng = np.random.default_rng(5)
    name, args, fn = build(rng)
    target = np.asarray(fn(*args).data) + rng.standard_normal(fn(*args).shape)
    loss = ad.vmean(ad.square(ad.sub(fn(*args), Value(target))))
    ad.zero_grad(args)
    loss.backward()

    def loss_fn():
        return ad.vmean(ad.square(ad.sub(fn(*args), Value(target)))).item()

    fd = ad.finite_difference_grad(loss_fn, args)
    for v, f in zip(args, fd):
        assert rel_err(v.grad, f) <= 1e-6, name


def test_gather_scatter_grads():
    rng = np.random.default_rng(6)
    x = Value(rng.standard_normal((5, 2, 3)))
    idx = np.array([0, 3, 3, 1])
    target = rng.standard_normal((5, 2, 3))

    def forward():
        g = ad.gather_rows(x, idx)
        return ad.vmean(ad.square(ad.sub(ad.scatter_sum_rows(g, idx, 5), Value(target))))

    loss = forward()
    ad.zero_grad([x])
    loss.backward()
    fd = ad.finite_difference_grad(lambda: forward().item(), [x])[0]
    assert rel_err(x.grad, fd) <= 1e-6


def test_sgd_single_step():
    p = Value(np.array([1.0]))
    p.grad = np.array([2.0])
    ad.SGD([p], lr=0.1, momentum=0.0).step()
    assert p.data == pytest.approx(0.8)


def test_adam_first_step_moves_against_gradient_sign():
    p = Value(np.array([1.0, -2.0]))
    p.grad = np.array([0.3, -0.7])
    ad.Adam([p], lr=0.05).step()
    # bias correction makes the first step almost exactly lr * sign(grad)
    assert np.allclose(p.data, [1.0 - 0.05, -2.0 + 0.05], atol=1e-6)


def test_steplr_schedule():
    sched = ad.StepLR(step_size=7, gamma=0.1)
    lrs = [sched.lr_at(1.0, e) for e in range(15)]
    assert lrs[6] == pytest.approx(1.0)
    assert lrs[7] == pytest.approx(0.1)
    assert lrs[14] == pytest.approx(0.01)


def test_momentum_sgd_matches_reference():
    p = Value(np.array([0.0]))
    opt = ad.SGD([p], lr=0.1, momentum=0.9)
    vel, ref = 0.0, 0.0
    for g in (1.0, -0.5, 0.25):
        p.grad = np.array([g])
        opt.step()
        vel = 0.9 * vel + g
        ref -= 0.1 * vel
        assert p.data == pytest.approx(ref)


def test_first_nonfinite_op_names_the_culprit():
    x = Value(np.array([1.0, 0.0]))
    y = ad.div(Value(np.array([1.0, 1.0])), x)  # inf appears here
    z = ad.vsum(ad.mul(y, y))
    assert ad.first_nonfinite_op(z) == "div"


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(123)
        w = Value(rng.standard_normal((3, 3)))
        x = Value(rng.standard_normal((8, 3)))
        loss = ad.vmean(ad.square(ad.matmul(x, w)))
        ad.zero_grad([w])
        loss.backward()
        return loss.item(), w.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    assert np.array_equal(g1, g2)
