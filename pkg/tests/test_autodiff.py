import numpy as np
import pytest

from interviewgen import autodiff as ad
from interviewgen.autodiff import (
    AdamState,
    GradientCheckError,
    Parameter,
    ShapeError,
    Tensor,
    adam_step,
    gradient_check,
)


def test_matmul_identity():
    a = np.arange(6.0).reshape(2, 3)
    out = ad.matmul(Tensor(a), Tensor(np.eye(3)))
    assert np.array_equal(out.data, a)


def test_softmax_symmetry_and_positivity():
    out = ad.softmax(Tensor([0.0, 0.0, 0.0, 0.0]))
    assert np.allclose(out.data, 0.25)
    z = ad.softmax(Tensor(np.random.default_rng(0).normal(size=(7, 9))))
    assert np.all(z.data > 0)
    assert np.allclose(z.data.sum(-1), 1.0, atol=1e-6)


def test_sigmoid_analytic():
    assert ad.sigmoid(Tensor(0.0)).item() == pytest.approx(0.5)


def test_softmax_rejects_empty_axis():
    with pytest.raises(ShapeError):
        ad.softmax(Tensor(np.zeros((3, 0))))


def test_shape_mismatch_names_shapes():
    with pytest.raises(ShapeError) as exc:
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)


def test_backward_requires_scalar():
    t = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ShapeError):
        t.backward()


def test_backward_sum_gives_ones():
    p = Parameter("p", np.array([3.0, -1.0, 2.0]), "manager")
    ad.tsum(p.tensor).backward()
    assert np.array_equal(p.grad, np.ones(3))


def test_backward_quadratic_analytic():
    p = Parameter("p", np.array([1.0, 2.0]), "manager")
    ad.tsum(ad.mul(p.tensor, p.tensor)).backward()
    assert np.allclose(p.grad, [2.0, 4.0])


def test_fanout_accumulates_sum_of_branches():
    p = Parameter("p", np.array([2.0]), "manager")
    x = p.tensor
    y = ad.add(ad.mul(x, 3.0), ad.mul(x, x))  # 3x + x^2 -> 3 + 2x = 7
    ad.tsum(y).backward()
    assert np.allclose(p.grad, [7.0])


def test_noncontributing_parameter_gets_no_grad():
    used = Parameter("used", np.array([1.0]), "manager")
    unused = Parameter("unused", np.array([1.0]), "manager")
    ad.tsum(used.tensor).backward()
    assert unused.grad is None


PRIMITIVES = [
    ("add", lambda a, b: ad.add(a, b), 2),
    ("sub", lambda a, b: ad.sub(a, b), 2),
    ("mul", lambda a, b: ad.mul(a, b), 2),
    ("div", lambda a, b: ad.div(a, ad.add(ad.mul(b, b), 0.5)), 2),
    ("matmul", lambda a, b: ad.matmul(a, ad.swapaxes(b, 0, 1)), 2),
    ("relu", lambda a: ad.relu(a), 1),
    ("sigmoid", lambda a: ad.sigmoid(a), 1),
    ("exp", lambda a: ad.exp(a), 1),
    ("log", lambda a: ad.log(ad.add(ad.mul(a, a), 0.5)), 1),
    ("sqrt", lambda a: ad.sqrt(ad.add(ad.mul(a, a), 0.5)), 1),
    ("softmax", lambda a: ad.softmax(a), 1),
    ("log_softmax", lambda a: ad.log_softmax(a), 1),
    ("mean", lambda a: ad.tmean(a, axis=-1), 1),
    ("sum_keep", lambda a: ad.tsum(a, axis=0, keepdims=True), 1),
    ("concat", lambda a, b: ad.concat([a, b], axis=-1), 2),
    ("swapaxes", lambda a: ad.swapaxes(a, 0, 1), 1),
    ("reshape", lambda a: ad.reshape(a, (-1,)), 1),
    ("maximum", lambda a: ad.maximum_scalar(a, 0.1), 1),
    ("cosine", lambda a: ad.cosine_matrix(a), 1),
]


@pytest.mark.parametrize("name,fn,arity", PRIMITIVES, ids=[p[0] for p in PRIMITIVES])
def test_primitive_gradients_match_finite_differences(name, fn, arity):
    # < 1e-4 relative error at double precision, >= 20 seeds
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params = {
            f"x{i}": Parameter(f"x{i}", rng.normal(size=(4, 5)), "manager")
            for i in range(arity)
        }

        def loss():
            out = fn(*[p.tensor for p in params.values()])
            return ad.tsum(ad.mul(out, out))

        err = gradient_check(loss, params, epsilon=1e-5,
                             rng=np.random.default_rng(seed + 100), samples_per_param=3)
        assert err < 1e-4, f"{name} seed {seed}: rel err {err}"


def test_masked_softmax_gradient():
    mask = np.array([[True, True, False, True, True]] * 4)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = Parameter("z", rng.normal(size=(4, 5)), "manager")

        def loss():
            s = ad.softmax(p.tensor, mask=mask)
            return ad.tsum(ad.mul(s, s))

        err = gradient_check(loss, {"z": p}, epsilon=1e-5,
                             rng=np.random.default_rng(seed), samples_per_param=4)
        assert err < 1e-4


def test_embedding_and_gather_gradients():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        table = Parameter("t", rng.normal(size=(7, 4)), "manager")
        ids = rng.integers(0, 7, size=(3, 5))
        lengths = rng.integers(1, 5, size=3)

        def loss():
            x = ad.embedding(table.tensor, ids)
            picked = ad.gather_rows(x, lengths)
            y = ad.take_axis1(x, np.array([1, 1, 0, 3, 2]))
            return ad.add(ad.tsum(ad.mul(picked, picked)), ad.tsum(ad.mul(y, y)))

        err = gradient_check(loss, {"t": table}, epsilon=1e-5,
                             rng=np.random.default_rng(seed), samples_per_param=5)
        assert err < 1e-4


def test_layer_norm_gradient():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params = {
            "x": Parameter("x", rng.normal(size=(3, 6)), "manager"),
            "g": Parameter("g", 1.0 + 0.1 * rng.normal(size=6), "manager"),
            "b": Parameter("b", 0.1 * rng.normal(size=6), "manager"),
        }

        def loss():
            y = ad.layer_norm(params["x"].tensor, params["g"].tensor, params["b"].tensor)
            return ad.tsum(ad.mul(y, y))

        err = gradient_check(loss, params, epsilon=1e-5,
                             rng=np.random.default_rng(seed), samples_per_param=3)
        assert err < 1e-4


def test_gradient_check_quadratic_form_tight():
    rng = np.random.default_rng(3)
    q = Parameter("q", rng.normal(size=(5, 5)), "manager")
    x = Tensor(rng.normal(size=5))

    def loss():
        return ad.tsum(ad.mul(ad.matmul(x, q.tensor), ad.matmul(x, q.tensor)))

    err = gradient_check(loss, {"q": q}, epsilon=1e-4,
                         rng=np.random.default_rng(0), samples_per_param=10)
    assert err < 1e-6


def test_gradient_check_softmax_cross_entropy():
    rng = np.random.default_rng(4)
    w = Parameter("w", rng.normal(size=(6, 9)), "manager")
    x = Tensor(rng.normal(size=(4, 6)))
    target = rng.integers(0, 9, size=4)

    def loss():
        logits = ad.matmul(x, w.tensor)
        logp = ad.log_softmax(logits)
        return ad.mul(ad.tmean(ad.take_last_axis(logp, target)), -1.0)

    err = gradient_check(loss, {"w": w}, epsilon=1e-4,
                         rng=np.random.default_rng(0), samples_per_param=8)
    assert err < 1e-4


def test_gradient_check_constant_function():
    p = Parameter("p", np.ones(3), "manager")

    def loss():
        return ad.add(ad.tsum(ad.mul(p.tensor, 0.0)), 4.0)

    err = gradient_check(loss, {"p": p}, epsilon=1e-5, rng=np.random.default_rng(0))
    assert err == 0.0


def test_gradient_check_reports_nonfinite_with_name():
    p = Parameter("bad_param", np.array([1.0]), "manager")

    def loss():
        return ad.mul(ad.log(ad.sub(p.tensor, 1.0)), 1.0)  # log(0) -> -inf

    with pytest.raises(GradientCheckError):
        gradient_check(loss, {"bad_param": p}, epsilon=1e-5, rng=np.random.default_rng(0))


def test_gradient_check_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        gradient_check(lambda: Tensor(0.0), {}, epsilon=0.0)


# -- adam ------------------------------------------------------------------------


def test_adam_zero_grad_keeps_parameters():
    p = Parameter("p", np.array([1.0, 2.0]), "manager")
    p.tensor.grad = np.zeros(2)
    before = p.data.copy()
    adam_step(AdamState(learning_rate=0.1), {"p": p})
    assert np.array_equal(p.data, before)


def test_adam_single_step_hand_computed():
    # one scalar, g=1, lr=0.1: bias-corrected update is lr * 1 / (1 + eps)
    p = Parameter("p", np.array([1.0]), "manager")
    p.tensor.grad = np.array([1.0])
    state = AdamState(learning_rate=0.1)
    adam_step(state, {"p": p})
    b1, b2, eps = 0.9, 0.999, 1e-8
    m_hat = (1 - b1) * 1.0 / (1 - b1)
    v_hat = (1 - b2) * 1.0 / (1 - b2)
    expected = 1.0 - 0.1 * m_hat / (np.sqrt(v_hat) + eps)
    assert p.data[0] == pytest.approx(expected, abs=1e-15)
    assert p.data[0] == pytest.approx(0.9, abs=1e-7)
    assert state.step == 1
    assert p.tensor.grad is None


def test_adam_freeze_filter_leaves_parameters_untouched():
    gen = Parameter("g", np.array([1.0]), "generator")
    mgr = Parameter("m", np.array([1.0]), "manager")
    mgr.tensor.grad = np.array([1.0])
    gen_bytes = gen.data.tobytes()
    adam_step(AdamState(learning_rate=0.1), {"g": gen, "m": mgr}, train_tags={"manager"})
    assert gen.data.tobytes() == gen_bytes
    assert mgr.data[0] != 1.0


def test_adam_missing_grad_rejected():
    p = Parameter("p", np.array([1.0]), "manager")
    with pytest.raises(ValueError, match="missing grad"):
        adam_step(AdamState(), {"p": p})


def test_adam_deterministic():
    def run():
        p = Parameter("p", np.array([1.0, -2.0]), "manager")
        state = AdamState(learning_rate=0.05)
        for i in range(5):
            p.tensor.grad = np.array([0.5, -0.25]) * (i + 1)
            adam_step(state, {"p": p})
        return p.data.copy()

    assert np.array_equal(run(), run())


def test_parameter_tag_validation():
    with pytest.raises(ValueError):
        Parameter("p", np.zeros(1), "unknown_tag")
