import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from elmkit.bptt import backward, replay, rollout
from elmkit.bptt.gradcheck import KINDS, build_case, grad_check
from elmkit.cells import (
    AlifParams,
    ElmState,
    LifParams,
    elm_step,
    init_elm,
    init_lif,
    init_lstm,
    init_snn,
    theta_for_tau,
    zero_state,
)
from elmkit.numerics import NonFiniteError, make_rng
from elmkit.sequence import SequenceBatch


def random_batch(seed, B, T, C, scale=0.5):
    rng = make_rng(seed, "test-batch")
    return SequenceBatch(rng.normal(0, scale, (B, T, C)), rng.uniform(0.5, 2.0, T))


def small_elm(seed, **kw):
    return init_elm(make_rng(seed, "test-bptt"), 5, 3, 2, d_mlp=6, tau_init=(2.0, 40.0),
                    tau_bounds=(0.5, 100.0), **kw)


# ---- rollout -------------------------------------------------------------

def test_rollout_single_step_matches_cell_step():
    p = small_elm(0)
    batch = random_batch(0, 3, 1, 5)
    ys, tape = rollout(p, batch)
    state = ElmState(np.zeros((3, 5)), np.zeros((3, 3)))
    _, y = elm_step(p, state, batch.inputs[:, 0], float(batch.dt[0]))
    np.testing.assert_array_equal(ys[:, 0], y)
    assert len(tape) == 1


def test_rollout_matches_stepwise_loop():
    p = small_elm(1, branch=None)
    batch = random_batch(1, 2, 15, 5)
    ys, _ = rollout(p, batch)
    state = ElmState(np.zeros((2, 5)), np.zeros((2, 3)))
    for t in range(15):
        state, y = elm_step(p, state, batch.inputs[:, t], float(batch.dt[t]))
        np.testing.assert_array_equal(ys[:, t], y)


def test_zero_length_sequence():
    p = small_elm(2)
    batch = SequenceBatch(np.zeros((2, 0, 5)), np.zeros(0))
    ys, tape = rollout(p, batch)
    assert ys.shape == (2, 0, 2)
    assert tape.empty and len(tape) == 0
    grads = backward(tape, p, np.zeros((2, 0, 2)))
    assert all(np.all(g == 0) for g in grads.values())


def test_rollout_deterministic_and_replay_bit_exact():
    p = small_elm(3)
    batch = random_batch(3, 2, 30, 5)
    a, tape_a = rollout(p, batch)
    b, _ = rollout(p, batch)
    assert np.array_equal(a, b)
    assert np.array_equal(replay(tape_a, p), tape_a.outputs)


def test_replay_with_dropout_masks():
    from elmkit.bptt import draw_masks

    p = small_elm(4)
    batch = random_batch(4, 2, 12, 5)
    masks = draw_masks(p, 2, 12, make_rng(0), dropout_p=0.5)
    ys, tape = rollout(p, batch, masks=masks)
    assert np.array_equal(replay(tape, p), ys)
    plain, _ = rollout(p, batch)
    assert not np.array_equal(plain, ys)


def test_rollout_reports_non_finite_step():
    p = small_elm(5)
    x = np.zeros((1, 10, 5))
    x[0, 6] = np.nan
    with pytest.raises(NonFiniteError, match="6"):
        rollout(p, SequenceBatch(x, 1.0))


# ---- backward ------------------------------------------------------------------

@pytest.mark.parametrize("make", [
    lambda: small_elm(0),
    lambda: init_lstm(make_rng(0), 5, 4, 2),
    lambda: init_lif(make_rng(0), 5, adaptive=True, strength=0.1),
    lambda: init_snn(make_rng(0), 5, 2, n_total=12, n_syn=4),
])
def test_zero_loss_grads_give_zero_gradients(make):
    p = make()
    batch = random_batch(6, 2, 10, 5)
    ys, tape = rollout(p, batch)
    grads = backward(tape, p, np.zeros_like(ys))
    assert set(grads) == set(p.trainable())
    for k, g in grads.items():
        assert g.shape == p.trainable()[k].shape
        assert np.all(g == 0)


def test_backward_rejects_foreign_tape():
    p = small_elm(0)
    other = init_elm(make_rng(0), 5, 4, 2)
    ys, tape = rollout(p, random_batch(0, 1, 4, 5))
    with pytest.raises(ValueError, match="tape"):
        backward(tape, other, np.zeros((1, 4, 2)))
    with pytest.raises(ValueError):
        backward(tape, init_lstm(make_rng(0), 5, 4, 2), np.zeros((1, 4, 2)))


def test_backward_rejects_wrong_length_loss_grads():
    p = small_elm(0)
    _, tape = rollout(p, random_batch(0, 1, 4, 5))
    with pytest.raises(ValueError):
        backward(tape, p, np.zeros((1, 3, 2)))


def toy_symbolic(T, lo, hi, tau_s, w_s, lam):
    """Unrolled scalar ELM (single unit, no hidden layer) as a sympy expression."""
    W0, W1, b, wy, by, th = sp.symbols("W0 W1 b wy by th")
    xs = sp.symbols(f"x0:{T}")
    tau = lo + (hi - lo) / (1 + sp.exp(-th))
    k_m = sp.exp(-1 / tau)
    k_s = sp.exp(sp.Rational(-1) / tau_s)
    s, m = 0, 0
    for x in xs:
        s = k_s * s + w_s * x
        m = k_m * m + lam * (1 - k_m) * sp.tanh(W0 * s + W1 * k_m * m + b)
    target = sp.Rational(3, 10)
    loss = (wy * m + by - target) ** 2
    return loss, (W0, W1, b, wy, by, th), xs


@pytest.mark.parametrize("T", [1, 2, 3, 4])
def test_scalar_toy_matches_symbolic_derivative(T):
    lo, hi, tau_s, w_s, lam = 0.5, 20.0, 3, sp.Rational(7, 10), 2
    rng = make_rng(T, "toy")
    p = init_elm(rng, 1, 1, 1, l_mlp=0, lam=float(lam), tau_s=float(tau_s), w_s=float(w_s),
                 tau_init=(4.0, 4.0), tau_bounds=(lo, hi))
    p = p.with_trainable({"theta_m": rng.normal(size=1)})
    x = rng.normal(size=T)
    ys, tape = rollout(p, SequenceBatch(x.reshape(1, T, 1), 1.0))
    gy = np.zeros_like(ys)
    gy[0, -1, 0] = 2 * (ys[0, -1, 0] - 0.3)
    grads = backward(tape, p, gy)

    loss, syms, xs = toy_symbolic(T, sp.Rational(1, 2), hi, tau_s, w_s, lam)
    W, bias = p.mlp_weights[0], p.mlp_biases[0]
    values = dict(zip(syms, [W[0, 0], W[0, 1], bias[0], p.w_y[0, 0], p.b_y[0], p.theta_m[0]]))
    values.update(zip(xs, x))
    expect = [float(sp.diff(loss, s).subs(values).evalf(30)) for s in syms]
    got = [grads["mlp_w0"][0, 0], grads["mlp_w0"][0, 1], grads["mlp_b0"][0],
           grads["w_y"][0, 0], grads["b_y"][0], grads["theta_m"][0]]
    np.testing.assert_allclose(got, expect, rtol=1e-10, atol=1e-14)


def test_theta_gradient_follows_bounded_reparametrization():
    # differentiate w.r.t. tau directly, then apply d tau / d theta by hand
    p = small_elm(7)
    batch = random_batch(7, 2, 25, 5)
    c = make_rng(7, "c").normal(size=(2, 25, 2))
    _, tape = rollout(p, batch)
    g_theta = backward(tape, p, c)["theta_m"]
    lo, hi = p.tau_bounds
    tau = p.tau_m.copy()
    h = 1e-6
    g_tau = np.zeros_like(tau)
    for i in range(tau.size):
        vals = []
        for sign in (1, -1):
            t = tau.copy()
            t[i] += sign * h * tau[i]
            q = p.with_trainable({"theta_m": theta_for_tau(t, (lo, hi))})
            vals.append(float((rollout(q, batch)[0] * c).sum()))
        g_tau[i] = (vals[0] - vals[1]) / (2 * h * tau[i])
    sig = (tau - lo) / (hi - lo)
    np.testing.assert_allclose(g_theta, g_tau * (hi - lo) * sig * (1 - sig), rtol=1e-6)


def test_long_sequence_gradients_stay_finite():
    p = init_elm(make_rng(8), 4, 3, 1, tau_init=(1.0, 1000.0))
    T = 10_000
    batch = SequenceBatch(make_rng(8, "x").normal(size=(1, T, 4)), 1.0)
    ys, tape = rollout(p, batch)
    grads = backward(tape, p, np.ones_like(ys))
    for g in grads.values():
        assert np.all(np.isfinite(g))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_gradient_linear_in_loss_grads(seed):
    p = small_elm(seed % 50)
    batch = random_batch(seed, 2, 8, 5)
    ys, tape = rollout(p, batch)
    rng = make_rng(seed, "lin")
    a, b = rng.normal(size=ys.shape), rng.normal(size=ys.shape)
    ga, gb, gab = backward(tape, p, a), backward(tape, p, b), backward(tape, p, 2 * a - b)
    for k in ga:
        np.testing.assert_allclose(gab[k], 2 * ga[k] - gb[k], rtol=1e-9, atol=1e-12)


# ---- finite-difference checks ------------------------------------------------

def test_grad_check_linear_cell():
    assert grad_check("elm_linear", seed=0).max_rel_err < 1e-8


@pytest.mark.parametrize("kind", ["elm", "elm_improved", "branch_elm", "lstm"])
@pytest.mark.parametrize("seed", range(20))
def test_grad_check_differentiable_cells(kind, seed):
    report = grad_check(kind, seed=seed)
    assert report.max_rel_err < 1e-4, report
    assert not report.surrogate


@pytest.mark.parametrize("kind", ["lif", "alif", "snn"])
def test_grad_check_flags_surrogate(kind):
    report = grad_check(kind, sizes={"T": 8}, seed=0)
    assert report.surrogate
    assert report.note == "non-differentiable path, surrogate used"
    assert report.passed(1e-4)


def test_grad_check_detects_corrupted_gradient():
    report = grad_check("elm", seed=0, corrupt=True)
    assert report.max_rel_err > 1e-4
    assert not report.passed(1e-4)


def test_grad_check_kinds_all_build():
    for kind in KINDS:
        p, batch, c, _ = build_case(kind, {"T": 3}, 0)
        assert c.shape[:2] == batch.inputs.shape[:2]


# ---- surrogate backward vs autograd ----------------------------------------

torch = pytest.importorskip("torch")


class _Spike(torch.autograd.Function):
    @staticmethod
    def forward(ctx, u, width):
        ctx.save_for_backward(u)
        ctx.width = width
        return (u >= 0).to(u.dtype)

    @staticmethod
    def backward(ctx, g):
        (u,) = ctx.saved_tensors
        return g * torch.clamp(1 - u.abs() / ctx.width, min=0), None


def torch_lif_grads(p, batch, c):
    T64 = torch.float64
    w = torch.tensor(p.w, dtype=T64, requires_grad=True)
    tau = torch.tensor(p.tau, dtype=T64, requires_grad=True)
    bias = torch.tensor(p.bias, dtype=T64, requires_grad=True)
    adaptive = isinstance(p, AlifParams)
    tau_a = torch.tensor(p.tau_a if adaptive else 1.0, dtype=T64, requires_grad=True)
    x = torch.tensor(batch.inputs)
    B, T, _ = x.shape
    v = torch.zeros(B, dtype=T64)
    a = torch.zeros(B, dtype=T64)
    loss = 0
    for t in range(T):
        dt = float(batch.dt[t])
        k = torch.exp(-dt / tau)
        v_pre = k * v + (1 - k) * (x[:, t] @ w + bias)
        thr = p.threshold + a
        z = _Spike.apply(v_pre - thr, p.surrogate_width)
        loss = loss + (torch.tensor(c[:, t, 0]) * v_pre + torch.tensor(c[:, t, 1]) * (v_pre - thr)).sum()
        v = z * p.v_reset + (1 - z) * v_pre
        if adaptive:
            a = torch.exp(-dt / tau_a) * a + p.strength * z
    loss.backward()
    out = {"w": w.grad.numpy(), "tau": np.array([tau.grad.item()]), "bias": np.array([bias.grad.item()])}
    if adaptive:
        out["tau_a"] = np.array([tau_a.grad.item()])
    return out


@pytest.mark.parametrize("adaptive", [False, True])
@pytest.mark.parametrize("seed", range(5))
def test_lif_surrogate_backward_matches_autograd(adaptive, seed):
    rng = make_rng(seed, "lif-oracle")
    cls = AlifParams if adaptive else LifParams
    kw = {"tau_a": 30.0, "strength": 0.3} if adaptive else {}
    p = cls(w=rng.normal(0, 1.0, 6), tau=5.0, bias=0.4, threshold=0.5, v_reset=-0.1, **kw)
    batch = SequenceBatch(rng.normal(0, 1.0, (3, 40, 6)), rng.uniform(0.5, 1.5, 40))
    c = rng.normal(size=(3, 40, 2))
    ys, tape = rollout(p, batch)
    assert tape.records["spike"].sum() > 0
    got = backward(tape, p, c)
    want = torch_lif_grads(p, batch, c)
    for k in want:
        np.testing.assert_allclose(got[k], want[k], rtol=1e-9, atol=1e-12, err_msg=k)


def torch_snn_grads(p, batch, c, spike_grad):
    T64 = torch.float64
    leaf = {k: torch.tensor(v, dtype=T64, requires_grad=True) for k, v in p.trainable().items()}

    def dense(w, idx, sign, n_src):
        n, k = w.shape
        rows = torch.arange(n).repeat_interleave(k)
        vals = (torch.relu(w) * torch.tensor(sign[idx])).reshape(-1)
        D = torch.zeros(n, n_src, dtype=T64)
        return D.index_put((rows, torch.tensor(idx.ravel())), vals, accumulate=True)

    Wr = dense(leaf["w_r"], p.idx_r, p._sign_r, p._sign_r.shape[0])
    Wo = dense(leaf["w_o"], p.idx_o, p._sign_o, p._sign_o.shape[0])
    x = torch.tensor(batch.inputs)
    B, T, _ = x.shape
    v_r = torch.zeros(B, p.n_rec, dtype=T64)
    z_r = torch.zeros_like(v_r)
    v_o = torch.zeros(B, p.n_out, dtype=T64)
    z_o = torch.zeros_like(v_o)
    out = torch.zeros_like(v_o)
    loss = 0
    R = p.reset * p.v_thr
    for t in range(T):
        dt = float(batch.dt[t])
        vpre_r = torch.exp(-dt / leaf["tau_r"]) * v_r + torch.cat([x[:, t], z_r], 1) @ Wr.T
        z_r_new = _Spike.apply(vpre_r - p.v_thr, p.surrogate_width)
        vpre_o = torch.exp(-dt / leaf["tau_o"]) * v_o + torch.cat([z_r_new, z_o], 1) @ Wo.T
        z_o = _Spike.apply(vpre_o - p.v_thr, p.surrogate_width)
        z_r = z_r_new
        out = np.exp(-dt / p.tau_out) * out + z_o
        v_r = vpre_r - R * z_r
        v_o = vpre_o - R * z_o
        loss = loss + (torch.tensor(c[:, t]) * out).sum() + spike_grad * (z_r.sum() + z_o.sum())
    loss.backward()
    return {k: t.grad.numpy() for k, t in leaf.items()}


@pytest.mark.parametrize("spike_grad", [0.0, 0.05])
@pytest.mark.parametrize("seed", range(3))
def test_snn_surrogate_backward_matches_autograd(seed, spike_grad):
    rng = make_rng(seed, "snn-oracle")
    p = init_snn(rng, 4, 3, n_total=20, n_syn=6, w_init=0.6)
    p = p.with_trainable({"w_r": p.w_r + rng.normal(0, 0.4, p.w_r.shape),
                          "tau_r": rng.uniform(5, 30, p.n_rec)})
    batch = SequenceBatch((rng.random((2, 30, 4)) < 0.3).astype(float), 1.0)
    c = rng.normal(size=(2, 30, 3))
    _, tape = rollout(p, batch)
    assert tape.extras["spike_count"] > 0
    got = backward(tape, p, c, spike_grad=spike_grad)
    want = torch_snn_grads(p, batch, c, spike_grad)
    for k in want:
        np.testing.assert_allclose(got[k], want[k], rtol=1e-9, atol=1e-12, err_msg=k)
