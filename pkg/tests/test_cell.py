import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ltcblock.cell import (Checkpoint, LtcParameters, ModelConfig, ObservationWindow,
                           ResolvedParameters, classify, forward_sequence, fused_step,
                           init_parameters, positive, positive_inverse, predict_proba,
                           window_features)
from ltcblock.errors import ConfigError, NumericError, WiringError
from ltcblock.wiring import LayerCounts, NcpWiring, Synapse, build_ncp

from naive_ltc import naive_forward


def resolved(wiring, **over):
    n, s = wiring.counts.n_state, wiring.n_synapses
    _, _, pol = wiring.arrays()
    base = dict(tau=np.ones(n), weight=np.zeros(s), gamma=np.ones(s), mu=np.zeros(s),
                reversal=pol.astype(float), input_scale=np.ones(wiring.counts.n_sensory),
                input_bias=np.zeros(wiring.counts.n_sensory),
                output_scale=np.ones(wiring.counts.n_motor), output_bias=0.0)
    base.update(over)
    return ResolvedParameters(**{k: (np.asarray(v, float) if k != "output_bias" else v)
                                 for k, v in base.items()})


def tiny_wiring():
    """1 sensory, 1 inter, 1 command, 1 motor; a single sensory->inter synapse
    plus the minimum to stay structurally valid."""
    syn = (Synapse(0, 1, 1), Synapse(1, 2, 1), Synapse(2, 3, 1))
    return NcpWiring(LayerCounts(1, 1, 1, 1), syn)


# -- init ---------------------------------------------------------------

def test_init_ranges_and_polarity():
    w = build_ncp(seed=2)
    p = init_parameters(w, seed=7)
    r = p.resolve()
    assert np.all((r.tau >= 1.0) & (r.tau <= 5.0))
    assert np.all((r.weight >= 0.01) & (r.weight <= 1.0))
    assert np.all((r.gamma >= 3) & (r.gamma <= 8))
    assert np.all((r.mu >= 0.3) & (r.mu <= 0.8))
    _, _, pol = w.arrays()
    assert np.array_equal(np.sign(r.reversal), pol)
    assert np.all(np.abs(r.reversal) == 1.0)
    assert np.all(r.input_scale == 1) and np.all(r.input_bias == 0)
    assert np.all(r.output_scale == 1) and r.output_bias == 0


def test_init_deterministic_and_seed_sensitive():
    w = build_ncp(seed=2)
    a, b = init_parameters(w, 7), init_parameters(w, 7)
    assert a.to_dict() == b.to_dict()
    assert init_parameters(w, 8).to_dict() != a.to_dict()


def test_init_rejects_invalid_wiring():
    w = build_ncp(seed=0)
    with pytest.raises(WiringError):
        init_parameters(NcpWiring(w.counts, w.synapses + (Synapse(0, 8, 1),)), 0)


def test_parameter_count_depends_only_on_wiring():
    w = build_ncp(seed=3)
    sizes = {init_parameters(w, s).n_trainable for s in range(5)}
    assert sizes == {w.counts.n_state + 3 * w.n_synapses + 2 * 2 + 1 + 1}


def test_positive_map_round_trip():
    v = np.array([0.01, 1.0, 4.5])
    assert np.allclose(positive(positive_inverse(v)), v, rtol=1e-12, atol=0)


# -- fused step ---------------------------------------------------------

def test_fused_step_leak_only():
    w = tiny_wiring()
    r = resolved(w)
    x = fused_step([1.0, 0.0, 0.0], [0.3], r, w, dt=0.1)
    assert x[0] == pytest.approx(1 / 1.1, abs=1e-15)


def test_fused_step_single_synapse():
    w = tiny_wiring()
    # sigma argument 0 -> sigma = 0.5; w=2, A=1, x_post=0, tau=1, dt=0.1
    r = resolved(w, weight=[2.0, 0.0, 0.0], gamma=[1.0, 1.0, 1.0], mu=[0.0, 0.0, 0.0])
    x = fused_step([0.0, 0.0, 0.0], [0.0], r, w, dt=0.1)
    assert x[0] == pytest.approx(0.1 / 1.2, abs=1e-15)
    assert x[0] == pytest.approx(0.083333333333333, abs=1e-14)


def test_zero_state_zero_weights_stays_zero():
    w = build_ncp(seed=0)
    r = resolved(w)
    x = fused_step(np.zeros(7), [0.7, -0.2], r, w, dt=1 / 6)
    assert np.all(x == 0.0)


def test_fused_step_errors():
    w = build_ncp(seed=0)
    p = init_parameters(w, 0)
    with pytest.raises(ConfigError):
        fused_step(np.zeros(7), [0, 0], p, w, dt=0.0)
    with pytest.raises(NumericError):
        fused_step(np.zeros(7), [np.nan, 0], p, w, dt=0.1)


def test_sensory_activation_monotone():
    """Raising a sensory input never lowers a positive-polarity synapse's pull."""
    w = tiny_wiring()
    p = resolved(w, weight=[1.0, 0.0, 0.0], gamma=[5.0, 1.0, 1.0], mu=[0.4, 0, 0])
    xs = [fused_step([0.0, 0.0, 0.0], [u], p, w, 0.1)[0] for u in np.linspace(-1, 1, 41)]
    assert np.all(np.diff(xs) >= 0)


# -- forward ------------------------------------------------------------

def test_zero_weights_probability_is_sigmoid_bias():
    w = build_ncp(seed=0)
    rng = np.random.default_rng(0)
    win = rng.uniform(-1, 1, (32, 2))
    traj, p = forward_sequence(win, resolved(w), w)
    assert p == 0.5
    assert traj.shape == (32, 7)
    _, p = forward_sequence(win, resolved(w, output_bias=1.3), w)
    assert p == pytest.approx(1 / (1 + math.exp(-1.3)), abs=1e-15)


def test_trajectory_length_matches_window():
    w = build_ncp(seed=0)
    for T in (2, 5, 32):
        traj, _ = forward_sequence(ObservationWindow(np.zeros((T, 2))), init_parameters(w, 0), w)
        assert traj.shape == (T, w.counts.n_state)


def test_leak_only_closed_form():
    w = build_ncp(seed=0)
    tau = np.linspace(1.0, 4.0, 7)
    r = resolved(w, tau=tau)
    x0 = np.linspace(-0.9, 0.9, 7)
    U, n = 6, 10
    traj, _ = forward_sequence(np.zeros((n, 2)), r, w, ode_unfolds=U, initial_state=x0)
    for row in range(n):
        expect = x0 * (1 + (1 / U) / tau) ** (-(row + 1) * U)
        assert np.allclose(traj[row], expect, rtol=1e-12, atol=1e-15)


def test_matches_naive_reference():
    rng = np.random.default_rng(123)
    for k in range(10):
        w = build_ncp(seed=k)
        p = init_parameters(w, k + 100)
        p = p.with_vector(p.to_vector() + rng.normal(0, 0.5, p.n_trainable))
        win = window_features(rng.uniform(0, 1, 32))
        traj, prob = forward_sequence(win, p, w)
        ntraj, nprob = naive_forward(win, w, p.resolve())
        assert np.max(np.abs(traj - np.array(ntraj))) <= 1e-12
        assert abs(prob - nprob) <= 1e-12


def test_forward_is_deterministic():
    w = build_ncp(seed=1)
    p = init_parameters(w, 1)
    win = window_features(np.random.default_rng(5).uniform(0, 1, 32))
    a = forward_sequence(win, p, w)
    b = forward_sequence(win, p, w)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_batch_equals_single():
    w = build_ncp(seed=1)
    p = init_parameters(w, 1)
    wins = window_features(np.random.default_rng(5).uniform(0, 1, (6, 32)))
    batch = predict_proba(wins, p, w)
    single = [forward_sequence(x, p, w)[1] for x in wins]
    assert np.array_equal(batch, single)


def test_nonfinite_window_rejected():
    w = build_ncp(seed=1)
    win = np.zeros((4, 2))
    win[2, 1] = np.inf
    with pytest.raises(NumericError):
        forward_sequence(win, init_parameters(w, 0), w)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 50.0))
def test_state_bounded_by_reversal_hull(seed, scale):
    rng = np.random.default_rng(seed)
    w = build_ncp(seed=seed)
    p = init_parameters(w, seed)
    p = p.with_vector(p.to_vector() + rng.normal(0, 2.0, p.n_trainable))
    win = rng.normal(0, scale, (64, 2))
    x0 = rng.uniform(-1, 1, 7)
    traj, prob = forward_sequence(win, p, w, initial_state=x0)
    assert np.all(np.isfinite(traj))
    assert np.all(np.abs(traj) <= 1.0 + 1e-12)
    assert 0.0 <= prob <= 1.0


# -- classify -----------------------------------------------------------

@pytest.mark.parametrize("p, expected", [(0.7, 1), (0.3, 0), (0.5, 1), (0.0, 0), (1.0, 1)])
def test_classify(p, expected):
    assert classify(p) == expected


@pytest.mark.parametrize("p", [-0.01, 1.01, float("nan")])
def test_classify_rejects_out_of_range(p):
    with pytest.raises(ConfigError):
        classify(p)


# -- features & checkpoint ----------------------------------------------

def test_window_features():
    f = window_features(np.array([0.5, 0.7, 0.4]))
    assert np.allclose(f, [[0.5, 0.0], [0.7, 0.2], [0.4, -0.3]])


def test_checkpoint_round_trip_bit_exact():
    w = build_ncp(seed=9)
    p = init_parameters(w, 9)
    p = p.with_vector(p.to_vector() * np.pi)
    ck = Checkpoint(w, p, ModelConfig(horizon=5))
    again = Checkpoint.loads(ck.dumps())
    assert again.dumps() == ck.dumps()
    assert np.array_equal(again.params.to_vector(), p.to_vector())
    assert again.config.horizon == 5 and again.wiring == w


def test_checkpoint_rejects_unknown_version():
    w = build_ncp(seed=9)
    text = Checkpoint(w, init_parameters(w, 0)).dumps().replace('"format_version": 1', '"format_version": 7')
    with pytest.raises(ConfigError):
        Checkpoint.loads(text)
