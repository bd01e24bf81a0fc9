import math

import numpy as np
import pytest

from momentbnn.data import GENERATE, PolyDataConfig, PolyDataSource, stream
from momentbnn.errors import ConfigError
from momentbnn.experiment import (
    DEFAULT_GRID,
    evaluate_on_grid,
    evaluation_grid,
    generate_batch,
    noise_sigma_squared,
    run_sweep,
    sample_targets,
)
from momentbnn.moments import MomentTensor
from momentbnn.network import Architecture, HeadMode, build_network, count_parameters
from momentbnn.objective import VARIANCE_FLOOR
from momentbnn.trainer import TrainConfig

# --- data ----------------------------------------------------------------


def test_noise_formula_values():
    assert noise_sigma_squared(0.25) == pytest.approx(0.01, abs=1e-15)
    assert noise_sigma_squared(0.0) == pytest.approx(0.01, abs=1e-15)
    assert noise_sigma_squared(0.5) == pytest.approx(0.09, abs=1e-15)


def test_noise_range():
    # the bracket spans [-0.1, 0.3] and crosses zero, so the square spans [0, 0.09]
    x = np.linspace(-10, 10, 200001)
    s2 = noise_sigma_squared(x)
    assert s2.min() >= 0.0 and s2.max() <= 0.09 + 1e-15
    assert s2.max() == pytest.approx(0.09, abs=1e-8)
    # zero where sin(2 pi x - pi/2) = -1/2, i.e. cos(2 pi x) = 1/2
    assert noise_sigma_squared(1.0 / 6.0) == pytest.approx(0.0, abs=1e-30)
    # the low-noise lobe peaks at x = 0 with 0.01
    lobe = x[np.abs(x) < 1.0 / 6.0]
    assert noise_sigma_squared(lobe).max() == pytest.approx(0.01, abs=1e-12)


def test_generate_without_noise():
    x, y = generate_batch(PolyDataConfig(noise_scale=0.0), 1000, np.random.default_rng(0))
    np.testing.assert_array_equal(y, x + 1.0)
    assert x.min() >= -0.5 and x.max() <= 0.5


def test_noise_statistics_at_fixed_x():
    n = 10**6
    x = np.full(n, 0.5)
    r = sample_targets(x, np.random.default_rng(1)) - x - 1.0
    se_mean = math.sqrt(0.09 / n)
    # SE of the sample variance of a normal: var * sqrt(2 / (n - 1))
    se_var = 0.09 * math.sqrt(2.0 / (n - 1))
    assert abs(r.mean()) <= 3 * se_mean
    assert abs(r.var(ddof=1) - 0.09) <= 3 * se_var


def test_generate_deterministic():
    a = generate_batch(PolyDataConfig(), 64, stream(5, GENERATE))
    b = generate_batch(PolyDataConfig(), 64, stream(5, GENERATE))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_data_source_shares_batches_across_instances():
    a, b = PolyDataSource(PolyDataConfig(), 3), PolyDataSource(PolyDataConfig(), 3)
    np.testing.assert_array_equal(a.train_batch(7, 64)[1], b.train_batch(7, 64)[1])
    assert not np.array_equal(a.train_batch(7, 64)[0], a.train_batch(8, 64)[0])
    assert not np.array_equal(a.train_batch(7, 64)[0], a.validation_batch(7, 64)[0])


def test_data_config_validation():
    with pytest.raises(ConfigError):
        PolyDataConfig(x_low=1.0, x_high=0.0)


# --- architecture and counting ------------------------------------------


@pytest.mark.parametrize(
    "width,mode,expected",
    [(1, "embedded", 8), (128, "embedded", 770), (128, "split", 1028), (4, "split", 36)],
)
def test_parameter_counts(width, mode, expected):
    arch = Architecture((width,), head_mode=mode)
    assert count_parameters(arch) == expected
    assert build_network(arch).n_learnable == expected


def test_parameter_count_ratio():
    e = count_parameters(Architecture((128,)))
    s = count_parameters(Architecture((128,), head_mode="split"))
    assert s / e == pytest.approx(1.335, abs=1e-3)
    assert round(100 * (s / e - 1)) == 34


@pytest.mark.parametrize("width", [1, 4, 16, 128])
def test_count_difference(width):
    e = count_parameters(Architecture((width,)))
    s = count_parameters(Architecture((width,), head_mode="split"))
    assert s - e == 2 * width + 2
    assert e == 6 * width + 2 and s == 8 * width + 4


def test_architecture_outputs_and_validation():
    assert build_network(Architecture((3,))).layers[-1].out_features == 1
    assert build_network(Architecture((3,), head_mode="split")).layers[-1].out_features == 2
    with pytest.raises(ConfigError):
        Architecture((0,))
    with pytest.raises(ConfigError):
        HeadMode.parse("both")


# --- predict -------------------------------------------------------------


def test_predict_zero_spread_is_deterministic():
    net = build_network(Architecture((8,)), np.random.default_rng(0))
    net.store.rho[:] = -40.0
    pred = net.predict(np.linspace(-1, 1, 11))
    np.testing.assert_allclose(pred.var_total, VARIANCE_FLOOR, rtol=1e-12)
    assert pred.var_aleatoric is None and pred.var_epistemic is None


def test_predict_embedded_is_layer_composition():
    rng = np.random.default_rng(1)
    net = build_network(Architecture((6,)), rng)
    net.store.rho[:] = rng.uniform(-3, -1, net.store.size)
    x = np.linspace(-1, 1, 9)
    h = MomentTensor.deterministic(x[:, None])
    for layer in net.layers:
        h = layer.forward(h)
    pred = net.predict(x)
    np.testing.assert_array_equal(pred.mean, h.mean[:, 0])
    np.testing.assert_array_equal(pred.var_total, h.var[:, 0] + VARIANCE_FLOOR)


def test_predict_split_components_sum_exactly():
    rng = np.random.default_rng(2)
    net = build_network(Architecture((6,), head_mode="split"), rng)
    net.store.rho[:] = rng.uniform(-3, -1, net.store.size)
    pred = net.predict(np.linspace(-2, 2, 51))
    assert np.all(pred.var_total - pred.var_aleatoric - pred.var_epistemic == 0.0)
    assert np.all(pred.var_aleatoric > 0) and np.all(pred.var_epistemic >= VARIANCE_FLOOR)


def test_predict_matches_weight_sampling_monte_carlo():
    """Embedded H=64: propagated variance vs 10^5 sampled forward passes."""
    rng = np.random.default_rng(3)
    arch = Architecture((64,), slope=0.1)
    net = build_network(arch)
    store = net.store
    store.mu[:] = rng.normal(0.0, 0.3, store.size)
    store.rho[:] = np.log(np.expm1(rng.uniform(0.1, 0.3, store.size)))
    x = np.array([-1.0, -0.3, 0.0, 0.4, 1.2])
    pred = net.predict(x)

    w1, b1, w2, b2 = (store.parameter(f"{i}.{p}") for i in (0, 2) for p in ("weight", "bias"))
    n, chunk = 10**5, 10**4
    outs = []
    for _ in range(n // chunk):
        def draw(p):
            return p.mu + p.sigma * rng.standard_normal((chunk,) + p.shape)

        W1, B1, W2, B2 = draw(w1), draw(b1), draw(w2), draw(b2)
        pre = W1[:, None, :, 0] * x[None, :, None] + B1[:, None, :]
        act = np.where(pre >= 0, pre, arch.slope * pre)
        outs.append(np.einsum("knh,kh->kn", act, W2[:, 0, :]) + B2[:, None, 0])
    y = np.concatenate(outs)
    mean, var = y.mean(axis=0), y.var(axis=0, ddof=1)
    m4 = np.mean((y - mean) ** 4, axis=0)
    se_mean = np.sqrt(var / n)
    se_var = np.sqrt((m4 - var**2) / n)
    assert np.all(np.abs(pred.mean - mean) <= 3 * se_mean)
    assert np.all(np.abs(pred.var_total - VARIANCE_FLOOR - var) <= 3 * se_var)


# --- sweep ---------------------------------------------------------------


def test_evaluation_grid_default():
    g = evaluation_grid()
    assert g.size == 201 and g[0] == -1.5 and g[-1] == 1.5
    assert np.sum((g >= -0.5) & (g <= 0.5)) == 67
    assert DEFAULT_GRID == (-1.5, 1.5, 201)


def test_sweep_single_cell():
    report = run_sweep([4], ["embedded"], TrainConfig(epochs=20, seed=0))
    assert len(report.cells) == 1
    cell = report.cells[0]
    assert cell.ok and math.isfinite(cell.best_val_nll)
    assert math.isfinite(cell.in_dist_nll) and math.isfinite(cell.out_dist_nll)
    assert cell.param_count == count_parameters(Architecture((4,)))


def test_sweep_counts_and_shared_data():
    report = run_sweep([2, 3], ["embedded", "split"], TrainConfig(epochs=10, seed=4))
    assert [(c.width, c.mode) for c in report.cells] == [
        (2, "embedded"), (2, "split"), (3, "embedded"), (3, "split"),
    ]
    for c in report.cells:
        assert c.param_count == count_parameters(Architecture((c.width,), head_mode=c.mode))
    # every cell is scored on the same evaluation targets
    ys = [c.evaluation.y for c in report.cells]
    assert all(np.array_equal(ys[0], y) for y in ys)
    assert set(report.embedded_wins()) == {2, 3}


def test_sweep_parallel_matches_serial():
    cfg = TrainConfig(epochs=10, seed=5)
    a = run_sweep([2, 3], ["embedded", "split"], cfg, workers=1)
    b = run_sweep([2, 3], ["embedded", "split"], cfg, workers=2)
    for ca, cb in zip(a.cells, b.cells):
        assert ca.checkpoint.to_json() == cb.checkpoint.to_json()
        assert ca.in_dist_nll == cb.in_dist_nll


def test_sweep_records_cell_failures():
    cfg = TrainConfig(epochs=5, learning_rate=1e300, weight_decay=0.0)
    report = run_sweep([2], ["embedded", "split"], cfg)
    assert all(not c.ok and "NumericalError" in c.error for c in report.cells)
    assert report.embedded_wins() == {2: None}


def test_evaluate_on_grid_masks():
    net = build_network(Architecture((4,)), np.random.default_rng(0))
    ev = evaluate_on_grid(net, evaluation_grid(), PolyDataConfig(), seed=0)
    assert ev.in_dist.sum() == 67
    assert math.isfinite(ev.in_dist_nll) and math.isfinite(ev.out_dist_nll)


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="embedded head does not beat the split head at H=4 in 2000 epochs; "
    "see the README section on the width-4 comparison",
)
def test_sweep_embedded_beats_split_at_width_4():
    report = run_sweep([4, 128], ["embedded", "split"], TrainConfig(epochs=2000, seed=0))
    assert report.embedded_wins()[4] is True
