import numpy as np
import pytest

from surfdec.lattice import build_layout, syndrome_of
from surfdec.noise import (
    ErrorSample,
    NoiseParams,
    history_from_errors,
    sample_batch,
    sample_history,
)


def _detections_oracle(layout, sample: ErrorSample):
    """Recompute the detection volume straight from the definition."""
    rounds = sample.x_errors.shape[0]
    nq = layout.num_qubits
    cum_x = np.zeros(nq, dtype=np.uint8)
    cum_z = np.zeros(nq, dtype=np.uint8)
    raws = []
    for r in range(rounds):
        cum_x ^= sample.x_errors[r]
        cum_z ^= sample.z_errors[r]
        raws.append(syndrome_of(layout, cum_x, cum_z) ^ sample.meas_flips[r])
    det = [raws[0]]
    for r in range(1, rounds):
        det.append(raws[r] ^ raws[r - 1])
    det.append(syndrome_of(layout, cum_x, cum_z) ^ raws[-1])
    return np.array(det, dtype=np.uint8)


def test_bad_params_rejected():
    with pytest.raises(ValueError):
        NoiseParams(p=-0.1, rounds=3)
    with pytest.raises(ValueError):
        NoiseParams(p=1.5, rounds=3)
    with pytest.raises(ValueError):
        NoiseParams(p=0.1, rounds=0)


def test_p_zero_all_quiet():
    layout = build_layout(3)
    s = sample_history(layout, NoiseParams(0.0, 3), seed=5, index=0)
    assert not s.detections.any()
    assert not s.x_errors.any() and not s.z_errors.any()
    assert s.z_obs_flip == 0 and s.x_obs_flip == 0


def test_repeatable_and_batch_consistent():
    layout = build_layout(3)
    params = NoiseParams(0.01, 3)
    a = sample_history(layout, params, seed=11, index=42)
    b = sample_history(layout, params, seed=11, index=42)
    assert np.array_equal(a.detections, b.detections)
    assert np.array_equal(a.x_errors, b.x_errors)
    # the same index drawn inside a larger batch gives the same shot
    batch = sample_batch(layout, params, seed=11, start_index=40, count=10)
    c = batch.sample(2)
    assert np.array_equal(a.detections, c.detections)
    assert np.array_equal(a.meas_flips, c.meas_flips)
    assert a.z_obs_flip == c.z_obs_flip


@pytest.mark.parametrize("d,p", [(3, 0.01), (3, 0.05), (5, 0.01), (5, 0.05)])
def test_detections_match_oracle(d, p):
    layout = build_layout(d)
    params = NoiseParams(p, d)
    batch = sample_batch(layout, params, seed=99, start_index=0, count=300)
    for i in range(len(batch)):
        s = batch.sample(i)
        assert np.array_equal(s.detections, _detections_oracle(layout, s))


def test_telescoping_identity():
    layout = build_layout(3)
    params = NoiseParams(0.05, 3)
    batch = sample_batch(layout, params, seed=1, start_index=0, count=500)
    cum_x = batch.x_errors.sum(axis=1) % 2
    cum_z = batch.z_errors.sum(axis=1) % 2
    for i in range(len(batch)):
        final = syndrome_of(layout, cum_x[i].astype(np.uint8), cum_z[i].astype(np.uint8))
        xor_all = batch.detections[i].sum(axis=0) % 2
        assert np.array_equal(xor_all, final)


def test_observable_flip_definition():
    layout = build_layout(3)
    batch = sample_batch(layout, NoiseParams(0.08, 3), seed=2, start_index=0, count=400)
    cum_x = batch.x_errors.sum(axis=1) % 2
    cum_z = batch.z_errors.sum(axis=1) % 2
    z_obs = cum_x[:, list(layout.logical_z_support)].sum(axis=1) % 2
    x_obs = cum_z[:, list(layout.logical_x_support)].sum(axis=1) % 2
    assert np.array_equal(z_obs, batch.z_obs_flip)
    assert np.array_equal(x_obs, batch.x_obs_flip)


def test_empirical_rates():
    layout = build_layout(3)
    p = 0.03
    shots = 120000  # > 10^6 qubit-rounds at D=3, rounds=3
    batch = sample_batch(layout, NoiseParams(p, 3), seed=31337, start_index=0, count=shots)
    qubit_rounds = shots * 3 * 9
    any_err = (batch.x_errors | batch.z_errors).sum()
    se = np.sqrt(p * (1 - p) / qubit_rounds)
    assert abs(any_err / qubit_rounds - p) < 5 * se
    # component ratio X:Y:Z close to 1:1:1
    n_y = (batch.x_errors & batch.z_errors).sum()
    n_x = (batch.x_errors & ~batch.z_errors.astype(bool)).sum()
    n_z = (batch.z_errors & ~batch.x_errors.astype(bool)).sum()
    total = n_x + n_y + n_z
    se3 = np.sqrt((1 / 3) * (2 / 3) / total)
    for n in (n_x, n_y, n_z):
        assert abs(n / total - 1 / 3) < 5 * se3


def test_detection_density_monotone_in_p():
    layout = build_layout(3)
    ps = [0.0025, 0.005, 0.01, 0.02, 0.05]
    densities = []
    for p in ps:
        batch = sample_batch(layout, NoiseParams(p, 3), seed=77, start_index=0, count=10000)
        densities.append(batch.detections.mean())
    assert all(a < b for a, b in zip(densities, densities[1:]))


def test_injected_z_error_signature():
    layout = build_layout(3)
    s = history_from_errors(layout, 3, [(0, 4, "Z")])
    # X-checks adjacent to the center qubit flip at layer 0 only
    flipped = {i for i in layout.x_check_ids if 4 in layout.checks[i].support}
    for layer in range(4):
        expect = flipped if layer == 0 else set()
        assert set(np.nonzero(s.detections[layer])[0]) == expect


def test_injected_measurement_flip_two_layer_signature():
    layout = build_layout(3)
    c = layout.z_check_ids[1]
    s = history_from_errors(layout, 3, [], [(1, c)])
    assert set(zip(*np.nonzero(s.detections))) == {(1, c), (2, c)}


def test_injected_y_sets_both_components():
    layout = build_layout(3)
    s = history_from_errors(layout, 3, [(1, 2, "Y")])
    assert s.x_errors[1, 2] == 1 and s.z_errors[1, 2] == 1


def test_empty_injection_all_zero():
    layout = build_layout(3)
    s = history_from_errors(layout, 3, [])
    assert not s.detections.any() and s.z_obs_flip == 0 and s.x_obs_flip == 0


def test_injection_out_of_range():
    layout = build_layout(3)
    with pytest.raises(ValueError):
        history_from_errors(layout, 3, [(3, 0, "X")])
    with pytest.raises(ValueError):
        history_from_errors(layout, 3, [(0, 9, "X")])
    with pytest.raises(ValueError):
        history_from_errors(layout, 3, [], [(0, 8)])
