import hashlib
import json
import math

import numpy as np
import pytest

from cmm import model as model_lib
from cmm.autodiff import Tape
from cmm.objective import Strategy, ablation_loss
from conftest import central_difference, rel_err

# sha256 over every parameter as little-endian float64, in canonical order
INIT_CHECKSUM_SEED0 = "8b70493d252800d269dad0dcfc3bb584a2ba89a84baaa6b077698801a21622f0"


def _checksum(m) -> str:
    h = hashlib.sha256()
    for _, arr in m.named_parameters():
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def _zero_model(hidden=(16,)):
    m = model_lib.init(0, 8, hidden)
    for _, arr in m.named_parameters():
        arr[...] = 0.0
    return m


def test_init_checksum_regression():
    assert _checksum(model_lib.init(0, d=8, hidden=[16])) == INIT_CHECKSUM_SEED0


def test_init_is_deterministic_and_seed_sensitive():
    assert _checksum(model_lib.init(7)) == _checksum(model_lib.init(7))
    assert _checksum(model_lib.init(7)) != _checksum(model_lib.init(8))


def test_init_shapes_and_bounds():
    m = model_lib.init(3, d=5, hidden=(7, 4))
    shapes = {name: arr.shape for name, arr in m.named_parameters()}
    assert shapes["fusion_net.0.weight"] == (7, 10)
    assert shapes["rgb_net.2.weight"] == (2, 4)
    assert shapes["no_treatment.c_t"] == ()
    for name, arr in m.named_parameters():
        if name.endswith("weight"):
            assert np.all(np.abs(arr) < 1 / math.sqrt(arr.shape[1]))
        else:
            assert np.all(arr == 0.0)


def test_linear_heads_allowed():
    m = model_lib.init(0, d=4, hidden=())
    triple, _ = model_lib.forward(m, np.ones(4), np.ones(4))
    assert triple.y_m.shape == (2,)


def test_mlp_params_reject_broken_chain():
    with pytest.raises(ValueError):
        model_lib.MlpParams([np.zeros((3, 4)), np.zeros((2, 5))], [np.zeros(3), np.zeros(2)])


def test_zero_model_gives_zero_effects():
    triple, eff = model_lib.forward(_zero_model(), np.arange(8.0), -np.arange(8.0))
    for node in (triple.y_m, triple.y_r, triple.y_t, eff.te, eff.nde, eff.stie):
        np.testing.assert_array_equal(node.value, [0.0, 0.0])


def test_forward_rejects_dimension_mismatch():
    m = model_lib.init(0)
    with pytest.raises(ValueError):
        model_lib.forward(m, np.zeros(7), np.zeros(7))
    with pytest.raises(ValueError):
        model_lib.forward(m, np.zeros(8), np.zeros((2, 8)))


def test_forward_is_bit_deterministic(rng):
    m = model_lib.init(1)
    x_r, x_t = rng.normal(size=(2, 5, 8))
    a = model_lib.forward(m, x_r, x_t)[1].stie.value
    b = model_lib.forward(m, x_r, x_t)[1].stie.value
    assert a.tobytes() == b.tobytes()


def test_batched_forward_matches_per_sample(rng):
    m = model_lib.init(2)
    x_r, x_t = rng.normal(size=(2, 6, 8))
    batch = model_lib.forward(m, x_r, x_t)[1].stie.value
    for i in range(6):
        np.testing.assert_allclose(model_lib.forward(m, x_r[i], x_t[i])[1].stie.value, batch[i],
                                   rtol=0, atol=1e-14)


def _hard_model(rgb_bias, thermal_bias):
    m = _zero_model()
    m.rgb_net.biases[-1][...] = rgb_bias
    m.thermal_net.biases[-1][...] = thermal_bias
    return m


def test_hand_built_differential_mode():
    m = _hard_model([-10.0, 10.0], [10.0, -10.0])
    _, eff = model_lib.forward(m, np.zeros(8), np.zeros(8))
    assert eff.k_mode.item() == pytest.approx(-1.0, abs=1e-12)
    np.testing.assert_allclose(eff.stie.value, eff.tie.value, atol=1e-10)


def test_common_mode_argmax_equivalence(rng):
    from cmm.causal import log_harmonic
    m = _hard_model([-10.0, 10.0], [-10.0, 10.0])
    m.fusion_net.weights[0][...] = rng.normal(size=m.fusion_net.weights[0].shape)
    m.fusion_net.weights[1][...] = rng.normal(size=m.fusion_net.weights[1].shape)
    x_r, x_t = rng.normal(size=(2, 50, 8))
    triple, eff = model_lib.forward(m, x_r, x_t)
    assert np.all(eff.k_mode.value > 0)
    raw = log_harmonic(triple.y_m, triple.y_r, triple.y_t).value
    assert np.array_equal(eff.stie.value, eff.te.value)
    assert np.array_equal(np.argmax(eff.te.value, -1), np.argmax(raw, -1))


def test_hidden_unit_permutation_leaves_outputs_unchanged(rng):
    m = model_lib.init(4, hidden=(16,))
    for _, arr in m.named_parameters():
        arr[...] += rng.normal(0, 0.1, arr.shape)
    perm = model_lib.from_dict(model_lib.to_dict(m))
    for net in (perm.fusion_net, perm.rgb_net, perm.thermal_net):
        p = rng.permutation(16)
        net.weights[0][...] = net.weights[0][p]
        net.biases[0][...] = net.biases[0][p]
        net.weights[1][...] = net.weights[1][:, p]
    x_r, x_t = rng.normal(size=(2, 20, 8))
    a = model_lib.forward(m, x_r, x_t)[1]
    b = model_lib.forward(perm, x_r, x_t)[1]
    for name in ("te", "nde", "stie", "k_mode"):
        np.testing.assert_allclose(getattr(a, name).value, getattr(b, name).value, rtol=0, atol=1e-12)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_parameter_gradients_match_finite_differences(strategy, rng):
    m = model_lib.init(11, d=3, hidden=(4,))
    for _, arr in m.named_parameters():
        arr[...] += rng.normal(0, 0.3, arr.shape)
    x_r, x_t = rng.normal(size=(2, 3, 3))
    labels = np.array([0, 1, 1])

    tape = Tape()
    params = m.bind(tape)
    triple, eff = model_lib.forward(m, x_r, x_t, params=params)
    loss = ablation_loss(strategy, triple, eff, labels).l_total
    names = [n for n, _ in m.named_parameters()]
    grads = dict(zip(names, tape.grad(loss, [params[n] for n in names])))

    for name, arr in m.named_parameters():
        def f(v, arr=arr):
            saved = arr.copy()
            arr[...] = v
            tr, ef = model_lib.forward(m, x_r, x_t)
            out = ablation_loss(strategy, tr, ef, labels).l_total.item()
            arr[...] = saved
            return out

        assert rel_err(grads[name], central_difference(f, arr.copy())) < 1e-4, name


def test_checkpoint_round_trip(tmp_path, rng):
    m = model_lib.init(5, hidden=(6, 3), tau=0.25)
    for _, arr in m.named_parameters():
        arr[...] += rng.normal(size=arr.shape)
    p = tmp_path / "m.json"
    model_lib.save(m, p, metadata={"note": "x"})
    back = model_lib.load(p)
    assert back.tau == 0.25 and back.hidden == (6, 3) and back.seed == 5
    assert _checksum(back) == _checksum(m)
    doc = json.loads(p.read_text())
    assert doc["prng"] == "xorshift64*/splitmix64-seed/box-muller"
    assert doc["params"]["rgb_net.0.weight"]["shape"] == [6, 8]


@pytest.mark.parametrize("field, value, error", [
    ("version", 99, model_lib.CheckpointVersionError),
    ("format", "other", model_lib.CheckpointError),
    ("prng", "mt19937", model_lib.CheckpointError),
])
def test_checkpoint_header_is_validated(tmp_path, field, value, error):
    doc = model_lib.to_dict(model_lib.init(0))
    doc[field] = value
    with pytest.raises(error):
        model_lib.from_dict(doc)


def test_checkpoint_rejects_non_finite_values():
    doc = model_lib.to_dict(model_lib.init(0))
    doc["params"]["no_treatment.c_m"]["data"] = [float("nan")]
    with pytest.raises(model_lib.CheckpointError):
        model_lib.from_dict(doc)
