import numpy as np
import pytest

from lbccn._errors import ConfigError, NumericError
from lbccn import autodiff as ad
from lbccn.dataset import Triple
from lbccn.gradcheck import grad_check
from lbccn.losses import LossWeights
from lbccn.model import LbccnModel, toy_config
from lbccn.optim import AdamState, adam_step
from lbccn.training import TrainConfig, batch_loss, make_batch, snr_gain_db, train


def toy_data(n=3, length=1280, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    t = np.arange(length) / 16000
    for i in range(n):
        clean = np.stack([np.sin(2 * np.pi * 300 * t + i), 0.8 * np.sin(2 * np.pi * 300 * t + i + 0.3)])
        noise = 0.5 * rng.standard_normal((2, length))
        out.append(Triple((clean + noise).astype(np.float32), clean.astype(np.float32),
                          noise.astype(np.float32)))
    return out


def test_adam_matches_reference():
    # hand-rolled single-parameter Adam in float64, two steps
    p = ad.DiffTensor(np.array([1.0 + 2.0j]), requires_grad=True, name="w")
    st = AdamState(lr=0.1)
    ref = np.array([1.0, 2.0])
    m = v = np.zeros(2)
    for t in (1, 2):
        g = 2 * ref
        p.grad = 2 * p.value
        adam_step({"w": p}, None, st)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert p.value[0] == pytest.approx(complex(*ref), rel=1e-12)


def test_adam_lr_scale_and_errors():
    st = AdamState(lr=1.0, lr_scale={".freq_bias": 3.0})
    assert st.lr_for("head_a.freq_bias") == 3.0 and st.lr_for("head_a0.pw") == 1.0
    p = ad.DiffTensor(np.zeros(2), requires_grad=True)
    with pytest.raises(NumericError):
        adam_step({"p": p}, {"p": np.array([np.nan, 0.0])}, st)


def test_full_model_gradients():
    model = LbccnModel(toy_config(), seed=1)
    data = toy_data(1, 32 * 40)
    batch = make_batch(data[0].noisy, data[0].clean, data[0].noise, model)
    weights = LossWeights()
    params = model.named_parameters()
    sel = {k: params[k] for k in ("head_a2.pw", "extractor.projection", "dualpath0.dw_time")}
    # abs terms in ILD/IPD put kinks within reach of larger steps
    report = grad_check(lambda: batch_loss(model, batch, weights), sel, h=1e-6, tolerance=1e-4)
    assert report.passed, report.summary()


def test_train_improves_and_is_seeded():
    data = toy_data()
    runs = []
    for _ in range(2):
        model = LbccnModel(toy_config(), seed=0)
        mon = make_batch(*(np.stack([getattr(d, k) for d in data])
                           for k in ("noisy", "clean", "noise")), model)
        before = snr_gain_db(model, mon)
        r = train(model, data, TrainConfig(lr=3e-3, epochs=10, batch_size=3, seed=1,
                                           freq_bias_lr_scale=10))
        runs.append((r, before, snr_gain_db(model, mon)))
    r, before, after = runs[0]
    assert r.steps == 10 and r.epoch_losses[-1] < r.epoch_losses[0]
    assert after > before + 1.0
    assert r.step_losses == runs[1][0].step_losses


def test_train_early_stop():
    model = LbccnModel(toy_config(), seed=0)
    data = toy_data(1)
    r = train(model, data, TrainConfig(lr=1e-3, epochs=50, batch_size=1,
                                       target_gain_db=-100.0, check_every=2))
    assert r.stopped_early and r.steps == 2
    mon = make_batch(data[0].noisy, data[0].clean, data[0].noise, model)
    assert r.gain_db == pytest.approx(snr_gain_db(model, mon))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_names_batch():
    model = LbccnModel(toy_config(), seed=0)
    bad = toy_data(1)
    bad[0].noisy[0, 5] = np.nan
    with pytest.raises(NumericError, match="batch"):
        train(model, bad, TrainConfig(epochs=1))


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(k=2.0)
    with pytest.raises(ConfigError):
        TrainConfig(lr=0)
    with pytest.raises(ConfigError):
        train(LbccnModel(toy_config()), [], TrainConfig())
    assert TrainConfig().to_dict()["weights"]["w_ild"] == 10.0
