import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from adindrnn import ADIndRNNClassifier
from adindrnn.data.synthetic import make_synthetic_segments


@pytest.fixture(scope="module")
def data():
    x, y = make_synthetic_segments(n_segments=120, n_channels=2, n_steps=64, rate=64.0, seed=3)
    return x, np.where(y == 1, "seizure", "normal")


def small(**kw):
    base = dict(architecture="ADIndRNN-(2,1)", state_sizes=[6, 8], fc_hidden=8, learning_rate=0.005, batch_size=16, epochs=15)
    base.update(kw)
    return ADIndRNNClassifier(**base)


def test_get_params_and_clone():
    est = small(random_state=7)
    params = est.get_params()
    assert params["architecture"] == "ADIndRNN-(2,1)" and params["random_state"] == 7
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(epochs=2)
    assert est.epochs == 2


def test_defaults_follow_reference_settings():
    est = ADIndRNNClassifier()
    assert (est.learning_rate, est.batch_size, est.epochs, est.weight_decay, est.fc_hidden) == (0.0004, 30, 60, 0.01, 100)


def test_fit_predict_on_synthetic(data):
    x, y = data
    est = small().fit(x[:90], y[:90])
    assert list(est.classes_) == ["normal", "seizure"]
    assert est.n_features_in_ == 2 and est.n_steps_ == 64
    assert len(est.history_) == 15
    assert est.score(x[90:], y[90:]) >= 0.9
    proba = est.predict_proba(x[90:])
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    np.testing.assert_array_equal(est.predict(x[90:]), est.classes_[(est.decision_function(x[90:]) > 0).astype(int)])
    w = est.attention_weights(x[:5])
    assert w.shape == (5, 2)


def test_explicit_validation_set_and_decimation(data):
    x, y = data
    est = small(epochs=2, decimate=2).fit(x[:60], y[:60], X_val=x[60:80], y_val=y[60:80])
    assert est.n_steps_ == 32
    assert est.predict(x[80:]).shape == (40,)


def test_fit_is_reproducible(data):
    x, y = data
    a = small(epochs=2).fit(x[:60], y[:60])
    b = small(epochs=2).fit(x[:60], y[:60])
    np.testing.assert_array_equal(a.decision_function(x[60:]), b.decision_function(x[60:]))


def test_input_validation(data):
    x, y = data
    with pytest.raises(NotFittedError):
        small().predict(x)
    with pytest.raises(ValueError):
        small(epochs=1).fit(x[:30], np.arange(30) % 3)
    with pytest.raises(ValueError):
        small(epochs=1).fit(x[:30], y[:29])
    est = small(epochs=1, validation_fraction=0).fit(x[:20], y[:20])
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 64, 3)))
    assert est.predict(x[:3, :, 0:1].repeat(2, axis=2)).shape == (3,)
