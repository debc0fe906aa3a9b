import numpy as np
import pytest

from mixemu.emulators import CLASSIFICATION, FAMILIES, REGRESSION, fit_emulator
from mixemu.errors import FormatError
from mixemu.serialize import MAGIC, dumps, load_model, loads, save_model

SMALL = {"rf": {"n_trees": 5}, "bagging": {"n_trees": 5}, "adaboost": {"n_trees": 5},
         "dt-adaboost": {"n_trees": 5}, "gbm": {"n_trees": 5}, "mlp": {"hidden": [6], "max_iter": 5}}


def _data(rng, task):
    X = rng.uniform(0, 1, (80, 6))
    if task == REGRESSION:
        return X, X[:, 0] + np.sin(3 * X[:, 1])
    return X, np.digitize(X[:, 0] + X[:, 1], [0.5, 1.0, 1.5]) + 1


CASES = [(name, task) for name, fam in FAMILIES.items() for task in fam.tasks]


@pytest.mark.parametrize("name,task", CASES, ids=[f"{n}-{t[:5]}" for n, t in CASES])
def test_round_trip(name, task, rng, tmp_path):
    X, y = _data(rng, task)
    model = fit_emulator(name, X, SMALL.get(name), seed=1, y=y, task=task)
    path = tmp_path / "sub" / "m.mxm"
    save_model(path, model)
    back = load_model(path)
    probe = rng.uniform(0, 1, (25, 6))
    np.testing.assert_array_equal(back.predict(probe), model.predict(probe))
    if task == CLASSIFICATION:
        np.testing.assert_array_equal(back.predict_proba(probe), model.predict_proba(probe))
    assert dumps(back) == path.read_bytes()
    assert back.name == name and back.task == task


@pytest.fixture
def blob(rng):
    X, y = _data(rng, REGRESSION)
    return dumps(fit_emulator("ridge", X, y=y))


def test_magic(blob):
    assert blob[:4] == MAGIC
    with pytest.raises(FormatError, match="magic"):
        loads(b"XXXX" + blob[4:])


def test_truncated(blob):
    for cut in (3, 10, len(blob) // 2, len(blob) - 1):
        with pytest.raises(FormatError):
            loads(blob[:cut])


def test_trailing_bytes(blob):
    with pytest.raises(FormatError, match="trailing"):
        loads(blob + b"\0")


def test_bad_version(blob):
    with pytest.raises(FormatError, match="version"):
        loads(blob[:4] + (99).to_bytes(4, "little") + blob[8:])
