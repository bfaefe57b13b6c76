import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ccglearn import kernels


def test_backend_is_reported():
    assert kernels.BACKEND in ("numba", "numpy")
    assert kernels.HAS_NUMBA == (kernels.BACKEND == "numba")


def test_selected_kernels_match_numpy_reference():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((64, 10)) * 5
    np.testing.assert_allclose(kernels.softmax_rows(z),
                               kernels._softmax_rows_np(z), atol=1e-12)
    x = rng.standard_normal((32, 16))
    g = rng.standard_normal((32, 16))
    np.testing.assert_allclose(kernels.leaky_relu(x, 0.2),
                               kernels._leaky_relu_np(x, 0.2))
    np.testing.assert_allclose(kernels.leaky_relu_grad(x, g, 0.2),
                               kernels._leaky_relu_grad_np(x, g, 0.2))
    v = rng.standard_normal(9)
    np.testing.assert_allclose(kernels.simplex_project_kernel(v.copy()),
                               kernels._simplex_project_np(v.copy()),
                               atol=1e-12)


def test_optimizer_kernels_match_numpy_reference():
    rng = np.random.default_rng(1)
    shape = (8, 8)
    for wd, momentum in [(0.0, 0.0), (5e-4, 0.9)]:
        p1 = rng.standard_normal(shape)
        p2 = p1.copy()
        g = rng.standard_normal(shape)
        b1, b2 = np.zeros(shape), np.zeros(shape)
        kernels.sgd_update(p1, g, b1, 0.01, momentum, wd)
        kernels._sgd_update_np(p2, g, b2, 0.01, momentum, wd)
        np.testing.assert_allclose(p1, p2, atol=1e-14)
        np.testing.assert_allclose(b1, b2, atol=1e-14)

    p1 = rng.standard_normal(shape)
    p2 = p1.copy()
    g = rng.standard_normal(shape)
    m1, v1 = np.zeros(shape), np.zeros(shape)
    m2, v2 = np.zeros(shape), np.zeros(shape)
    for t in range(1, 4):
        kernels.adam_update(p1, g, m1, v1, 2e-4, 0.5, 0.999, 1e-8, 5e-4, t)
        kernels._adam_update_np(p2, g, m2, v2, 2e-4, 0.5, 0.999, 1e-8, 5e-4, t)
    np.testing.assert_allclose(p1, p2, atol=1e-12)


FALLBACK_PROBE = """
import json
import numpy as np
from ccglearn import kernels, dcl, labels

assert kernels.BACKEND == "numpy", kernels.BACKEND
rng = np.random.default_rng(0)
X = np.concatenate([rng.normal(-2, 0.4, (40, 2)), rng.normal(2, 0.4, (40, 2))])
y = np.repeat([0, 1], 40)
ds = labels.split_dataset(X, y, 1.0, 1.0, 0)
M = labels.uniform_transition(2)
model, report = dcl.train_dcl(ds, M, epochs=5, seed=0, eval_set=(X, y))
print(json.dumps({"backend": kernels.BACKEND,
                  "loss": report.train_loss,
                  "acc": report.test_acc[-1]}))
"""


def test_pure_numpy_fallback_trains_end_to_end():
    env = dict(os.environ, CCGLEARN_NO_NUMBA="1")
    proc = subprocess.run([sys.executable, "-c", FALLBACK_PROBE], env=env,
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["backend"] == "numpy"
    assert payload["loss"][-1] < payload["loss"][0]
    assert payload["acc"] > 0.9


@pytest.mark.skipif(kernels.BACKEND != "numba",
                    reason="needs the numba backend installed and enabled")
def test_backends_agree_on_training_trajectory():
    env = dict(os.environ, CCGLEARN_NO_NUMBA="1")
    proc = subprocess.run([sys.executable, "-c", FALLBACK_PROBE], env=env,
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    fallback = json.loads(proc.stdout)

    proc = subprocess.run([sys.executable, "-c", FALLBACK_PROBE.replace(
        '== "numpy"', '== "numba"')], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    native = json.loads(proc.stdout)
    # identical arithmetic up to summation-order effects
    np.testing.assert_allclose(fallback["loss"], native["loss"], rtol=1e-9)
