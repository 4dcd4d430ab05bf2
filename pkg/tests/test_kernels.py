import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ads_ilfo import kernels

BACKENDS = kernels.backends()


def test_compiled_backend_is_built():
    # the package is expected to be installed with its extension
    assert "compiled" in BACKENDS
    assert kernels.BACKEND == "compiled"


def test_pure_python_selected_by_environment():
    env = dict(os.environ, ADS_ILFO_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import ads_ilfo.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.skipif("compiled" not in BACKENDS, reason="extension not built")
def test_backends_agree(rng):
    c, p = BACKENDS["compiled"], BACKENDS["python"]
    for _ in range(200):
        n = int(rng.integers(1, 10))
        C = rng.random((n, n)) * rng.choice([0.1, 1.0, 10.0])
        eps = 0.01 * C.mean()
        rc = c.sinkhorn_potentials(C, eps, 500, 1e-6)
        rp = p.sinkhorn_potentials(C, eps, 500, 1e-6)
        np.testing.assert_allclose(rc[0], rp[0], atol=1e-9)
        np.testing.assert_allclose(rc[1], rp[1], atol=1e-9)
        assert rc[3:] == rp[3:]
        seq = rng.integers(0, 6, size=int(rng.integers(1, 12)))
        assert c.lis_length(seq) == p.lis_length(seq.tolist())
        m = int(rng.integers(1, n + 1))
        assert np.array_equal(c.prefix_nn_indices(C, m), p.prefix_nn_indices(C, m))
        assert c.prefix_alignment(C, m) == p.prefix_alignment(C, m)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_nn_ties_go_to_lowest_index(name):
    k = BACKENDS[name]
    C = np.array([[1.0, 1.0, 2.0], [0.5, 0.5, 0.5], [3.0, 0.0, 0.0]])
    assert list(k.prefix_nn_indices(C, 3)) == [0, 0, 1]
    assert list(k.prefix_nn_indices(C, 2)) == [0, 0]


def test_round_to_marginals_is_exact(rng):
    for _ in range(100):
        n = int(rng.integers(1, 12))
        P = rng.random((n, n))
        P /= P.sum()
        R = kernels.round_to_marginals(P)
        assert np.all(R >= 0)
        np.testing.assert_allclose(R.sum(axis=0), 1.0 / n, atol=1e-15)
        np.testing.assert_allclose(R.sum(axis=1), 1.0 / n, atol=1e-15)


def test_fallback_labels_match_compiled_end_to_end(tmp_path):
    script = (
        "import json, sys, numpy as np\n"
        "from ads_ilfo.core import ExperimentConfig\n"
        "from ads_ilfo.harness import demos_for\n"
        "from ads_ilfo.ot_reward import label_rewards\n"
        "from ads_ilfo.progress import ProgressRecognizer\n"
        "demos = demos_for(ExperimentConfig(seed=1, n_demos=3))\n"
        "agent = demos[0].observations + 0.05 * np.random.default_rng(0).normal(size=(64, 10))\n"
        "lab = label_rewards(agent, demos)\n"
        "k = ProgressRecognizer(demos).update(agent)\n"
        "json.dump({'rewards': lab.rewards.tolist(), 'demo': lab.demo_index, 'k': k}, sys.stdout)\n"
    )
    outs = []
    for pure in ("0", "1"):
        env = dict(os.environ, ADS_ILFO_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, text=True, check=True)
        outs.append(json.loads(res.stdout))
    assert outs[0]["demo"] == outs[1]["demo"] and outs[0]["k"] == outs[1]["k"]
    np.testing.assert_allclose(outs[0]["rewards"], outs[1]["rewards"], rtol=1e-9, atol=1e-12)
