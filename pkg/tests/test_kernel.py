import os
import subprocess
import sys

import numpy as np
import pytest

from ehlink import kernel, montecarlo
from ehlink.model import EnergyProfile, LinkConfig
from ehlink.policies import PolicySpec, ReceiverMode, receiver_costs, slot_step

CASES = [
    (LinkConfig(), PolicySpec.disjoint(800)),
    (LinkConfig(), PolicySpec.joint(900)),
    (LinkConfig(), PolicySpec.linear(700, 100)),
    (LinkConfig(), PolicySpec.disjoint(800, ReceiverMode.CSI_AWARE)),
    (LinkConfig(), PolicySpec.joint(800, ReceiverMode.CSI_AWARE)),
    (LinkConfig(xi=0.5), PolicySpec.disjoint(800, ReceiverMode.DETECTION)),
    (LinkConfig(xi=0.5, eta=0.5), PolicySpec.disjoint(800, ReceiverMode.DETECTION_PROCESSING)),
]


@pytest.mark.parametrize("config,policy", CASES)
def test_kernel_matches_reference_slot(config, policy):
    profile = EnergyProfile(rho=0.3)
    levels, gthr, fparams, _, joint, gated = montecarlo._kernel_inputs(config, profile, policy)
    costs = receiver_costs(config, policy.receiver)
    iparams = np.array([config.retry_limit, joint, gated, 0, 1000, 1], dtype=np.int64)
    rng = np.random.default_rng(11)
    es, ed = montecarlo.BernoulliArrivals(profile).sample(rng, 3000)
    gain = rng.standard_exponential(3000)
    for name, run in kernel.BACKENDS.items():
        fstate = np.array([500.0, 500.0, 0, 0, 0, 0, 0, 0])
        istate = np.array([-1, 0, 0], dtype=np.int64)
        counters = np.zeros((1, 7), dtype=np.int64)
        b_s, b_d, u = 500.0, 500.0, -1
        for i in range(len(es)):
            b_s, b_d, u, _, _, success = slot_step(config, policy, costs, b_s, b_d, u, es[i], ed[i], gain[i])
            run(es[i:i + 1], ed[i:i + 1], gain[i:i + 1], levels, gthr, fparams, iparams, fstate, istate, counters)
            assert (fstate[0], fstate[1], istate[0]) == (b_s, b_d, u), (name, i)


@pytest.mark.skipif("cython" not in kernel.BACKENDS, reason="compiled kernel not built")
@pytest.mark.parametrize("config,policy", CASES)
def test_backends_identical(config, policy):
    kw = dict(n_slots=50_000, seed=4, burn_in=500, chunk=7_919)
    a = montecarlo.simulate(config, EnergyProfile(rho=0.5), policy, backend="python", **kw)
    b = montecarlo.simulate(config, EnergyProfile(rho=0.5), policy, backend="cython", **kw)
    assert np.array_equal(a.batches, b.batches)
    assert a.energy == b.energy


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernel.get_run_chunk("fortran")


def test_env_forces_pure_python():
    env = dict(os.environ, EHLINK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import ehlink.kernel as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
