"""Shared fixtures.

`tiny_profile` is fully hand-written so tests can assert exact numbers
against hand-derived arithmetic; the generated fixtures exist for
coverage of realistic shapes and are session-scoped because building
them (especially the trained estimator) is not free.
"""

import pytest

import pipeboost as pb
from pipeboost.estimator import EstimatorNet
from pipeboost.training import TrainConfig, generate_dataset, preprocess_targets, train
from pipeboost.workload import (
    ComputeUnit,
    DeviceProfile,
    DnnModel,
    KernelProfile,
    LayerFeatures,
    LayerSpec,
    UnitKind,
)


# One line per end-to-end check in test_acceptance.py; printed as a block
# after the run so pass/fail status is visible even under plain `pytest -v`.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "end-to-end check summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _layer(name, times, feats=(100, 100, 1000)):
    return LayerSpec(
        name=name,
        kernels=(KernelProfile(name + ".k0", dict(enumerate(times))),),
        features=LayerFeatures("conv", *feats),
    )


@pytest.fixture(scope="session")
def tiny_profile():
    """Two models, three units, single-kernel layers, transfer 1 ms.

    Costs are round numbers so the simulator arithmetic can be checked
    by hand in the tests.
    """
    units = (
        ComputeUnit(0, "gpu", UnitKind.GPU),
        ComputeUnit(1, "big-cpu", UnitKind.BIG),
        ComputeUnit(2, "little-cpu", UnitKind.LITTLE),
    )
    m_a = DnnModel(
        "mA",
        (
            _layer("a0", (2.0, 4.0, 8.0), (10, 20, 200)),
            _layer("a1", (3.0, 6.0, 12.0), (20, 40, 800)),
            _layer("a2", (1.0, 2.0, 4.0), (40, 10, 50)),
        ),
    )
    m_b = DnnModel(
        "mB",
        (
            _layer("b0", (5.0, 5.0, 5.0), (30, 30, 900)),
            _layer("b1", (10.0, 10.0, 10.0), (30, 5, 150)),
        ),
    )
    prof = DeviceProfile(units=units, models=(m_a, m_b), transfer_ms=1.0)
    prof.validate()
    return prof


@pytest.fixture(scope="session")
def gen_profile():
    # 6 synthetic models with the default cost structure
    return pb.generate_profile(6, seed=23)


@pytest.fixture(scope="session")
def quick_net(gen_profile):
    """A briefly trained estimator for plumbing tests (not accuracy ones)."""
    samples = generate_dataset(gen_profile, count=120, mix_range=(1, 4), seed=5)
    stats, samples = preprocess_targets(samples, 96)
    net = EstimatorNet.new((3, 6, gen_profile.max_layers), seed=1)
    net, _ = train(
        net,
        samples,
        TrainConfig(epochs=12, seed=0, train_size=96, val_size=24),
        stats=stats,
    )
    return net
