"""Simulator tests.

The fuzz oracle below re-derives the throughput model from scratch
(groupby-based, numpy arithmetic) so that an error in the production
implementation cannot hide in a shared helper.
"""

import itertools
import json
import math
import random

import numpy as np
import pytest

import pipeboost as pb
from pipeboost.errors import MappingError, SearchSpaceError
from pipeboost.simulator import (
    Mapping,
    binomial,
    count_assignments,
    exhaustive_best,
    iter_assignments,
    load_mapping,
    random_mapping_rng,
    save_mapping,
    simulate,
    stage_count,
    stages_of,
    validate_mapping,
)
from pipeboost.workload import Workload, layer_cost


# ---------------------------------------------------------------- oracle

def oracle_simulate(workload, mapping, profile):
    """Independent re-derivation of the throughput model."""
    rates = []
    stage_lists = []
    for pos, mi in enumerate(workload.model_indices):
        model = profile.models[mi]
        groups = []
        for unit, run in itertools.groupby(
            range(model.num_layers), key=lambda l: mapping.assignments[pos][l]
        ):
            layers = list(run)
            groups.append((unit, sum(layer_cost(model.layers[l], unit) for l in layers)))
        eff = np.array(
            [c + (profile.transfer_ms if i else 0.0) for i, (_, c) in enumerate(groups)]
        )
        rates.append(1000.0 / eff.max())
        stage_lists.append((groups, eff))
    load = np.zeros(profile.num_units)
    for r, (groups, eff) in zip(rates, stage_lists):
        for (unit, _), e in zip(groups, eff):
            load[unit] += r * e / 1000.0
    theta = min(1.0, 1.0 / load.max())
    x = np.array(rates) * theta
    y = np.zeros(profile.num_units)
    for xm, (groups, _) in zip(x, stage_lists):
        for unit in set(u for u, _ in groups):
            y[unit] += xm
    return x, y, x.mean(), theta


# ------------------------------------------------------------ hand cases

def test_simulate_by_hand_pipelined(tiny_profile):
    # mA split (gpu,gpu | big), mB whole on little.
    # mA stages: 5ms then 2+1ms transfer -> rate 200/s
    # mB: 15ms -> rate 66.67/s; no unit oversubscribed -> theta = 1
    wl = Workload((0, 1))
    m = Mapping(((0, 0, 1), (2, 2)))
    rep = simulate(wl, m, tiny_profile)
    assert rep.theta == pytest.approx(1.0)
    assert rep.per_dnn_inf_s[0] == pytest.approx(200.0)
    assert rep.per_dnn_inf_s[1] == pytest.approx(1000.0 / 15.0)
    assert rep.avg_throughput == pytest.approx((200.0 + 1000.0 / 15.0) / 2)
    assert rep.per_unit_inf_s == pytest.approx((200.0, 200.0, 1000.0 / 15.0))
    assert rep.unit_utilization == pytest.approx((1.0, 0.6, 1.0))


def test_simulate_by_hand_contended(tiny_profile):
    # everything on the GPU: loads sum to 2, so theta halves every rate
    wl = Workload((0, 1))
    m = Mapping(((0, 0, 0), (0, 0)))
    rep = simulate(wl, m, tiny_profile)
    assert rep.theta == pytest.approx(0.5)
    assert rep.per_dnn_inf_s == pytest.approx((1000.0 / 12.0, 1000.0 / 30.0))
    assert rep.per_unit_inf_s[0] == pytest.approx(1000.0 / 12.0 + 1000.0 / 30.0)
    assert rep.per_unit_inf_s[1:] == (0.0, 0.0)
    assert rep.unit_utilization[0] == pytest.approx(1.0)


def test_simulate_transfer_charged_on_non_first_stages_only(tiny_profile):
    wl = Workload((1,))
    whole = simulate(wl, Mapping(((0, 0),)), tiny_profile)
    split = simulate(wl, Mapping(((0, 1),)), tiny_profile)
    # whole: bottleneck 15ms; split: stages 5 and 10+1 -> bottleneck 11ms
    assert whole.per_dnn_inf_s[0] == pytest.approx(1000.0 / 15.0)
    assert split.per_dnn_inf_s[0] == pytest.approx(1000.0 / 11.0)


def test_simulate_empty_workload_rejected(tiny_profile):
    with pytest.raises(ValueError):
        simulate(Workload(()), Mapping(()), tiny_profile)


def test_stage_helpers(tiny_profile):
    assert stage_count((0, 0, 1)) == 2
    assert stage_count((0, 1, 0)) == 3
    assert stage_count((2, 2, 2)) == 1
    stages = stages_of(Mapping(((0, 0, 1), (2, 2))), tiny_profile, Workload((0, 1)))
    assert [(s.unit, s.layer_range, s.cost_ms) for s in stages[0]] == [
        (0, (0, 1), 5.0),
        (1, (2, 2), 2.0),
    ]
    assert stages[1][0].cost_ms == 15.0


def test_validate_mapping_errors(tiny_profile):
    wl = Workload((0, 1))
    with pytest.raises(MappingError):
        validate_mapping(Mapping(((0, 0, 1),)), tiny_profile, wl)  # model count
    with pytest.raises(MappingError):
        validate_mapping(Mapping(((0, 0), (2, 2))), tiny_profile, wl)  # layer count
    with pytest.raises(MappingError):
        validate_mapping(Mapping(((0, 0, 3), (2, 2))), tiny_profile, wl)  # unit range


# ------------------------------------------------------------ fuzz oracle

def test_simulate_matches_independent_oracle(gen_profile):
    rng = random.Random(77)
    for _ in range(300):
        k = rng.randint(1, 4)
        wl = Workload(tuple(rng.sample(range(len(gen_profile.models)), k)))
        m = random_mapping_rng(wl, gen_profile, 3, rng)
        rep = simulate(wl, m, gen_profile)
        x, y, t, theta = oracle_simulate(wl, m, gen_profile)
        np.testing.assert_allclose(rep.per_dnn_inf_s, x, rtol=1e-12)
        np.testing.assert_allclose(rep.per_unit_inf_s, y, rtol=1e-12)
        assert rep.avg_throughput == pytest.approx(t, rel=1e-12)
        assert rep.theta == pytest.approx(theta, rel=1e-12)
        assert max(rep.unit_utilization) <= 1.0 + 1e-9


def test_simulate_scale_covariance(tiny_profile):
    # scaling every kernel time and the transfer cost by c divides all
    # rates by c and leaves theta unchanged
    from pipeboost.workload import (
        DeviceProfile, DnnModel, KernelProfile, LayerSpec,
    )

    c = 3.5

    def scaled_layer(layer):
        kernels = tuple(
            KernelProfile(k.name, {u: t * c for u, t in k.time_ms.items()})
            for k in layer.kernels
        )
        return LayerSpec(layer.name, kernels, layer.features)

    scaled = DeviceProfile(
        units=tiny_profile.units,
        models=tuple(
            DnnModel(m.name, tuple(scaled_layer(l) for l in m.layers))
            for m in tiny_profile.models
        ),
        transfer_ms=tiny_profile.transfer_ms * c,
    )
    wl = Workload((0, 1))
    m = Mapping(((0, 1, 2), (2, 0)))
    a = simulate(wl, m, tiny_profile)
    b = simulate(wl, m, scaled)
    np.testing.assert_allclose(
        np.array(a.per_dnn_inf_s) / c, b.per_dnn_inf_s, rtol=1e-12
    )
    assert a.theta == pytest.approx(b.theta, rel=1e-12)


# ----------------------------------------------------- counting/enumeration

def brute_count(n, u, s):
    return sum(
        1
        for combo in itertools.product(range(u), repeat=n)
        if stage_count(combo) <= s
    )


@pytest.mark.parametrize(
    "n,u,s",
    [(1, 3, 1), (2, 3, 2), (4, 3, 3), (5, 3, 3), (5, 2, 4), (6, 4, 2), (3, 3, 5)],
)
def test_count_assignments_against_bruteforce(n, u, s):
    assert count_assignments(n, u, s) == brute_count(n, u, s)


def test_count_assignments_closed_form():
    # sum over stage counts of C(n-1, s-1) * u * (u-1)^(s-1)
    n, u, smax = 7, 3, 3
    expected = sum(
        math.comb(n - 1, s - 1) * u * (u - 1) ** (s - 1) for s in range(1, smax + 1)
    )
    assert count_assignments(n, u, smax) == expected


def test_binomial_large_values():
    assert binomial(84, 3) == 95284
    assert binomial(10, 0) == 1


def test_iter_assignments_exhaustive_and_sorted():
    got = list(iter_assignments(4, 3, 2))
    assert len(got) == count_assignments(4, 3, 2)
    assert len(set(got)) == len(got)
    assert got == sorted(got)
    for a in got:
        assert stage_count(a) <= 2
        assert all(0 <= x < 3 for x in a)


def test_exhaustive_best_matches_bruteforce(tiny_profile):
    wl = Workload((0, 1))
    best_map, best_rep = exhaustive_best(wl, tiny_profile, max_stages=3)
    per_model = [
        list(iter_assignments(m.num_layers, 3, 3))
        for m in (tiny_profile.models[0], tiny_profile.models[1])
    ]
    t_star = max(
        simulate(wl, Mapping(c), tiny_profile).avg_throughput
        for c in itertools.product(*per_model)
    )
    assert best_rep.avg_throughput == pytest.approx(t_star, rel=1e-12)
    validate_mapping(best_map, tiny_profile, wl)
    # determinism of tie-breaking
    again, _ = exhaustive_best(wl, tiny_profile, max_stages=3)
    assert again == best_map


def test_exhaustive_best_respects_enumeration_cap(gen_profile):
    big = Workload(tuple(range(6)))
    with pytest.raises(SearchSpaceError):
        exhaustive_best(big, gen_profile, max_stages=3, cap=1000)


# ------------------------------------------------------------ random + io

def test_random_mapping_valid_and_seeded(gen_profile):
    wl = Workload((0, 3, 5))
    m1 = pb.random_mapping(wl, gen_profile, seed=4, max_stages=3)
    m2 = pb.random_mapping(wl, gen_profile, seed=4, max_stages=3)
    assert m1 == m2
    validate_mapping(m1, gen_profile, wl)
    for a in m1.assignments:
        assert stage_count(a) <= 3
    m3 = pb.random_mapping(wl, gen_profile, seed=5, max_stages=3)
    assert m1 != m3  # overwhelmingly likely for this space


def test_mapping_json_roundtrip(tiny_profile, tmp_path):
    wl = Workload((1, 0))
    m = Mapping(((2, 2), (0, 1, 1)))
    path = tmp_path / "map.json"
    save_mapping(m, tiny_profile, wl, path)
    wl2, m2 = load_mapping(path, tiny_profile)
    assert wl2 == wl
    assert m2 == m


def test_load_mapping_rejects_unknown_keys(tiny_profile, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"workload": ["mA"], "assignments": [[0, 0, 0]], "x": 1}))
    with pytest.raises(MappingError):
        load_mapping(path, tiny_profile)
