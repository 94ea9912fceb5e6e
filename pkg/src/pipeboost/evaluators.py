"""Scalar mapping evaluators shared by the search algorithms.

Both searchers only need `score(workload, mapping) -> float in [0, 1]`
(higher is better). The estimator-backed evaluator is the default; the
simulator-backed one exists for oracle experiments and for callers who
prefer exact-but-slower scoring.
"""

from __future__ import annotations

import numpy as np

from .baselines import gpu_only
from .embedding import EmbeddingTensor, build_embedding, build_mask, masked_input
from .estimator import EstimatorNet
from .simulator import Mapping, simulate
from .workload import DeviceProfile, Workload


class EstimatorEvaluator:
    """Mean of the net's clamped 3-component prediction."""

    def __init__(
        self,
        net: EstimatorNet,
        profile: DeviceProfile,
        embedding: EmbeddingTensor | None = None,
    ):
        if net.target_stats is None:
            raise ValueError("estimator is untrained (no target statistics)")
        self.net = net
        self.profile = profile
        self.embedding = embedding if embedding is not None else build_embedding(profile)

    def score(self, workload: Workload, mapping: Mapping) -> float:
        x = masked_input(self.embedding, build_mask(workload, mapping, self.profile))
        pred = np.clip(self.net.forward(x.data), 0.0, 1.0)
        return float(pred.mean())

    def score_batch(self, workload: Workload, mappings: list[Mapping]) -> np.ndarray:
        xs = np.stack(
            [
                masked_input(
                    self.embedding, build_mask(workload, m, self.profile)
                ).data
                for m in mappings
            ]
        )
        pred = np.clip(self.net.forward(xs), 0.0, 1.0)
        return pred.mean(axis=1)


class SimulatorEvaluator:
    """Ground-truth average throughput T squashed to T / (T + T_ref).

    T_ref is the all-GPU throughput of the same workload (cached per
    workload), so 0.5 means "as good as not splitting at all" and the
    score spreads over (0, 1) in the range where mappings actually
    differ. The transform is strictly increasing, so rankings match the
    simulator exactly while staying inside [0, 1) like the estimator's.
    """

    def __init__(self, profile: DeviceProfile):
        self.profile = profile
        self._ref: dict[Workload, float] = {}

    def _reference(self, workload: Workload) -> float:
        ref = self._ref.get(workload)
        if ref is None:
            ref = simulate(
                workload, gpu_only(workload, self.profile), self.profile
            ).avg_throughput
            self._ref[workload] = ref
        return ref

    def score(self, workload: Workload, mapping: Mapping) -> float:
        t = simulate(workload, mapping, self.profile).avg_throughput
        return t / (t + self._reference(workload))

    def score_batch(self, workload: Workload, mappings: list[Mapping]) -> np.ndarray:
        return np.array([self.score(workload, m) for m in mappings])
