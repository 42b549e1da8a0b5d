"""Shared result type for the debiasing procedures."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .network import MlpModel


@dataclass
class DebiasOutcome:
    """Chosen debiased model plus the evaluation trajectory that produced it.

    chosen_index points into trajectory; -1 means the untouched input model was
    selected. feasible is False when no candidate met the performance floor,
    in which case model is the input model.
    """

    model: MlpModel
    trajectory: list[dict] = field(default_factory=list)
    chosen_index: int = -1
    feasible: bool = False
    snapshots: list[MlpModel] | None = None

    def chosen_record(self) -> dict | None:
        if 0 <= self.chosen_index < len(self.trajectory):
            return self.trajectory[self.chosen_index]
        return None

    def write_trajectory(self, path) -> None:
        """One JSON document per line, in trajectory order."""
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.trajectory:
                fh.write(json.dumps(record) + "\n")


def read_trajectory(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class FeasibleBest:
    """Running argmin of |bias| among candidates meeting the performance floor.

    Candidates arrive in trajectory order; ties keep the earliest, so the
    result equals an offline argmin over the full trajectory.
    """

    def __init__(self, floor: float):
        self.floor = floor
        self.index: int = -1
        self.abs_bias: float | None = None
        self.model: MlpModel | None = None

    def offer(self, index: int, bias: float, performance: float, model: MlpModel,
              threshold: float) -> None:
        if performance < self.floor:
            return
        if self.abs_bias is None or abs(bias) < self.abs_bias:
            self.abs_bias = abs(bias)
            self.index = index
            self.model = model.clone()
            self.model.threshold = threshold

    @property
    def found(self) -> bool:
        return self.model is not None
