# Copyright 2022 The Bastate Contributors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
Phase portraits of simulated scenarios. Requires the ``plot`` extra (matplotlib).
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from ..simulation import SimulationRecord  # noqa: E402
from .scenario import Scenario  # noqa: E402


def plot_phase_portraits(
    scenario: Scenario, records: Sequence[SimulationRecord], out_dir: Path
) -> list[Path]:
    """
    Draw every trajectory in the planes of the scenario's plot specs, on one set of axes, with
    its unsafe circles. Plotting reads the trajectories only.

    :param scenario: The scenario.
    :param records: The simulated runs.
    :param out_dir: The directory to write ``<name>_phase.svg`` to.
    :return: The written files.
    """
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    try:
        for cx, cy, r in scenario.output.unsafe_circles:
            ax.add_patch(plt.Circle((cx, cy), r, color="red", alpha=0.4, linewidth=0))

        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for k, plot in enumerate(scenario.output.plots):
            color = colors[k % len(colors)]
            for record in records:
                states = record.trajectory.states
                x = states[:, plot.x] + plot.offset[0]
                y = states[:, plot.y] + plot.offset[1]
                ax.plot(x, y, color=color, linewidth=1.5)
                ax.plot(x[:1], y[:1], marker="o", markersize=4, fillstyle="none", color=color)

        if scenario.output.plots:
            first = scenario.output.plots[0]
            ax.set_xlabel(f"x{first.x + 1}")
            ax.set_ylabel(f"x{first.y + 1}")
        ax.set_title(scenario.name)
        ax.set_aspect("equal", adjustable="datalim")
        ax.grid(True, linestyle="--", alpha=0.4)

        path = out_dir / f"{scenario.name}_phase.svg"
        fig.savefig(path, format="svg", bbox_inches="tight")
    finally:
        plt.close(fig)
    return [path]
