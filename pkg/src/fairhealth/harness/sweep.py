"""Gate-count by buffer-size sweep reporting chain-side operation counts."""

from __future__ import annotations

from typing import Callable, Dict, List, Sequence

from .runner import RunReport, run
from .scenario import adversarial_scenario, golden_scenario

GATES = (4, 8, 16, 32)
BUFFERS = (32, 64, 128)


def sweep(gates: Sequence[int] = GATES, buffers: Sequence[int] = BUFFERS,
          factory: Callable[..., object] = golden_scenario) -> List[RunReport]:
    """One report per grid point, gates varying slowest."""
    return [run(factory(gates=g, chunk_size=b)) for g in gates for b in buffers]


def complaint_sweep(gates: Sequence[int] = GATES, buffers: Sequence[int] = BUFFERS) -> List[RunReport]:
    """The same grid with a hospital that corrupts one leaf, so every case ends in a complaint."""
    return sweep(gates, buffers, lambda **p: adversarial_scenario("hospital", "WrongFile", **p))


def file_size(report: RunReport) -> int:
    """Size of the first committed medical file as recorded on chain."""
    ms = report.data["chain_records"]["treatment/ms/1"]["value"]
    return ms["file_props"]["file_size"]


def op_rows(reports: Sequence[RunReport]) -> List[Dict]:
    """Flatten reports into rows of (gates, buffer, function, ops per call)."""
    rows = []
    for rep in reports:
        params = rep.data["scenario"]["params"]
        for fn, row in rep.op_counts.items():
            if row["calls"]:
                rows.append({"gates": params["gates"], "buffer": params["chunk_size"], "function": fn,
                             "calls": row["calls"], "ops": row["max"]})
    return rows
