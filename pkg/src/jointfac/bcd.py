"""Alternating block updates with a cyclic or maximum-block-improvement schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

SCHEDULES = ("cyclic", "mbi")


@dataclass
class BCDRun:
    state: object
    cost_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    chosen: list = field(default_factory=list)


def run_bcd(
    state,
    blocks: Mapping[str, Callable],
    cost: Callable,
    schedule: str = "cyclic",
    max_outer: int = 200,
    tol: float = 1e-6,
) -> BCDRun:
    """Iterate block updates until the relative cost change drops below ``tol``.

    ``blocks`` maps names to pure functions ``state -> state`` that each
    minimise the cost over one block.  Under ``"cyclic"`` every block is
    applied once per outer iteration, in mapping order.  Under ``"mbi"``
    every block update is evaluated from the same point and only the one with
    the lowest resulting cost is kept (ties go to the earlier block).
    """
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}; expected one of {SCHEDULES}")
    run = BCDRun(state, [cost(state)])
    prev = run.cost_trace[0]
    for it in range(1, max_outer + 1):
        if schedule == "cyclic":
            for update in blocks.values():
                state = update(state)
            c = cost(state)
        else:
            best_name, best_state, c = None, None, None
            for name, update in blocks.items():
                cand = update(state)
                cc = cost(cand)
                if c is None or cc < c:
                    best_name, best_state, c = name, cand, cc
            state = best_state
            run.chosen.append(best_name)
        run.cost_trace.append(c)
        run.n_iter = it
        if abs(prev - c) <= tol * max(abs(prev), 1e-300):
            run.converged = True
            break
        prev = c
    run.state = state
    return run
