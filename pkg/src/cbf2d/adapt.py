"""Adaptive solve-estimate-mark-refine loop.

Marking follows the mean-value strategy: a triangle is refined when its
indicator exceeds ``c_adm`` times the current mean indicator.  Refinement
is newest-vertex bisection with closure.
"""

from dataclasses import dataclass, field

import numpy as np

from .estimator import compute_indicators
from .forms import Assembler, ProblemData
from .mesh import TriangleMesh, build_edges, refine
from .solver import SolverConfig, solve_cbf
from .spaces import build_spaces


def mark(indicators, c_adm: float = 0.75):
    """Marked triangle ids for squared indicators (mean-value strategy).

    Compares sqrt(eta_sq) against ``c_adm`` times its mean; ``c_adm`` must
    lie in (0, 1].
    """
    if not 0.0 < c_adm <= 1.0:
        raise ValueError("marking fraction must lie in (0, 1]")
    eta = np.sqrt(np.asarray(indicators.eta_sq if hasattr(indicators,
                                                          "eta_sq")
                             else indicators))
    return np.nonzero(eta >= c_adm * eta.mean())[0]


@dataclass
class AdaptiveStep:
    mesh: TriangleMesh
    solution: object
    indicators: object
    dofs: int
    estimate: float
    iterations: int
    num_marked: int = 0


@dataclass
class AdaptiveResult:
    steps: list = field(default_factory=list)

    @property
    def final(self):
        return self.steps[-1]


def adaptive_solve(mesh: TriangleMesh, data: ProblemData, k: int = 0,
                   estimator_kind: str = "theta1", c_adm: float = 0.75,
                   max_steps: int = 10, dof_budget: int = 500_000,
                   solver_config: SolverConfig = None,
                   callback=None) -> AdaptiveResult:
    """Run the adaptive loop until the step or DOF budget is exhausted.

    ``callback(step)`` is invoked after each completed step, before the
    refinement that produces the next mesh.
    """
    result = AdaptiveResult()
    solver_config = solver_config or SolverConfig()
    for step in range(max_steps):
        topo = build_edges(mesh)
        spaces = build_spaces(mesh, topo, k)
        asm = Assembler(mesh, topo, spaces, data)
        solution, log = solve_cbf(asm, solver_config)
        ind = compute_indicators(solution, mesh, topo, data,
                                 kind=estimator_kind)
        record = AdaptiveStep(mesh=mesh, solution=solution, indicators=ind,
                              dofs=spaces.total_dofs, estimate=ind.total,
                              iterations=log.num_iterations)
        marked = mark(ind, c_adm)
        record.num_marked = len(marked)
        result.steps.append(record)
        if callback is not None:
            callback(record)
        if step == max_steps - 1 or spaces.total_dofs >= dof_budget:
            break
        mesh = refine(mesh, marked)
    return result
