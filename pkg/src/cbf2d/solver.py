"""Newton / Picard iteration for the discrete coupled system.

Each iterate solves a sparse linear system whose matrix is the fixed
augmented operator plus the convective block evaluated at the current
velocity (Picard) or its full linearization (Newton).  Convergence is
measured by the relative coefficient increment.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .forms import Assembler, apply_essential
from .spaces import DiscreteSolution


class SolverError(RuntimeError):
    """Linear solve failed or the nonlinear iteration did not converge."""


@dataclass
class SolverConfig:
    tol: float = 1e-6
    max_iter: int = 25
    strategy: str = "newton"      # "newton" or "picard"
    picard_fallback: bool = True  # restart with Picard steps on divergence
    fallback_picard_steps: int = 5


@dataclass
class IterationLog:
    increments: list = field(default_factory=list)
    strategy: str = "newton"

    @property
    def num_iterations(self):
        return len(self.increments)


def solve_linear(matrix, rhs):
    """Sparse direct solve with a residual sanity check."""
    x = spla.spsolve(matrix.tocsc(), rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solver returned non-finite values")
    nrm = np.linalg.norm(rhs)
    res = np.linalg.norm(matrix @ x - rhs)
    if res > 1e-8 * max(nrm, 1.0):
        raise SolverError(f"linear solve residual too large: {res:.3e}")
    return x


def _iterate(assembler: Assembler, config: SolverConfig, x0, newton,
             max_iter, rhs, ess_dofs, ess_vals, log):
    x = x0.copy()
    for _ in range(max_iter):
        if newton:
            # solve J(x) dx_full = F - N(x) + J_conv(x) x, expressed as a
            # full-system update: J x_new = F - N(x) + B'_x x
            mat = assembler.matrix(u_coeffs=x, newton=True)
            nvec = assembler.nonlinear_residual_vector(x)
            conv = mat - assembler.matrix()  # convective jacobian block
            b = rhs - nvec + conv @ x
        else:
            mat = assembler.matrix(u_coeffs=x, newton=False)
            b = rhs.copy()
        mat, b = apply_essential(mat, b, ess_dofs, ess_vals)
        xn = solve_linear(mat, b)
        denom = np.linalg.norm(xn)
        inc = np.linalg.norm(xn - x) / (denom if denom > 0 else 1.0)
        log.increments.append(inc)
        x = xn
        if inc <= config.tol:
            return x, True
        if not np.isfinite(inc) or inc > 1e6:
            return x, False
    return x, False


def solve_cbf(assembler: Assembler, config: SolverConfig = None,
              initial=None):
    """Solve the discrete problem, returning (DiscreteSolution, IterationLog).

    Starts from the zero coefficient vector unless ``initial`` is given.
    If Newton stagnates or diverges, a few Picard steps are taken from zero
    and Newton is restarted from there.
    """
    config = config or SolverConfig()
    rhs = assembler.rhs_vector()
    ess_dofs, ess_vals = assembler.traction_dofs()
    x0 = np.zeros(assembler.n_total) if initial is None else initial.copy()
    log = IterationLog(strategy=config.strategy)
    newton = config.strategy == "newton"

    x, ok = _iterate(assembler, config, x0, newton, config.max_iter,
                     rhs, ess_dofs, ess_vals, log)
    if not ok and newton and config.picard_fallback:
        log = IterationLog(strategy="picard+newton")
        x, _ = _iterate(assembler, config, np.zeros(assembler.n_total),
                        False, config.fallback_picard_steps,
                        rhs, ess_dofs, ess_vals, log)
        x, ok = _iterate(assembler, config, x, True, config.max_iter,
                         rhs, ess_dofs, ess_vals, log)
    if not ok:
        raise SolverError(
            "nonlinear iteration did not converge; increments: "
            + ", ".join(f"{v:.3e}" for v in log.increments))
    return DiscreteSolution(assembler.spaces, x), log
