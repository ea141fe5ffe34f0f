"""Damped Newton solver for S_k(D^2 u) = epsilon on annular grids.

The residual at each interior node is S_k of the affine FD Hessian minus
epsilon; the Newton linearization uses the positive-definite derivative
matrices S_k^{ij} (Newton transforms), assembled into one sparse system.
Backtracking enforces both a merit decrease and the admissibility
safeguard: a step is rejected if any node's Hessian leaves the Gamma_k
cone beyond a small floor. A decreasing-(epsilon, r) continuation
warm-starts each solve from the previous solution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import symfunc
from .discretize import BoundaryData, DiscreteOps
from .geometry import AnnularGrid, GridFunction
from .radial import radial_oracle


class SolveFailure(RuntimeError):
    """Newton failed; carries the iterate diagnostics collected so far."""

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class AdmissibilityError(ValueError):
    """An iterate (or the initial guess) left the Gamma_k cone."""


@dataclass
class SolverConfig:
    """Newton iteration controls for one epsilon level."""

    epsilon: float
    newton_tol: float = 1e-10
    max_iters: int = 60
    max_backtracks: int = 26
    armijo: float = 1e-4
    gamma_floor: float = 1e-12
    linear_rtol: float = 1e-12
    linear_maxiter: int = 4000
    eps1: float | None = None  # subsolution slack bound, when known
    allow_projected_start: bool = True
    projection_floor: float = 1e-6

    def validate(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.eps1 is not None and self.epsilon >= self.eps1:
            raise ValueError(
                f"epsilon = {self.epsilon} must stay below the barrier slack "
                f"eps1 = {self.eps1}"
            )


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    admissibility_margin: float
    wall_time: float
    converged: bool
    trace: list = field(default_factory=list)
    boundary_residuals: dict = field(default_factory=dict)
    linear_solver: str = ""
    residual_floor: float = 0.0
    projected_start_iters: int = 0


def _linear_solve(jac, rhs, config: SolverConfig):
    """Solve J d = rhs; direct LU for small systems, AMG-preconditioned
    BiCGStab (diagonal fallback) for large ones. Deterministic."""
    n = rhs.size
    if n <= 20_000:
        return spla.spsolve(jac.tocsc(), rhs), "splu"
    a = (-jac).tocsr()
    b = -rhs
    try:
        import pyamg

        sym = ((a + a.T) * 0.5).tocsr()
        ml = pyamg.smoothed_aggregation_solver(sym, max_coarse=400)
        precond = ml.aspreconditioner(cycle="V")
        label = "bicgstab+amg"
    except Exception:
        diag = a.diagonal()
        diag = np.where(np.abs(diag) > 1e-300, diag, 1.0)
        precond = spla.LinearOperator(a.shape, matvec=lambda x: x / diag)
        label = "bicgstab+jacobi"
    sol, info = spla.bicgstab(
        a, b, rtol=config.linear_rtol, atol=0.0, maxiter=config.linear_maxiter, M=precond
    )
    if info != 0:
        return spla.spsolve(jac.tocsc(), rhs), "splu-fallback"
    return sol, label


def solve_epsilon(
    grid: AnnularGrid,
    k: int,
    config: SolverConfig,
    bc: BoundaryData,
    init: GridFunction | np.ndarray,
) -> tuple[GridFunction, SolveReport]:
    """Damped Newton from an admissible initial iterate.

    Every accepted iterate keeps all node Hessians inside Gamma_k (margin
    above config.gamma_floor); the final residual satisfies
    max_i |S_k(D^2 u)_i - epsilon| <= newton_tol.
    """
    config.validate()
    t_start = time.perf_counter()
    ops = DiscreteOps(grid)
    bvals = ops.boundary_values(bc)
    u = np.array(init.values if isinstance(init, GridFunction) else init, dtype=float)
    if u.shape != (grid.n_interior,):
        raise ValueError("initial iterate does not match the grid")

    hess = ops.hessian(u, bvals)
    margin = float(np.min(symfunc.batch_gamma_margin(hess, k)))
    strict = margin > config.gamma_floor or k == 1
    if k >= 2 and margin <= config.gamma_floor:
        if not config.allow_projected_start:
            raise AdmissibilityError(
                f"initial iterate leaves Gamma_{k}: margin {margin:.3e}"
            )
        # pre-phase: linearization weights come from cone-projected
        # Hessians until the iterate first enters Gamma_k everywhere;
        # admissibility then ratchets on and is enforced for every
        # subsequently accepted iterate
    projected_iters = 0

    eps = config.epsilon
    trace = []
    label = ""

    def residual_floor(weights_abs, u_cur):
        # representable-residual bound: |S_k| noise through the stencil
        noise_h = ops.hessian_noise(u_cur, bvals)
        return 8.0 * np.einsum("qij,qij->q", weights_abs, noise_h)

    def converged(res_cur, floor_cur):
        return bool(np.all(np.abs(res_cur) <= np.maximum(config.newton_tol, floor_cur)))

    def newton_weights(h_mats):
        if strict:
            return symfunc.batch_newton_transform(h_mats, k)
        lam = symfunc.batch_eigenvalues(h_mats)
        shift = np.maximum(0.0, config.projection_floor - lam[..., 0])
        eye = np.broadcast_to(np.eye(h_mats.shape[-1]), h_mats.shape)
        return symfunc.batch_newton_transform(h_mats + shift[:, None, None] * eye, k)

    res = symfunc.batch_sk(hess, k) - eps
    rnorm = float(np.max(np.abs(res)))
    merit = 0.5 * float(res @ res)
    weights = newton_weights(hess)
    floor = residual_floor(np.abs(weights), u)
    iters = 0
    while not converged(res, floor) and iters < config.max_iters:
        jac = ops.jacobian(weights)
        step, label = _linear_solve(jac, -res, config)
        alpha = 1.0
        accepted = False
        for _ in range(config.max_backtracks):
            u_try = u + alpha * step
            hess_try = ops.hessian(u_try, bvals)
            margin_try = float(np.min(symfunc.batch_gamma_margin(hess_try, k)))
            cone_ok = margin_try > config.gamma_floor or not strict
            if cone_ok:
                res_try = symfunc.batch_sk(hess_try, k) - eps
                merit_try = 0.5 * float(res_try @ res_try)
                if merit_try <= (1.0 - 2.0 * config.armijo * alpha) * merit:
                    u, hess, res = u_try, hess_try, res_try
                    margin, merit = margin_try, merit_try
                    accepted = True
                    break
            alpha *= 0.5
        iters += 1
        if accepted:
            if not strict:
                projected_iters += 1
                if margin > config.gamma_floor:
                    strict = True
            weights = newton_weights(hess)
            floor = residual_floor(np.abs(weights), u)
        rnorm = float(np.max(np.abs(res)))
        if not accepted:
            if converged(res, floor):
                break
            raise SolveFailure(
                f"line search stalled at iteration {iters}: residual {rnorm:.3e}, "
                f"margin {margin:.3e}",
                trace,
            )
        trace.append(
            {"iter": iters, "residual": rnorm, "alpha": alpha, "margin": margin,
             "strict_cone": strict}
        )
    rnorm = float(np.max(np.abs(res)))
    if not converged(res, floor):
        raise SolveFailure(
            f"no convergence in {config.max_iters} iterations: residual {rnorm:.3e}",
            trace,
        )
    if margin <= config.gamma_floor:
        raise SolveFailure(
            f"converged residual but the iterate is not strictly admissible "
            f"(margin {margin:.3e})",
            trace,
        )
    report = SolveReport(
        iterations=iters,
        final_residual=rnorm,
        admissibility_margin=margin,
        wall_time=time.perf_counter() - t_start,
        converged=True,
        trace=trace,
        boundary_residuals=_boundary_consistency(grid, ops, u, bvals),
        linear_solver=label,
        residual_floor=float(np.max(floor)),
        projected_start_iters=projected_iters,
    )
    return GridFunction(grid, u), report


def _boundary_consistency(grid, ops, u, bvals) -> dict:
    """Per-component mismatch between the linear extrapolation of the
    solution through each cut arm and the imposed datum (O(h^2) when the
    discrete solution is consistent); reported separately per boundary."""
    out = {"outer": 0.0, "inner": 0.0}
    from .geometry import BTYPE_INNER, BTYPE_OUTER

    for key in ops.keys:
        table = grid.arms[key]
        if table.cut_rows.size == 0:
            continue
        rows, sides = table.cut_rows, table.cut_sides
        opp = table.nbr[rows, 1 - sides]
        usable = opp >= 0
        rows, sides, opp = rows[usable], sides[usable], opp[usable]
        if rows.size == 0:
            continue
        h_opp = table.length[rows, 1 - sides]
        h_cut = table.length[rows, sides]
        extrap = u[rows] + (u[rows] - u[opp]) * h_cut / h_opp
        datum = bvals[key][rows, sides]
        gap = np.abs(extrap - datum)
        kinds = table.btype[rows, sides]
        for kind, name in ((BTYPE_OUTER, "outer"), (BTYPE_INNER, "inner")):
            sel = kinds == kind
            if np.any(sel):
                out[name] = max(out[name], float(np.max(gap[sel])))
    return out


def radial_initial_guess(
    grid: AnnularGrid,
    n: int,
    k: int,
    epsilon: float,
    inner_value: float,
    outer_value: float,
    bc: BoundaryData | None = None,
    gamma_floor: float = 1e-12,
) -> np.ndarray:
    """Admissible initial iterate from the radial first-integral profile.

    The spliced subsolution is strictly admissible in the continuum but
    its transition band is too sharp for lattice-scale FD Hessians, so
    solves start from this smooth radial profile instead. Near the
    puncture the cut-arm truncation error can push the discrete Hessian
    out of the cone for near-homogeneous profiles; a convexity bump
    c |x|^2 / 2 is added with the smallest c from a fixed ladder that
    makes every node Hessian strictly admissible.
    """
    from .geometry import direction_angle
    from .radial import RadialInfeasibleError

    domain = grid.domain
    radii = np.linalg.norm(grid.coords, axis=1)
    r_ref = domain.max_rho
    # ray remap: identity near the puncture (where angular coupling would
    # blow up like 1/|x|), smoothstep-blended so each ray's boundary
    # crossing lands exactly on the reference radius; both Dirichlet data
    # are then matched exactly (identity throughout for ball domains)
    rho_theta = domain.profile.rho(direction_angle(domain, grid.coords))
    s = np.clip((radii - grid.r) / (rho_theta - grid.r), 0.0, 1.0)
    mapped = radii + (r_ref - rho_theta) * s * s * (3.0 - 2.0 * s)
    mapped = np.clip(mapped, grid.r, r_ref)

    def profile_values(eta: float) -> np.ndarray:
        sol = radial_oracle(n, k, eta, grid.r, r_ref, inner_value, outer_value)
        order = np.argsort(mapped, kind="stable")
        vals = np.empty_like(mapped)
        vals[order] = sol.phi(mapped[order])
        return vals

    if k == 1:
        return profile_values(epsilon)
    ops = DiscreteOps(grid)
    bvals = ops.boundary_values(bc if bc is not None else BoundaryData(outer_value, inner_value))
    # steepness ladder: larger auxiliary right-hand sides carry more
    # convexity margin against the cut-arm truncation near the puncture;
    # if no rung is fully admissible, hand back the one with the best
    # margin (the solver's projected pre-phase copes with the rest)
    best, best_margin = None, -np.inf
    for mult in (1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0):
        try:
            cand = profile_values(epsilon * mult)
        except RadialInfeasibleError:
            break
        hess = ops.hessian(cand, bvals)
        margin = float(np.min(symfunc.batch_gamma_margin(hess, k)))
        if margin > gamma_floor:
            return cand
        if margin > best_margin:
            best, best_margin = cand, margin
    if best is None:
        raise AdmissibilityError("no radial initializer available on this grid")
    return best


@dataclass
class ContinuationStep:
    epsilon: float
    r: float
    solution: GridFunction
    report: SolveReport
    monotone_vs_previous_r: bool | None = None
    monotonicity_margin: float | None = None


def continuation(
    grids: list[AnnularGrid],
    k: int,
    eps_schedule: list[float],
    r_schedule: list[float],
    bc_factory,
    init_factory,
    config_factory,
) -> list[ContinuationStep]:
    """Solve along decreasing (epsilon, r) schedules with warm starts.

    grids[i] discretizes the puncture radius r_schedule[i]; for each grid
    the epsilon ladder is descended in order, warm-starting each solve
    from the previous solution (a subsolution of the next problem, since
    epsilon decreases). Across grids the previous solution is transferred
    by lattice-index matching and checked for the puncture-monotonicity
    u^{eps,r} <= u^{eps,r_smaller} + 10 h^2 on shared nodes.

    bc_factory(r) -> BoundaryData; init_factory(grid, epsilon) -> values;
    config_factory(epsilon) -> SolverConfig.
    """
    if list(eps_schedule) != sorted(eps_schedule, reverse=True):
        raise ValueError("epsilon schedule must be decreasing")
    if list(r_schedule) != sorted(r_schedule, reverse=True):
        raise ValueError("r schedule must be decreasing")
    if len(grids) != len(r_schedule):
        raise ValueError("one grid per puncture radius")
    steps: list[ContinuationStep] = []
    prev: GridFunction | None = None
    for grid, r in zip(grids, r_schedule):
        bc = bc_factory(r)
        for j, eps in enumerate(eps_schedule):
            config = config_factory(eps)
            init = None
            if prev is not None:
                init = _transfer(prev, grid, lambda g: init_factory(g, eps))
                hess_ok = _admissible_on(grid, init, bc, k, config.gamma_floor)
                if not hess_ok:
                    init = None
            if init is None:
                init = init_factory(grid, eps)
            sol, rep = solve_epsilon(grid, k, config, bc, init)
            step = ContinuationStep(eps, r, sol, rep)
            if j == 0 and prev is not None and prev.grid is not grid:
                margin = _shared_node_margin(prev, sol)
                step.monotonicity_margin = margin
                step.monotone_vs_previous_r = bool(margin >= -10.0 * grid.h**2)
            steps.append(step)
            prev = sol
    return steps


def _admissible_on(grid, values, bc, k, floor) -> bool:
    ops = DiscreteOps(grid)
    hess = ops.hessian(values, ops.boundary_values(bc))
    return float(np.min(symfunc.batch_gamma_margin(hess, k))) > floor


def _transfer(prev: GridFunction, grid: AnnularGrid, fallback) -> np.ndarray:
    """Carry a solution to a new grid of the same lattice, filling nodes
    without a donor from the fallback initializer."""
    if prev.grid is grid:
        return np.array(prev.values)
    vals = fallback(grid)
    if prev.grid.shape == grid.shape and prev.grid.h == grid.h:
        donor = prev.grid.full_field(prev.values)
        candidate = donor[grid.interior_flat]
        ok = np.isfinite(candidate)
        vals = np.where(ok, candidate, vals)
    return vals


def _shared_node_margin(prev: GridFunction, new: GridFunction) -> float:
    """min over shared nodes of u_new - u_prev (puncture monotonicity)."""
    if prev.grid.shape != new.grid.shape:
        return np.nan
    a = prev.grid.full_field(prev.values)
    b = new.grid.full_field(new.values)
    both = np.isfinite(a) & np.isfinite(b)
    return float(np.min(b[both] - a[both]))


def discrete_comparison_margin(
    grid: AnnularGrid, k: int, v, w, bc_v: BoundaryData, bc_w: BoundaryData
) -> dict:
    """Check the discrete comparison statement on a pair of admissible
    grid functions: S_k(D^2 v) >= S_k(D^2 w) at every node and v <= w on
    both boundaries should give v <= w + 10 h^2 everywhere."""
    ops = DiscreteOps(grid)
    v_arr = v.values if isinstance(v, GridFunction) else np.asarray(v, dtype=float)
    w_arr = w.values if isinstance(w, GridFunction) else np.asarray(w, dtype=float)
    hv = ops.hessian(v_arr, ops.boundary_values(bc_v))
    hw = ops.hessian(w_arr, ops.boundary_values(bc_w))
    sv = symfunc.batch_sk(hv, k)
    sw = symfunc.batch_sk(hw, k)
    return {
        "premise_operator": float(np.min(sv - sw)),
        "admissible": bool(
            np.all(symfunc.batch_in_gamma_k(hv, k)) and np.all(symfunc.batch_in_gamma_k(hw, k))
        ),
        "conclusion_margin": float(np.max(v_arr - w_arr)),
        "tolerance": 10.0 * grid.h**2,
        "holds": bool(np.max(v_arr - w_arr) <= 10.0 * grid.h**2),
    }
