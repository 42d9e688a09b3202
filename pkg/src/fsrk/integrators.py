"""Time stepping: one-step Runge-Kutta execution and FSRK composition.

A fractional-step method advances y' = f1 + f2 by running stage k's
operator-1 sub-flow over alpha_k[1]*dt and then its operator-2 sub-flow
over alpha_k[2]*dt, k ascending, chaining initial conditions. Each
nonzero sub-integration is one Runge-Kutta step (optionally split into
equal substeps); zero coefficients are skipped without evaluating
anything. Diagonally implicit stages solve their stage equation by
Newton iteration; linear operators that declare a bandwidth get a
banded solve, and ExactFlow sub-integrators apply the matrix
exponential of operators that declare a constant matrix.
"""

from collections import namedtuple

import numpy as np
from scipy.linalg import expm, solve_banded

from .errors import InputError, InstabilityError, StepFailureError
from .plans import SubIntegratorPlan
from .tableaus import ButcherTableau, ExactFlow

NEWTON_MAX_ITERS = 25
NEWTON_TOL = 1e-12
FD_REL_STEP = 1e-7

StepRecord = namedtuple("StepRecord", "stage operator alpha tableau newton_iters")


def fd_jacobian(f, t, y, f0=None, bandwidth=None, rel=FD_REL_STEP):
    """Forward-difference Jacobian of f at (t, y).

    Returns a dense (n, n) matrix, or the scipy banded form
    ab[bw + i - j, j] = J[i, j] when a symmetric bandwidth is given
    (costing only 2*bw + 1 evaluations via column grouping).
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if f0 is None:
        f0 = np.asarray(f(t, y), dtype=float)
    if bandwidth is None:
        J = np.empty((n, n))
        for j in range(n):
            dy = rel * (1.0 + abs(y[j]))
            yp = y.copy()
            yp[j] += dy
            J[:, j] = (np.asarray(f(t, yp), dtype=float) - f0) / dy
        return J
    bw = int(bandwidth)
    width = 2 * bw + 1
    ab = np.zeros((width, n))
    for group in range(min(width, n)):
        cols = np.arange(group, n, width)
        dys = rel * (1.0 + np.abs(y[cols]))
        yp = y.copy()
        yp[cols] += dys
        df = np.asarray(f(t, yp), dtype=float) - f0
        for j, dy in zip(cols, dys):
            lo = max(0, j - bw)
            hi = min(n, j + bw + 1)
            for i in range(lo, hi):
                ab[bw + i - j, j] = df[i] / dy
    return ab


def _newton_matrix(hA, J, bandwidth, n):
    """I - hA*J in the representation matching the solver."""
    if bandwidth is None:
        return np.eye(n) - hA * J
    M = -hA * J
    M[bandwidth, :] += 1.0
    return M


def _rk_step(f, jac, t, y, h, tab, bandwidth=None):
    """One RK step; returns (y_next, newton_iterations)."""
    y = np.asarray(y, dtype=float)
    n = y.size
    A, b, c = tab.A, tab.b, tab.c
    ks = []
    iters_total = 0
    ymax = float(np.max(np.abs(y))) if n else 0.0
    newton_tol = NEWTON_TOL * (1.0 + ymax)
    for i in range(tab.n_stages):
        y_base = y.copy()
        for j in range(i):
            if A[i, j] != 0.0:
                y_base += h * A[i, j] * ks[j]
        ti = t + c[i] * h
        if A[i, i] == 0.0:
            ks.append(np.asarray(f(ti, y_base), dtype=float))
            continue
        hA = h * A[i, i]
        Y = y.copy()  # stage-state initial guess
        converged = False
        residual = np.inf
        for _ in range(NEWTON_MAX_ITERS):
            fY = np.asarray(f(ti, Y), dtype=float)
            G = Y - hA * fY - y_base
            residual = float(np.max(np.abs(G))) if n else 0.0
            if not np.isfinite(residual):
                break
            if residual <= newton_tol:
                converged = True
                break
            J = jac(ti, Y) if jac is not None else fd_jacobian(
                f, ti, Y, f0=fY, bandwidth=bandwidth
            )
            M = _newton_matrix(hA, np.asarray(J, dtype=float), bandwidth, n)
            if bandwidth is None:
                dY = np.linalg.solve(M, G)
            else:
                dY = solve_banded((bandwidth, bandwidth), M, G)
            Y = Y - dY
            iters_total += 1
        if not converged:
            raise StepFailureError(
                f"Newton failed at RK stage {i + 1} of {tab.name} "
                f"(residual {residual:.3e}, h = {h:g})",
                rk_stage=i + 1,
                residual=residual,
            )
        ks.append((Y - y_base) / hA)
    y_next = y.copy()
    for i in range(tab.n_stages):
        if b[i] != 0.0:
            y_next += h * b[i] * ks[i]
    return y_next, iters_total


def rk_step(f, jac, t, y, h, tab, bandwidth=None):
    """One Runge-Kutta step of size h (possibly negative) with tableau tab.

    Implicit stages use Newton iteration (tolerance 1e-12*(1+|y|) in max
    norm, at most 25 iterations), finite-differencing the Jacobian when
    jac is None. Raises a step failure carrying the stage index and last
    residual on non-convergence.
    """
    if h == 0.0:
        raise InputError("rk_step requires a nonzero step size")
    if isinstance(tab, ExactFlow):
        raise InputError(
            "ExactFlow needs an operator matrix; use fsrk_step on a problem "
            "that declares one"
        )
    if not isinstance(tab, ButcherTableau):
        raise InputError(f"expected a ButcherTableau, got {type(tab).__name__}")
    y_next, _ = _rk_step(f, jac, t, y, float(h), tab, bandwidth=bandwidth)
    return y_next


def _operator(problem, op):
    """(f, jac, bandwidth, matrix) for operator 1 or 2 of a problem."""
    suffix = str(op)
    f = getattr(problem, "f" + suffix)
    jac = getattr(problem, "jac" + suffix, None)
    bandwidth = getattr(problem, "bandwidth" + suffix, None)
    matrix = getattr(problem, "matrix" + suffix, None)
    return f, jac, bandwidth, matrix


def fsrk_step(problem, method, plan, t, y, dt, substeps=1):
    """One step of the splitting method; returns (y_next, step records).

    Sub-integrations run in stage order, operator 1 before operator 2,
    each over alpha_k[l]*dt from the operator's own clock (each
    operator's sub-flows tile [t, t+dt] for a consistent method). dt may
    be negative, which reverses every sub-flow.
    """
    dt = float(dt)
    if dt == 0.0:
        raise InputError("fsrk_step requires a nonzero dt")
    substeps = int(substeps)
    if substeps < 1:
        raise InputError("substeps must be >= 1")
    if not isinstance(plan, SubIntegratorPlan):
        raise InputError("fsrk_step requires a SubIntegratorPlan")
    state = np.asarray(y, dtype=float)
    clocks = [float(t), float(t)]
    records = []
    for k in range(1, method.stages + 1):
        for op in (1, 2):
            alpha = method.alpha[k - 1, op - 1]
            if alpha == 0.0:
                continue
            tab = plan.resolve(k, op, alpha)
            f, jac, bandwidth, matrix = _operator(problem, op)
            h_total = alpha * dt
            t_op = clocks[op - 1]
            iters = 0
            if isinstance(tab, ExactFlow):
                if matrix is None:
                    raise InputError(
                        f"operator {op} of {getattr(problem, 'label', 'problem')} "
                        "declares no matrix; ExactFlow needs one"
                    )
                state = expm(h_total * matrix) @ state
            else:
                h = h_total / substeps
                t_sub = t_op
                for _ in range(substeps):
                    try:
                        state, it = _rk_step(
                            f, jac, t_sub, state, h, tab, bandwidth=bandwidth
                        )
                    except StepFailureError as exc:
                        raise StepFailureError(
                            f"stage {k}, operator {op}: {exc}",
                            rk_stage=exc.rk_stage,
                            residual=exc.residual,
                            stage=k,
                            operator=op,
                        ) from exc
                    iters += it
                    t_sub += h
            clocks[op - 1] = t_op + h_total
            records.append(StepRecord(k, op, float(alpha), tab.name, iters))
    return state, records


class Trajectory:
    """Fixed-step integration output: times and row-per-time states."""

    def __init__(self, times, states, newton_iters=0):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.newton_iters = int(newton_iters)

    @property
    def t_final(self):
        return self.times[-1]

    @property
    def y_final(self):
        return self.states[-1]

    def at_times(self, sample_times, atol=1e-9):
        """States at recorded times matching sample_times exactly.

        Integrate with checkpoints=sample_times to guarantee the match.
        """
        idx = np.searchsorted(self.times, sample_times)
        idx = np.clip(idx, 0, len(self.times) - 1)
        left = np.clip(idx - 1, 0, len(self.times) - 1)
        pick = np.where(
            np.abs(self.times[left] - sample_times)
            < np.abs(self.times[idx] - sample_times),
            left,
            idx,
        )
        if np.max(np.abs(self.times[pick] - sample_times)) > atol:
            raise InputError(
                "trajectory does not contain the requested sample times; "
                "pass them as checkpoints when integrating"
            )
        return self.states[pick]

    def __repr__(self):
        return (
            f"Trajectory({len(self.times)} points, t in "
            f"[{self.times[0]:g}, {self.times[-1]:g}], n = {self.states.shape[1]})"
        )


def integrate(problem, method, plan, t0, tf, dt, substeps=1, checkpoints=None):
    """Fixed-step march from t0 to tf.

    The last step is shortened to land on tf exactly; checkpoint times
    are landed on exactly the same way (one shortened step, then the
    constant step resumes). Non-finite states raise an instability error
    carrying the blow-up time and the partial trajectory.
    """
    t0, tf, dt = float(t0), float(tf), float(dt)
    if not tf > t0:
        raise InputError(f"integrate requires tf > t0, got [{t0}, {tf}]")
    if dt <= 0.0:
        raise InputError(f"integrate requires dt > 0, got {dt}")
    events = []
    if checkpoints is not None:
        events = sorted({float(c) for c in checkpoints if t0 < c < tf})
    tiny = 1e-12 * max(1.0, abs(tf))
    y = np.asarray(problem.y0, dtype=float)
    times = [t0]
    states = [y.copy()]
    newton_total = 0
    t = t0
    ev = 0
    while t < tf - tiny:
        t_next = min(t + dt, tf)
        if ev < len(events) and events[ev] < t_next - tiny:
            t_next = events[ev]
        if ev < len(events) and abs(events[ev] - t_next) <= tiny:
            ev += 1
        def _partial():
            return Trajectory(times, states, newton_total)
        try:
            # blow-ups surface as non-finite states, not as warnings
            with np.errstate(over="ignore", invalid="ignore"):
                y, records = fsrk_step(problem, method, plan, t, y,
                                       t_next - t, substeps)
        except StepFailureError as exc:
            if exc.residual is not None and not np.isfinite(exc.residual):
                raise InstabilityError(
                    f"solution blew up inside the step at t = {t:g} (dt = {dt:g})",
                    t_blowup=t,
                    partial=_partial(),
                ) from exc
            raise
        newton_total += sum(r.newton_iters for r in records)
        t = t_next
        times.append(t)
        states.append(y.copy())
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > 1e150:
            raise InstabilityError(
                f"non-finite state at t = {t:g} (dt = {dt:g})",
                t_blowup=t,
                partial=_partial(),
            )
    return Trajectory(times, states, newton_total)


def trajectory_to_csv(traj, path, stride=1):
    """Write t, y_0..y_{n-1} rows (optionally strided, last row kept)."""
    stride = max(1, int(stride))
    idx = list(range(0, len(traj.times), stride))
    if idx[-1] != len(traj.times) - 1:
        idx.append(len(traj.times) - 1)
    n = traj.states.shape[1]
    lines = ["t," + ",".join(f"y_{j}" for j in range(n))]
    for i in idx:
        row = ",".join(f"{v:.12g}" for v in traj.states[i])
        lines.append(f"{traj.times[i]:.12g},{row}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
