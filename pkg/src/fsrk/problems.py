"""Split test problems, reference solutions, and the MRMS error metric.

Desk-scale stand-ins for stiff reaction-diffusion benchmarks: a scalar
linear pair, small noncommuting linear systems with matrix-exponential
exact solutions, and a 1D/2D FitzHugh-Nagumo membrane model coupled to
scalar diffusion of the voltage (method of lines, central second
differences, homogeneous Neumann boundaries via ghost-point
reflection). The reaction time scale eps makes the reaction operator
stiff while the diffusion stays mild, the eigenvalue structure that
separates the DR and RD operator orderings.
"""

import hashlib
import os

import numpy as np
from scipy.linalg import expm
from scipy.sparse import eye as sp_eye
from scipy.sparse import kron as sp_kron
from scipy.sparse import diags

from .errors import (
    BracketError,
    EstimationError,
    InputError,
    InstabilityError,
    SearchFailureError,
    StepFailureError,
)
from .integrators import integrate
from .methods import get_method, iter_config_lines
from .plans import SubIntegratorPlan
from .tableaus import rk3, sdirk23


class SplitProblem:
    """A 2-additively split ODE system y' = f1(t,y) + f2(t,y).

    jac1/jac2 return dense (n, n) matrices, or the scipy banded form
    ab[bw + i - j, j] = J[i, j] when the corresponding bandwidth is
    declared. matrix1/matrix2 hold constant operator matrices for exact
    sub-flows. diffusion_op marks which operator is the diffusion (for
    eigenvalue estimation); full_rhs is an independently coded complete
    right-hand side used for consistency checks.
    """

    def __init__(self, label, y0, f1, f2, jac1=None, jac2=None,
                 bandwidth1=None, bandwidth2=None, matrix1=None, matrix2=None,
                 exact=None, diffusion_op=None, full_rhs=None):
        self.label = str(label)
        self.y0 = np.asarray(y0, dtype=float)
        if self.y0.ndim != 1 or self.y0.size < 1:
            raise InputError(f"problem {label}: y0 must be a nonempty vector")
        self.n = self.y0.size
        self.f1 = f1
        self.f2 = f2
        self.jac1 = jac1
        self.jac2 = jac2
        self.bandwidth1 = bandwidth1
        self.bandwidth2 = bandwidth2
        self.matrix1 = matrix1
        self.matrix2 = matrix2
        self.exact = exact
        if diffusion_op not in (None, 1, 2):
            raise InputError("diffusion_op must be 1, 2, or None")
        self.diffusion_op = diffusion_op
        self.full_rhs = full_rhs

    def swapped(self):
        """Same system with the operator roles exchanged (f1 <-> f2)."""
        p = SplitProblem(
            self.label + "[swapped]", self.y0, self.f2, self.f1,
            jac1=self.jac2, jac2=self.jac1,
            bandwidth1=self.bandwidth2, bandwidth2=self.bandwidth1,
            matrix1=self.matrix2, matrix2=self.matrix1,
            exact=self.exact,
            diffusion_op=None if self.diffusion_op is None else 3 - self.diffusion_op,
            full_rhs=self.full_rhs,
        )
        for extra in ("commutator_norm", "voltage_indices", "params"):
            if hasattr(self, extra):
                setattr(p, extra, getattr(self, extra))
        return p

    def __repr__(self):
        return f"SplitProblem({self.label!r}, n={self.n})"


class CountingProblem(SplitProblem):
    """Wrapper that counts f and Jacobian evaluations per operator."""

    def __init__(self, inner):
        self.counts = {"f1": 0, "f2": 0, "jac1": 0, "jac2": 0}

        def count(name, fn):
            if fn is None:
                return None

            def wrapped(t, y):
                self.counts[name] += 1
                return fn(t, y)

            return wrapped

        super().__init__(
            inner.label, inner.y0,
            count("f1", inner.f1), count("f2", inner.f2),
            jac1=count("jac1", inner.jac1), jac2=count("jac2", inner.jac2),
            bandwidth1=inner.bandwidth1, bandwidth2=inner.bandwidth2,
            matrix1=inner.matrix1, matrix2=inner.matrix2,
            exact=inner.exact, diffusion_op=inner.diffusion_op,
            full_rhs=inner.full_rhs,
        )
        for extra in ("commutator_norm", "voltage_indices", "params"):
            if hasattr(inner, extra):
                setattr(self, extra, getattr(inner, extra))


def with_counting(problem):
    """(counting problem, counts dict); counts update in place."""
    p = CountingProblem(problem)
    return p, p.counts


class MrmsReport:
    """Mixed root-mean-square error with denominator 1 + |reference|."""

    def __init__(self, value, sample_count, per_variable=None):
        self.value = float(value)
        self.sample_count = int(sample_count)
        self.per_variable = per_variable

    def __repr__(self):
        return f"MrmsReport(value={self.value:.6g}, M={self.sample_count})"


def mrms(X, X_ref):
    """sqrt(mean(((X - X_ref) / (1 + |X_ref|))^2)) over all samples.

    For 2D inputs (time samples by variables) the report also carries a
    per-variable breakdown over its columns.
    """
    X = np.asarray(X, dtype=float)
    R = np.asarray(X_ref, dtype=float)
    if X.shape != R.shape:
        raise InputError(f"shape mismatch {X.shape} vs {R.shape}")
    if X.size == 0:
        raise InputError("mrms needs at least one sample")
    if not np.all(np.isfinite(R)):
        raise InputError("mrms references must be finite")
    d = (X - R) / (1.0 + np.abs(R))
    if not np.all(np.isfinite(d)):
        per = None
        if X.ndim == 2:
            per = np.sqrt(np.mean(np.where(np.isfinite(d), d, np.inf) ** 2, axis=0))
        return MrmsReport(np.inf, X.size, per)
    per = np.sqrt(np.mean(d**2, axis=0)) if X.ndim == 2 else None
    return MrmsReport(np.sqrt(np.mean(d**2)), X.size, per)


def make_linear_pair(lam1, lam2):
    """Scalar test problem y' = lam1*y + lam2*y with exact solution."""
    lam1, lam2 = float(lam1), float(lam2)
    A1 = np.array([[lam1]])
    A2 = np.array([[lam2]])
    y0 = np.array([1.0])
    p = SplitProblem(
        f"linear-pair({lam1:g},{lam2:g})", y0,
        lambda t, y: lam1 * y,
        lambda t, y: lam2 * y,
        jac1=lambda t, y: A1,
        jac2=lambda t, y: A2,
        matrix1=A1, matrix2=A2,
        exact=lambda t: np.exp((lam1 + lam2) * t) * y0,
        diffusion_op=1,
        full_rhs=lambda t, y: (lam1 + lam2) * y,
    )
    p.commutator_norm = 0.0
    return p


def make_noncommuting(A1, A2, y0=None):
    """Linear system y' = A1*y + A2*y with exact expm solution; the
    commutator norm is reported on the problem."""
    A1 = np.asarray(A1, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    if A1.ndim != 2 or A1.shape[0] != A1.shape[1] or A1.shape != A2.shape:
        raise InputError("make_noncommuting needs square same-shape matrices")
    n = A1.shape[0]
    y0 = np.ones(n) if y0 is None else np.asarray(y0, dtype=float)
    A = A1 + A2
    p = SplitProblem(
        f"noncommuting(n={n})", y0,
        lambda t, y: A1 @ y,
        lambda t, y: A2 @ y,
        jac1=lambda t, y: A1,
        jac2=lambda t, y: A2,
        matrix1=A1, matrix2=A2,
        exact=lambda t: expm(A * t) @ y0,
        diffusion_op=1,
        full_rhs=lambda t, y: A @ y,
    )
    p.commutator_norm = float(np.linalg.norm(A1 @ A2 - A2 @ A1))
    return p


DEFAULT_FHN_PARAMS = {"a": 0.13, "b": 0.5, "d": 1.0, "eps": 1e-3, "wc": 0.1}
DENSE_MATRIX_LIMIT = 1200


def _neumann_lap1d(m):
    """Sparse 1D Laplacian stencil with ghost-point reflection (un-scaled)."""
    main = np.full(m, -2.0)
    off = np.ones(m - 1)
    L = diags([off, main, off], [-1, 0, 1], format="lil")
    L[0, 1] = 2.0
    L[m - 1, m - 2] = 2.0
    return L.tocsr()


def _banded_from_sparse(J, bw, n):
    ab = np.zeros((2 * bw + 1, n))
    Jc = J.tocoo()
    for r, c, v in zip(Jc.row, Jc.col, Jc.data):
        ab[bw + r - c, c] = v
    return ab


def make_rd_fhn(nx, dx, diffusion_coeff, ny=None, fhn_params=None, stimulus_spec=None):
    """1D or 2D FitzHugh-Nagumo reaction-diffusion problem.

    State interleaves (v, w) per grid node; operator 1 is diffusion of v
    only, operator 2 is the pointwise membrane model

        dv/dt = (v (v - a) (1 - v) - wc * w) / eps + I_stim(t, x)
        dw/dt = b (v - d * w)

    with I_stim a square pulse of the given amplitude on a node index
    set during a half-open time window [t_on, t_off). eps sets the
    reaction stiffness (most negative reaction eigenvalue is about
    (a - 1) / eps at v = 1).
    """
    nx = int(nx)
    if nx < 3 or (ny is not None and int(ny) < 3):
        raise InputError(f"grid needs at least 3 points per axis, got nx={nx} ny={ny}")
    dx = float(dx)
    if dx <= 0.0:
        raise InputError(f"dx must be positive, got {dx}")
    D = float(diffusion_coeff)
    if D < 0.0:
        raise InputError(f"diffusion_coeff must be >= 0, got {D}")
    params = dict(DEFAULT_FHN_PARAMS)
    params.update(fhn_params or {})
    a, b, d, eps, wc = (params[k] for k in ("a", "b", "d", "eps", "wc"))
    if eps <= 0.0:
        raise InputError("eps must be positive")

    n_nodes = nx if ny is None else nx * int(ny)
    n = 2 * n_nodes
    coef = D / dx**2
    if ny is None:
        Lv = _neumann_lap1d(nx) * coef
        bw1 = 2
    else:
        ny = int(ny)
        Lx = _neumann_lap1d(nx)
        Ly = _neumann_lap1d(ny)
        # node index = ix*ny + iy
        Lv = (sp_kron(Lx, sp_eye(ny)) + sp_kron(sp_eye(nx), Ly)) * coef
        bw1 = 2 * ny
    # interleave: J1[2i, 2j] = Lv[i, j]
    Lc = Lv.tocoo()
    J1s = diags([0.0], [0], shape=(n, n), format="coo")
    J1s = J1s.tolil()
    for r, c, v in zip(Lc.row, Lc.col, Lc.data):
        J1s[2 * r, 2 * c] = v
    J1s = J1s.tocsr()
    ab1 = _banded_from_sparse(J1s, bw1, n)
    matrix1 = J1s.toarray() if n <= DENSE_MATRIX_LIMIT else None

    stim_idx = None
    stim_on = stim_off = 0.0
    stim_amp = 0.0
    if stimulus_spec:
        stim_idx = np.asarray(stimulus_spec["indices"], dtype=int)
        if stim_idx.size and (stim_idx.min() < 0 or stim_idx.max() >= n_nodes):
            raise InputError("stimulus indices out of range")
        stim_on, stim_off = (float(v) for v in stimulus_spec["window"])
        stim_amp = float(stimulus_spec["amp"])

    def f1(t, y):
        out = np.zeros_like(y)
        out[0::2] = Lv @ y[0::2]
        return out

    def jac1(t, y):
        return ab1

    def f2(t, y):
        v = y[0::2]
        w = y[1::2]
        out = np.empty_like(y)
        dv = (v * (v - a) * (1.0 - v) - wc * w) / eps
        if stim_idx is not None and stim_on <= t < stim_off:
            dv = dv.copy()
            dv[stim_idx] += stim_amp
        out[0::2] = dv
        out[1::2] = b * (v - d * w)
        return out

    def jac2(t, y):
        v = y[0::2]
        ab = np.zeros((3, n))
        ab[1, 0::2] = (-3.0 * v**2 + 2.0 * (1.0 + a) * v - a) / eps
        ab[1, 1::2] = -b * d
        ab[0, 1::2] = -wc / eps
        ab[2, 0::2] = b
        return ab

    def full_rhs(t, y):
        # independent re-statement of the complete right-hand side
        v = y[0::2]
        w = y[1::2]
        out = np.empty_like(y)
        dv = Lv @ v + (v * (v - a) * (1.0 - v) - wc * w) / eps
        if stim_idx is not None and stim_on <= t < stim_off:
            dv = dv.copy()
            dv[stim_idx] += stim_amp
        out[0::2] = dv
        out[1::2] = b * (v - d * w)
        return out

    shape = f"{nx}" if ny is None else f"{nx}x{ny}"
    stim_tag = ""
    if stim_idx is not None:
        stim_tag = f",stim[{stim_idx.size}]@{stim_amp:g}/{stim_on:g}-{stim_off:g}"
    label = (
        f"fhn{'1d' if ny is None else '2d'}(n={shape},dx={dx:g},D={D:g},"
        f"a={a:g},b={b:g},d={d:g},eps={eps:g},wc={wc:g}{stim_tag})"
    )
    p = SplitProblem(
        label, np.zeros(n), f1, f2,
        jac1=jac1, jac2=jac2,
        bandwidth1=bw1, bandwidth2=1,
        matrix1=matrix1,
        diffusion_op=1,
        full_rhs=full_rhs,
    )
    p.voltage_indices = np.arange(0, n, 2)
    p.params = params
    return p


def estimate_extreme_eigenvalues(p, trajectory_sample, rng_seed=0, max_iters=5000):
    """(lambda_D, lambda_R): most negative diffusion and reaction
    eigenvalues.

    lambda_D comes from shifted power iteration on the (linear)
    diffusion operator; lambda_R scans pointwise reaction Jacobians
    along the sampled states, solving the 2x2 blocks in closed form
    when the reaction Jacobian is tridiagonal-banded.
    """
    d_op = p.diffusion_op if p.diffusion_op is not None else 1
    r_op = 3 - d_op
    fD = getattr(p, f"f{d_op}")
    rng = np.random.default_rng(rng_seed)
    v = rng.standard_normal(p.n)
    v /= np.linalg.norm(v)

    def matvec(u):
        return np.asarray(fD(0.0, u), dtype=float)

    if np.linalg.norm(matvec(v)) < 1e-13:
        lam_d = 0.0
    else:
        for _ in range(10):
            w = matvec(v)
            v = w / np.linalg.norm(w)
        lam = float(v @ matvec(v))
        sigma = 0.1 * abs(lam)
        for _ in range(max_iters):
            w = matvec(v) - sigma * v
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
            lam_new = float(v @ matvec(v))
            if abs(lam_new - lam) <= 1e-12 + 1e-10 * abs(lam_new):
                lam = lam_new
                break
            lam = lam_new
        resid = float(np.linalg.norm(matvec(v) - lam * v))
        if resid > 1e-3 * max(1.0, abs(lam)):
            raise EstimationError(
                f"power iteration residual {resid:.3e} too large for "
                f"lambda_D = {lam:.6g}",
                residual=resid,
            )
        lam_d = lam

    states = getattr(trajectory_sample, "states", trajectory_sample)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] > 64:
        states = states[:: states.shape[0] // 64 + 1]
    jacR = getattr(p, f"jac{r_op}")
    if jacR is None:
        raise InputError("reaction Jacobian unavailable for eigenvalue estimate")
    bwR = getattr(p, f"bandwidth{r_op}")
    lam_r = np.inf
    for y in states:
        J = np.asarray(jacR(0.0, y), dtype=float)
        if bwR == 1 and p.n % 2 == 0:
            # 2x2 blocks [[p, q], [r, s]] per node, closed-form eigenvalues
            pp = J[1, 0::2]
            ss = J[1, 1::2]
            qq = J[0, 1::2]
            rr = J[2, 0::2]
            tr = pp + ss
            disc = (pp - ss) ** 2 + 4.0 * qq * rr
            lam_min = np.where(disc >= 0.0, 0.5 * (tr - np.sqrt(np.maximum(disc, 0.0))), 0.5 * tr)
            lam_r = min(lam_r, float(lam_min.min()))
        else:
            eigs = np.linalg.eigvals(J)
            lam_r = min(lam_r, float(eigs.real.min()))
    return lam_d, lam_r


def floor_sig(x, sig=2):
    """Round a positive number down to sig significant figures."""
    x = float(x)
    if x <= 0.0 or not np.isfinite(x):
        raise InputError(f"floor_sig needs a positive finite value, got {x}")
    e = int(np.floor(np.log10(x)))
    mant = x / 10.0**e
    if mant < 1.0:
        e -= 1
        mant = x / 10.0**e
    elif mant >= 10.0:
        e += 1
        mant = x / 10.0**e
    mi = int(np.floor(mant * 10.0 ** (sig - 1) * (1.0 + 1e-12)))
    # decimal round-trip keeps the result on the canonical float grid
    return float(f"{mi}e{e - sig + 1}")


def benchmark_sample_times(t0, tf, count=21):
    """Uniform space-time sampling instants used by the MRMS protocol."""
    return np.linspace(float(t0), float(tf), int(count))


def largest_stable_dt(problem, method, plan, dt_bounds, error_threshold,
                      t0, tf, sample_times, reference, component=None, substeps=1):
    """Largest step size, to two significant figures, whose integration
    stays finite and keeps the sampled MRMS at or below the threshold.

    dt_bounds must bracket the threshold: the lower bound must pass. A
    passing upper bound is returned as-is (nothing to bracket).
    """
    lo, hi = (float(v) for v in dt_bounds)
    if not 0.0 < lo < hi:
        raise InputError(f"need 0 < lo < hi in dt_bounds, got {dt_bounds}")
    sample_times = np.asarray(sample_times, dtype=float)
    reference = np.asarray(reference, dtype=float)

    def passes(dt):
        try:
            traj = integrate(problem, method, plan, t0, tf, dt,
                             substeps=substeps, checkpoints=sample_times)
        except (InstabilityError, StepFailureError):
            return False
        X = traj.at_times(sample_times)
        if component is not None:
            rep = mrms(X[:, component], reference[:, component])
        else:
            rep = mrms(X, reference)
        return rep.value <= error_threshold

    if not passes(lo):
        raise BracketError(
            f"predicate already fails at the lower bound dt = {lo:g}"
        )
    if passes(hi):
        return hi
    for _ in range(80):
        if floor_sig(lo) == floor_sig(hi) or hi / lo <= 1.0 + 1e-3:
            break
        mid = float(np.sqrt(lo * hi))
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return floor_sig(lo)


def _reference_cache_path(cache_dir, key_text):
    digest = hashlib.sha256(key_text.encode("utf-8")).hexdigest()[:24]
    return os.path.join(cache_dir, f"ref_{digest}.npz")


def reference_solution(problem, t0, tf, sample_times, tol=5e-4, method=None,
                       plan=None, dt_start=None, max_halvings=14,
                       component=None, cache_dir=None):
    """Fine-step reference states at the sample times.

    Integrates with a robust method (Strang by default, implicit
    diffusion / explicit reaction), halving the step until consecutive
    sampled solutions agree to tol in the mixed |diff|/(1+|ref|) sense.
    Returns (states, dt_used). cache_dir enables reuse across runs keyed
    by the full configuration.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    if method is None:
        method = get_method("strang")
    if plan is None:
        d_op = problem.diffusion_op if problem.diffusion_op is not None else 1
        plan = SubIntegratorPlan({d_op: sdirk23, 3 - d_op: rk3})
    if dt_start is None:
        dt_start = (tf - t0) / 2000.0
    key = "|".join([
        problem.label, f"{t0:.12g}", f"{tf:.12g}",
        ",".join(f"{s:.12g}" for s in sample_times),
        f"{tol:g}", method.name, plan.describe(), f"{dt_start:.12g}",
        "all" if component is None else "comp",
    ])
    cache_path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        cache_path = _reference_cache_path(cache_dir, key)
        if os.path.exists(cache_path):
            blob = np.load(cache_path)
            return blob["states"], float(blob["dt"])
    prev = None
    dt = float(dt_start)
    diff = np.inf
    for _ in range(max_halvings):
        try:
            traj = integrate(problem, method, plan, t0, tf, dt,
                             checkpoints=sample_times)
        except (InstabilityError, StepFailureError):
            prev = None
            dt *= 0.5
            continue
        X = traj.at_times(sample_times)
        if prev is not None:
            Xc = X if component is None else X[:, component]
            Pc = prev if component is None else prev[:, component]
            diff = float(np.max(np.abs(Xc - Pc) / (1.0 + np.abs(Pc))))
            if diff <= tol:
                if cache_path:
                    np.savez(cache_path, states=X, dt=dt)
                return X, dt
        prev = X
        dt *= 0.5
    raise SearchFailureError(
        f"reference did not converge below {tol:g} after {max_halvings} "
        f"halvings (last diff {diff:.3e})",
        best_residual=diff,
    )


def read_problem_config(path):
    """Build a problem from a line-oriented config file.

    Keys: problem (fhn1d or fhn2d), nx, ny, dx, diff, eps, a, b, d, wc,
    stim_indices (lo:hi range or comma list), stim_window t_on t_off,
    stim_amp. Unknown keys are rejected.
    """
    kind = None
    nx, ny = 201, None
    dx, diff = 0.05, 0.001
    fhn = {}
    stim_indices = None
    stim_window = None
    stim_amp = None
    for lineno, tokens in iter_config_lines(path):
        key = tokens[0].lower()
        args = tokens[1:]
        try:
            if key == "problem":
                kind = args[0].lower()
            elif key == "nx":
                nx = int(args[0])
            elif key == "ny":
                ny = int(args[0])
            elif key == "dx":
                dx = float(args[0])
            elif key == "diff":
                diff = float(args[0])
            elif key in ("eps", "a", "b", "d", "wc"):
                fhn[key] = float(args[0])
            elif key == "stim_indices":
                text = "".join(args)
                if ":" in text:
                    lo, hi = text.split(":")
                    stim_indices = np.arange(int(lo), int(hi))
                else:
                    stim_indices = np.array(
                        [int(tok) for tok in text.split(",") if tok], dtype=int
                    )
            elif key == "stim_window":
                stim_window = (float(args[0]), float(args[1]))
            elif key == "stim_amp":
                stim_amp = float(args[0])
            else:
                raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        except (IndexError, ValueError) as exc:
            raise InputError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    if kind not in ("fhn1d", "fhn2d"):
        raise InputError(f"{path}: 'problem' must be fhn1d or fhn2d, got {kind!r}")
    if kind == "fhn1d":
        ny = None
    elif ny is None:
        raise InputError(f"{path}: fhn2d needs an ny line")
    stimulus = None
    if stim_indices is not None or stim_amp is not None or stim_window is not None:
        if stim_indices is None or stim_amp is None or stim_window is None:
            raise InputError(
                f"{path}: stimulus needs all of stim_indices, stim_window, stim_amp"
            )
        stimulus = {"indices": stim_indices, "window": stim_window, "amp": stim_amp}
    return make_rd_fhn(nx, dx, diff, ny=ny, fhn_params=fhn, stimulus_spec=stimulus)


def default_fhn_benchmark():
    """The stock 1D benchmark: 201 nodes, corner stimulus, T = 8."""
    problem = make_rd_fhn(
        201, 0.05, 0.001,
        stimulus_spec={"indices": np.arange(10), "window": (0.0, 0.1), "amp": 8.0},
    )
    return problem, 0.0, 8.0, benchmark_sample_times(0.0, 8.0, 21)
