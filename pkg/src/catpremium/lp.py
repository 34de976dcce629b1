"""Dense linear programming with bounded variables.

Solves problems of the form

    minimize    c @ x
    subject to  A @ x <= b
                lower <= x <= upper     (entries may be -inf / +inf)

with a two-phase revised simplex.  Every problem in this package is
small (tens of rows and columns), so the basis system is re-solved from
scratch each iteration instead of maintaining a factorization.  That
keeps the code short and makes results bit-for-bit reproducible.

Pivoting is Dantzig's rule with lowest-index tie-breaking; if the
objective stops improving for a window of iterations the solver switches
to Bland's rule, which cannot cycle.  Problems are equilibrated with
power-of-two row/column scaling before solving, so the scaling itself
introduces no rounding error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# Sentinel used for infinite bounds in the text dump format.  In memory
# bounds are genuine numpy infinities.
BOUND_INF = 1e30

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_STALLED = "stalled"

_PIVOT_TOL = 1e-9
_RATIO_TIE_TOL = 1e-10
_STALL_WINDOW = 60

# nonbasic / basic status codes
_AT_LOWER = 0
_AT_UPPER = 1
_FREE = 2
_BASIC = 3


class LpError(ValueError):
    """Raised for malformed problem data."""


@dataclass
class LinearProgram:
    """An LP in `min c@x  s.t.  A@x <= b,  lower <= x <= upper` form."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    var_names: list[str] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        n = self.c.size
        if self.A.size == 0:
            self.A = self.A.reshape(0, n)
        m = self.A.shape[0]
        if self.A.shape[1] != n:
            raise LpError(f"A has {self.A.shape[1]} columns, expected {n}")
        if self.b.size != m:
            raise LpError(f"b has {self.b.size} entries, expected {m}")
        if self.lower is None:
            self.lower = np.full(n, -np.inf)
        else:
            self.lower = np.asarray(self.lower, dtype=float).ravel()
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        else:
            self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise LpError("bound arrays must match the number of variables")
        if not np.all(np.isfinite(self.c)):
            raise LpError("objective coefficients must be finite")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise LpError("constraint data must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise LpError("bounds may be infinite but not NaN")
        if np.any(self.lower > self.upper):
            bad = int(np.argmax(self.lower > self.upper))
            raise LpError(f"variable {bad} has lower bound above upper bound")
        if not self.var_names:
            self.var_names = [f"x{j}" for j in range(n)]
        if not self.row_names:
            self.row_names = [f"r{i}" for i in range(m)]
        if len(self.var_names) != n or len(self.row_names) != m:
            raise LpError("name lists must match problem dimensions")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    duals: np.ndarray | None
    iterations: int
    message: str = ""


@dataclass
class CertificateReport:
    """Optimality evidence for an (lp, solution) pair."""

    primal_residual: float
    dual_residual: float
    comp_slackness: float
    duality_gap: float
    scale: float
    passed: bool


def _pow2_scale(values: np.ndarray) -> np.ndarray:
    """Per-entry power-of-two factors that bring magnitudes near 1."""
    out = np.ones_like(values)
    pos = values > 0
    out[pos] = np.exp2(-np.round(np.log2(values[pos])))
    return out


class _Simplex:
    """Bounded-variable two-phase simplex working on equality form.

    The problem is extended with one slack per row: [A I][x; s] = b with
    s >= 0.  Phase 1 appends artificial columns only for rows whose
    slack would start negative.
    """

    def __init__(self, lp: LinearProgram, tol_feas: float, max_iter: int):
        m, n = lp.n_rows, lp.n_vars
        self.m = m
        self.n = n
        self.tol_feas = tol_feas
        self.max_iter = max_iter
        # power-of-two equilibration (exact in floating point)
        absA = np.abs(lp.A)
        row_max = absA.max(axis=1) if n else np.zeros(m)
        self.row_scale = _pow2_scale(row_max)
        scaled = lp.A * self.row_scale[:, None]
        col_max = np.abs(scaled).max(axis=0) if m else np.zeros(n)
        self.col_scale = _pow2_scale(np.maximum(col_max, np.abs(lp.c)))
        scaled = scaled * self.col_scale[None, :]

        self.W = np.hstack([scaled, np.eye(m)])
        self.cost2 = np.concatenate([lp.c * self.col_scale, np.zeros(m)])
        self.b = lp.b * self.row_scale
        # x' = x / col_scale, so bounds divide by the same factor
        self.lo = np.concatenate([lp.lower / self.col_scale, np.zeros(m)])
        self.hi = np.concatenate([lp.upper / self.col_scale, np.full(m, np.inf)])
        self.n_art = 0
        self.iterations = 0

        self.status = np.full(n + m, _AT_LOWER, dtype=np.int8)
        for j in range(n):
            if np.isfinite(self.lo[j]):
                self.status[j] = _AT_LOWER
            elif np.isfinite(self.hi[j]):
                self.status[j] = _AT_UPPER
            else:
                self.status[j] = _FREE
        self.basis = list(range(n, n + m))
        self.status[n:] = _BASIC

    # -- helpers -------------------------------------------------------

    def _nonbasic_values(self) -> np.ndarray:
        vals = np.zeros(self.W.shape[1])
        at_lo = self.status == _AT_LOWER
        at_hi = self.status == _AT_UPPER
        vals[at_lo] = self.lo[at_lo]
        vals[at_hi] = self.hi[at_hi]
        return vals

    def _basic_values(self, vals: np.ndarray, B: np.ndarray) -> np.ndarray:
        nb = self.status != _BASIC
        rhs = self.b - self.W[:, nb] @ vals[nb]
        return np.linalg.solve(B, rhs)

    def current_values(self) -> np.ndarray:
        vals = self._nonbasic_values()
        B = self.W[:, self.basis]
        vals[self.basis] = self._basic_values(vals, B)
        return vals

    # -- core loop -----------------------------------------------------

    def run(self, cost: np.ndarray) -> str:
        """Minimize `cost` from the current basis.  Returns a status."""
        use_bland = False
        stall = 0
        best_obj = np.inf
        while self.iterations < self.max_iter:
            self.iterations += 1
            B = self.W[:, self.basis]
            try:
                vals = self._nonbasic_values()
                xB = self._basic_values(vals, B)
                y = np.linalg.solve(B.T, cost[self.basis])
            except np.linalg.LinAlgError:
                return STATUS_STALLED
            vals[self.basis] = xB

            reduced = cost - y @ self.W
            nb = np.flatnonzero(self.status != _BASIC)
            d = reduced[nb]
            st = self.status[nb]
            can_up = ((st == _AT_LOWER) | (st == _FREE)) & (d < -_PIVOT_TOL)
            can_dn = ((st == _AT_UPPER) | (st == _FREE)) & (d > _PIVOT_TOL)
            eligible = can_up | can_dn
            if not eligible.any():
                return STATUS_OPTIMAL

            if use_bland:
                pick = np.flatnonzero(eligible)[0]
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                pick = int(np.argmax(score))
            q = int(nb[pick])
            direction = 1.0 if can_up[pick] else -1.0

            w = np.linalg.solve(B, self.W[:, q])
            # ratio test: how far can the entering variable move
            t_best = np.inf
            leaving = -1
            leave_to = _AT_LOWER
            span = self.hi[q] - self.lo[q]
            if np.isfinite(span):
                t_best = span
            for i, bi in enumerate(self.basis):
                step = direction * w[i]
                if step > _PIVOT_TOL:
                    room = xB[i] - self.lo[bi]
                elif step < -_PIVOT_TOL:
                    room = self.hi[bi] - xB[i]
                else:
                    continue
                if not np.isfinite(room):
                    continue
                t = max(room, 0.0) / abs(step)
                better = t < t_best - _RATIO_TIE_TOL
                tied = abs(t - t_best) <= _RATIO_TIE_TOL
                if better or (tied and (leaving < 0 or bi < self.basis[leaving])):
                    t_best = t
                    leaving = i
                    leave_to = _AT_LOWER if step > 0 else _AT_UPPER
            if not np.isfinite(t_best):
                return STATUS_UNBOUNDED

            if leaving < 0:
                # entering variable runs to its opposite bound
                self.status[q] = _AT_UPPER if direction > 0 else _AT_LOWER
            else:
                out = self.basis[leaving]
                self.status[out] = leave_to
                self.basis[leaving] = q
                self.status[q] = _BASIC

            obj = float(cost[self.basis] @ self._basic_values(
                self._nonbasic_values(), self.W[:, self.basis]))
            obj += float(cost @ self._nonbasic_values())
            if obj < best_obj - 1e-12 * max(1.0, abs(best_obj)):
                best_obj = obj
                stall = 0
            else:
                stall += 1
                if stall > _STALL_WINDOW and not use_bland:
                    use_bland = True
                    logger.debug("simplex switching to Bland's rule")
        return STATUS_STALLED

    # -- phases --------------------------------------------------------

    def phase1(self) -> str:
        vals = self._nonbasic_values()
        resid = self.b - self.W[:, : self.n] @ vals[: self.n]
        bad = np.flatnonzero(resid < -self.tol_feas)
        if bad.size == 0:
            return STATUS_OPTIMAL
        art = np.zeros((self.m, bad.size))
        for k, i in enumerate(bad):
            art[i, k] = -1.0
        self.W = np.hstack([self.W, art])
        self.lo = np.concatenate([self.lo, np.zeros(bad.size)])
        self.hi = np.concatenate([self.hi, np.full(bad.size, np.inf)])
        self.status = np.concatenate(
            [self.status, np.full(bad.size, _BASIC, dtype=np.int8)])
        self.n_art = bad.size
        base = self.n + self.m
        for k, i in enumerate(bad):
            out = self.basis[i]
            self.status[out] = _AT_LOWER
            self.basis[i] = base + k

        cost1 = np.zeros(self.W.shape[1])
        cost1[base:] = 1.0
        status = self.run(cost1)
        if status != STATUS_OPTIMAL:
            return status
        vals = self.current_values()
        if float(vals[base:].sum()) > max(self.tol_feas, 1e-9):
            return STATUS_INFEASIBLE
        self._evict_artificials(base)
        # lock artificial columns at zero for phase 2
        self.hi[base:] = 0.0
        return STATUS_OPTIMAL

    def _evict_artificials(self, base: int) -> None:
        for i in range(self.m):
            if self.basis[i] < base:
                continue
            B = self.W[:, self.basis]
            e = np.zeros(self.m)
            e[i] = 1.0
            row = np.linalg.solve(B.T, e) @ self.W[:, :base]
            candidates = np.flatnonzero(
                (np.abs(row) > _PIVOT_TOL) & (self.status[:base] != _BASIC))
            if candidates.size == 0:
                continue  # redundant row; artificial stays basic at zero
            q = int(candidates[0])
            out = self.basis[i]
            self.status[out] = _AT_LOWER
            self.basis[i] = q
            self.status[q] = _BASIC

    def solve(self) -> tuple[str, np.ndarray, np.ndarray]:
        status = self.phase1()
        if status != STATUS_OPTIMAL:
            return status, np.zeros(self.n), np.zeros(self.m)
        cost = np.concatenate([self.cost2, np.zeros(self.n_art)])
        status = self.run(cost)
        vals = self.current_values()
        B = self.W[:, self.basis]
        y = np.linalg.solve(B.T, cost[self.basis])
        x = vals[: self.n] * self.col_scale
        duals = -y * self.row_scale
        return status, x, duals


def solve_lp(lp: LinearProgram, tol_feas: float = 1e-7,
             tol_gap: float = 1e-6, max_iter: int = 10000) -> LpSolution:
    """Solve an LP, returning primal values and row duals.

    The duals are reported for the `A@x <= b` rows with the sign
    convention that they are nonnegative at an optimum.  Identical
    inputs always produce identical outputs: pivoting is deterministic
    and no randomized or time-dependent state is involved.
    """
    n, m = lp.n_vars, lp.n_rows
    if m == 0:
        # pure bound minimization
        x = np.zeros(n)
        for j in range(n):
            if lp.c[j] > 0:
                if not np.isfinite(lp.lower[j]):
                    return LpSolution(STATUS_UNBOUNDED, None, None, None, 0)
                x[j] = lp.lower[j]
            elif lp.c[j] < 0:
                if not np.isfinite(lp.upper[j]):
                    return LpSolution(STATUS_UNBOUNDED, None, None, None, 0)
                x[j] = lp.upper[j]
            else:
                if np.isfinite(lp.lower[j]):
                    x[j] = lp.lower[j]
                elif np.isfinite(lp.upper[j]):
                    x[j] = min(lp.upper[j], 0.0)
        return LpSolution(STATUS_OPTIMAL, x, float(lp.c @ x), np.zeros(0), 0)

    engine = _Simplex(lp, tol_feas, max_iter)
    status, x, duals = engine.solve()
    if status != STATUS_OPTIMAL:
        msg = {
            STATUS_INFEASIBLE: "no point satisfies all constraints",
            STATUS_UNBOUNDED: "objective decreases without bound",
            STATUS_STALLED: f"no progress within {max_iter} iterations",
        }.get(status, "")
        return LpSolution(status, None, None, None, engine.iterations, msg)
    return LpSolution(STATUS_OPTIMAL, x, float(lp.c @ x), duals,
                      engine.iterations)


def check_certificate(lp: LinearProgram, sol: LpSolution,
                      tol_feas: float = 1e-7,
                      tol_gap: float = 1e-6) -> CertificateReport:
    """Verify primal/dual feasibility, complementary slackness and gap.

    Residuals are compared against tolerances scaled by the magnitude
    of the problem data, so dollar-sized and unit-sized problems are
    judged evenly.  Requires an `optimal` solution.
    """
    if sol.status != STATUS_OPTIMAL or sol.x is None or sol.duals is None:
        raise LpError("certificate checks require an optimal solution")
    x = np.asarray(sol.x, dtype=float)
    lam = np.asarray(sol.duals, dtype=float)
    scale = max(1.0, float(np.abs(lp.b).max(initial=0.0)),
                float(np.abs(lp.c @ x)))

    slack = lp.b - lp.A @ x
    primal = max(0.0, float(np.max(-slack, initial=0.0)))
    lo_viol = np.where(np.isfinite(lp.lower), lp.lower - x, -np.inf)
    hi_viol = np.where(np.isfinite(lp.upper), x - lp.upper, -np.inf)
    primal = max(primal, float(np.max(lo_viol, initial=0.0)),
                 float(np.max(hi_viol, initial=0.0)))

    dual = max(0.0, float(np.max(-lam, initial=0.0)))
    comp = float(np.max(np.abs(lam * slack), initial=0.0))

    # dual objective: -lam@b + sum_j min(d_j * lower_j, d_j * upper_j)
    d = lp.c + lp.A.T @ lam
    # reduced costs within rounding noise of zero contribute nothing
    d_scale = 1.0 + np.abs(lp.c) + np.abs(lp.A).T @ np.abs(lam)
    contrib = 0.0
    dual_ok = True
    for j in range(lp.n_vars):
        if abs(d[j]) <= tol_feas * d_scale[j]:
            continue
        lo_term = d[j] * lp.lower[j] if np.isfinite(lp.lower[j]) else (
            np.inf if d[j] >= 0 else -np.inf)
        hi_term = d[j] * lp.upper[j] if np.isfinite(lp.upper[j]) else (
            -np.inf if d[j] < 0 else np.inf)
        term = min(lo_term, hi_term)
        if not np.isfinite(term):
            dual_ok = False
            break
        contrib += term
    gap = np.inf if not dual_ok else float(lp.c @ x + lam @ lp.b - contrib)

    passed = (primal <= tol_feas * scale and dual <= tol_feas * scale
              and comp <= tol_feas * scale and abs(gap) <= tol_gap * scale)
    return CertificateReport(primal, dual, comp, gap, scale, passed)


def _fmt_bound(v: float) -> str:
    if np.isposinf(v):
        return repr(BOUND_INF)
    if np.isneginf(v):
        return repr(-BOUND_INF)
    return repr(float(v))


def dump_lp(lp: LinearProgram, path) -> None:
    """Write an LP to a plain-text file.

    Format (whitespace separated, one record per line)::

        lp
        vars <n>
        <name> <lower> <upper> <cost>      (n lines)
        rows <m>
        <name> <rhs> <a_1> ... <a_n>       (m lines)
        end

    Infinite bounds are written as +/-1e30.
    """
    lines = ["lp", f"vars {lp.n_vars}"]
    for j in range(lp.n_vars):
        lines.append(" ".join([lp.var_names[j], _fmt_bound(lp.lower[j]),
                               _fmt_bound(lp.upper[j]), repr(float(lp.c[j]))]))
    lines.append(f"rows {lp.n_rows}")
    for i in range(lp.n_rows):
        coeffs = " ".join(repr(float(v)) for v in lp.A[i])
        lines.append(" ".join(filter(None, [lp.row_names[i],
                                            repr(float(lp.b[i])), coeffs])))
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_lp(path) -> LinearProgram:
    """Read an LP written by :func:`dump_lp`."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "lp" or lines[-1] != "end":
        raise LpError(f"{path}: not an LP dump")
    idx = 1
    tag, n_s = lines[idx].split()
    if tag != "vars":
        raise LpError(f"{path}: expected 'vars', saw {tag!r}")
    n = int(n_s)
    idx += 1
    names, lo, hi, c = [], [], [], []
    for j in range(n):
        parts = lines[idx + j].split()
        if len(parts) != 4:
            raise LpError(f"{path}: malformed variable line {idx + j + 1}")
        names.append(parts[0])
        lo.append(float(parts[1]))
        hi.append(float(parts[2]))
        c.append(float(parts[3]))
    idx += n
    tag, m_s = lines[idx].split()
    if tag != "rows":
        raise LpError(f"{path}: expected 'rows', saw {tag!r}")
    m = int(m_s)
    idx += 1
    row_names, b, A = [], [], []
    for i in range(m):
        parts = lines[idx + i].split()
        if len(parts) != 2 + n:
            raise LpError(f"{path}: malformed row line {idx + i + 1}")
        row_names.append(parts[0])
        b.append(float(parts[1]))
        A.append([float(v) for v in parts[2:]])
    lo = np.array(lo)
    hi = np.array(hi)
    lo[lo <= -BOUND_INF] = -np.inf
    hi[hi >= BOUND_INF] = np.inf
    return LinearProgram(np.array(c), np.array(A).reshape(m, n), np.array(b),
                         lo, hi, names, row_names)
