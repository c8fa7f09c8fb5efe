"""Dense complex linear algebra, a small semidefinite engine, and ball ascent.

This module is the numeric substrate for everything else: operator norms,
Kronecker products, nearest-PSD projection, a dense semidefinite solver with
a small affine-matrix modelling layer (Hermitian blocks are realified and the
cone program is handed to CVXOPT's dense interior-point solver), and a seeded
multistart projected-gradient ascent over norm balls.

Desk-scale caps: the SDP engine accepts a total complex PSD dimension of 400
(realified 800) and refuses larger problems.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    ConstructionError,
    DimensionError,
    NumericalFailure,
    SizeError,
)

_PSD_TOTAL_CAP = 400  # complex dimension, summed over blocks
_VAR_CAP = 20000

_solver_lock = threading.Lock()


# ---------------------------------------------------------------------------
# dense complex linear algebra
# ---------------------------------------------------------------------------

def as_complex_matrix(a) -> np.ndarray:
    """Coerce to a 2-d complex ndarray, rejecting empty shapes."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise DimensionError(f"expected a nonempty matrix, got shape {m.shape}")
    return m


def adjoint(a) -> np.ndarray:
    """Conjugate transpose."""
    return as_complex_matrix(a).conj().T


def op_norm(a) -> float:
    """Operator (spectral) norm: the largest singular value."""
    m = as_complex_matrix(a)
    return float(np.linalg.norm(m, 2))


def kron(a, b) -> np.ndarray:
    """Kronecker product; multiplicative for the operator norm."""
    return np.kron(as_complex_matrix(a), as_complex_matrix(b))


def hermitian_part(a) -> np.ndarray:
    m = as_complex_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("hermitian part needs a square matrix")
    return 0.5 * (m + m.conj().T)


def min_eig(a) -> float:
    """Smallest eigenvalue of the Hermitian part of ``a``."""
    return float(np.linalg.eigvalsh(hermitian_part(a))[0])


@dataclass(frozen=True)
class PsdProjection:
    matrix: np.ndarray
    distance: float


def psd_project(a) -> PsdProjection:
    """Nearest PSD matrix in operator norm, with the achieved distance.

    Extracts the Hermitian part and clips negative eigenvalues at zero.  For
    a Hermitian input this attains the operator-norm distance to the PSD
    cone, which equals ``max(0, -lambda_min)``.
    """
    m = as_complex_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("psd_project needs a square matrix")
    h = hermitian_part(m)
    w, v = np.linalg.eigh(h)
    clipped = (v * np.clip(w, 0.0, None)) @ v.conj().T
    clipped = 0.5 * (clipped + clipped.conj().T)
    return PsdProjection(matrix=clipped, distance=op_norm(m - clipped))


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed d x d unitary (QR of a Ginibre matrix)."""
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


# ---------------------------------------------------------------------------
# affine-matrix modelling layer for the SDP engine
# ---------------------------------------------------------------------------

class AffineMatrix:
    """A matrix-valued affine function of real decision variables.

    Stored as ``const + sum_i coef[i] * x[idx[i]]`` with complex coefficient
    slices.  Supports the algebra needed to assemble semidefinite programs:
    sums, scalar multiples, adjoints, conjugates, block stacking, sub-blocks
    and partial traces.
    """

    __slots__ = ("shape", "idx", "coef", "const")

    def __init__(self, shape, idx, coef, const):
        self.shape = tuple(shape)
        self.idx = np.asarray(idx, dtype=int)
        self.coef = np.asarray(coef, dtype=complex)
        self.const = np.asarray(const, dtype=complex)
        if self.coef.shape != (len(self.idx),) + self.shape:
            raise ConstructionError("coefficient tensor shape mismatch")
        if self.const.shape != self.shape:
            raise ConstructionError("constant shape mismatch")

    # -- constructors -------------------------------------------------
    @staticmethod
    def constant(mat) -> "AffineMatrix":
        m = np.asarray(mat, dtype=complex)
        return AffineMatrix(m.shape, np.empty(0, dtype=int),
                            np.empty((0,) + m.shape, dtype=complex), m)

    # -- algebra ------------------------------------------------------
    def _binop(self, other, sign):
        if not isinstance(other, AffineMatrix):
            other = AffineMatrix.constant(other)
        if other.shape != self.shape:
            raise DimensionError("affine matrix shape mismatch")
        idx = np.concatenate([self.idx, other.idx])
        coef = np.concatenate([self.coef, sign * other.coef]) if len(idx) else self.coef
        return AffineMatrix(self.shape, idx, coef, self.const + sign * other.const)._dedup()

    def _dedup(self):
        if len(self.idx) == 0:
            return self
        uniq, inv = np.unique(self.idx, return_inverse=True)
        coef = np.zeros((len(uniq),) + self.shape, dtype=complex)
        np.add.at(coef, inv, self.coef)
        return AffineMatrix(self.shape, uniq, coef, self.const)

    def __add__(self, other):
        return self._binop(other, +1.0)

    def __sub__(self, other):
        return self._binop(other, -1.0)

    def __neg__(self):
        return AffineMatrix(self.shape, self.idx, -self.coef, -self.const)

    def scale(self, c) -> "AffineMatrix":
        return AffineMatrix(self.shape, self.idx, c * self.coef, c * self.const)

    @property
    def H(self) -> "AffineMatrix":
        return AffineMatrix((self.shape[1], self.shape[0]), self.idx,
                            np.conj(np.swapaxes(self.coef, 1, 2)),
                            self.const.conj().T)

    def conj(self) -> "AffineMatrix":
        return AffineMatrix(self.shape, self.idx, self.coef.conj(), self.const.conj())

    def subblock(self, r0, r1, c0, c1) -> "AffineMatrix":
        return AffineMatrix((r1 - r0, c1 - c0), self.idx,
                            self.coef[:, r0:r1, c0:c1], self.const[r0:r1, c0:c1])

    def ptrace_first(self, da: int, db: int) -> "AffineMatrix":
        """Partial trace over the first tensor factor of an (da*db) square matrix."""
        if self.shape != (da * db, da * db):
            raise DimensionError("ptrace_first shape mismatch")
        coef = self.coef.reshape(len(self.idx), da, db, da, db)
        const = self.const.reshape(da, db, da, db)
        return AffineMatrix((db, db), self.idx,
                            np.trace(coef, axis1=1, axis2=3),
                            np.trace(const, axis1=0, axis2=2))

    def times_matrix(self, mat) -> "AffineMatrix":
        """Multiply a scalar (1x1) affine expression into a constant matrix."""
        if self.shape != (1, 1):
            raise DimensionError("times_matrix needs a scalar expression")
        m = np.asarray(mat, dtype=complex)
        coef = self.coef[:, 0, 0][:, None, None] * m[None, :, :]
        return AffineMatrix(m.shape, self.idx, coef, self.const[0, 0] * m)

    def kron_right(self, mat) -> "AffineMatrix":
        """Kronecker product with a constant matrix on the right."""
        m = np.asarray(mat, dtype=complex)
        shape = (self.shape[0] * m.shape[0], self.shape[1] * m.shape[1])
        if len(self.idx):
            coef = np.stack([np.kron(c, m) for c in self.coef])
        else:
            coef = np.empty((0,) + shape, dtype=complex)
        return AffineMatrix(shape, self.idx, coef, np.kron(self.const, m))

    def hs_inner(self, mat) -> "AffineMatrix":
        """Hilbert-Schmidt pairing <mat, self> = sum conj(mat) * self, as a 1x1 expression."""
        m = np.asarray(mat, dtype=complex).conj()
        if m.shape != self.shape:
            raise DimensionError("hs_inner shape mismatch")
        coef = np.einsum("rc,krc->k", m, self.coef).reshape(-1, 1, 1) \
            if len(self.idx) else np.empty((0, 1, 1), dtype=complex)
        const = np.einsum("rc,rc->", m, self.const).reshape(1, 1)
        return AffineMatrix((1, 1), self.idx, coef, const)

    @staticmethod
    def block(rows) -> "AffineMatrix":
        """Assemble a block matrix from a 2-d grid of affine matrices."""
        grid = [[x if isinstance(x, AffineMatrix) else AffineMatrix.constant(x)
                 for x in row] for row in rows]
        row_h = [row[0].shape[0] for row in grid]
        col_w = [x.shape[1] for x in grid[0]]
        R, C = sum(row_h), sum(col_w)
        idx = np.unique(np.concatenate([x.idx for row in grid for x in row] or
                                       [np.empty(0, dtype=int)]))
        pos = {v: i for i, v in enumerate(idx)}
        coef = np.zeros((len(idx), R, C), dtype=complex)
        const = np.zeros((R, C), dtype=complex)
        r = 0
        for i, row in enumerate(grid):
            c = 0
            for j, x in enumerate(row):
                if x.shape != (row_h[i], col_w[j]):
                    raise DimensionError("ragged block structure")
                const[r:r + row_h[i], c:c + col_w[j]] = x.const
                for k, v in enumerate(x.idx):
                    coef[pos[v], r:r + row_h[i], c:c + col_w[j]] += x.coef[k]
                c += col_w[j]
            r += row_h[i]
        return AffineMatrix((R, C), idx, coef, const)


class SdpModel:
    """Variable pool and constraint collector producing an :class:`SdpProblem`."""

    def __init__(self):
        self.n_vars = 0
        self._psd: list[AffineMatrix] = []
        self._eq: list[AffineMatrix] = []
        self._objective: AffineMatrix | None = None

    # -- variables ----------------------------------------------------
    def _new(self, k: int) -> np.ndarray:
        if self.n_vars + k > _VAR_CAP:
            raise SizeError(f"variable count would exceed cap {_VAR_CAP}")
        idx = np.arange(self.n_vars, self.n_vars + k)
        self.n_vars += k
        return idx

    def scalar(self) -> AffineMatrix:
        i = self._new(1)
        return AffineMatrix((1, 1), i, np.ones((1, 1, 1), dtype=complex),
                            np.zeros((1, 1), dtype=complex))

    def hermitian(self, d: int) -> AffineMatrix:
        """A d x d Hermitian matrix variable (d^2 real parameters)."""
        idx = self._new(d * d)
        coef = np.zeros((d * d, d, d), dtype=complex)
        k = 0
        for i in range(d):
            coef[k, i, i] = 1.0
            k += 1
        for i in range(d):
            for j in range(i + 1, d):
                coef[k, i, j] = 1.0
                coef[k, j, i] = 1.0
                k += 1
                coef[k, i, j] = 1.0j
                coef[k, j, i] = -1.0j
                k += 1
        return AffineMatrix((d, d), idx, coef, np.zeros((d, d), dtype=complex))

    def complex_matrix(self, r: int, c: int) -> AffineMatrix:
        """An unconstrained r x c complex matrix variable (2rc real parameters)."""
        idx = self._new(2 * r * c)
        coef = np.zeros((2 * r * c, r, c), dtype=complex)
        k = 0
        for i in range(r):
            for j in range(c):
                coef[k, i, j] = 1.0
                k += 1
                coef[k, i, j] = 1.0j
                k += 1
        return AffineMatrix((r, c), idx, coef, np.zeros((r, c), dtype=complex))

    # -- constraints ----------------------------------------------------
    def add_psd(self, expr: AffineMatrix):
        if expr.shape[0] != expr.shape[1]:
            raise ConstructionError("PSD block must be square")
        herm_defect = max(
            (float(np.abs(expr.coef - np.conj(np.swapaxes(expr.coef, 1, 2))).max())
             if len(expr.idx) else 0.0),
            float(np.abs(expr.const - expr.const.conj().T).max()),
        )
        scale = max(1.0, float(np.abs(expr.const).max()),
                    float(np.abs(expr.coef).max()) if len(expr.idx) else 0.0)
        if herm_defect > 1e-10 * scale:
            raise ConstructionError("PSD block is not Hermitian-affine")
        self._psd.append(expr)

    def add_eq_zero(self, expr: AffineMatrix):
        self._eq.append(expr)

    def minimize(self, expr: AffineMatrix):
        if expr.shape != (1, 1):
            raise ConstructionError("objective must be scalar")
        if abs(expr.const[0, 0].imag) > 1e-12 or (len(expr.idx) and
                                                  np.abs(expr.coef.imag).max() > 1e-12):
            raise ConstructionError("objective must be real")
        self._objective = expr

    def build(self) -> "SdpProblem":
        return SdpProblem(self.n_vars, self._objective, list(self._psd), list(self._eq))

    def solve(self, **kw) -> "SdpResult":
        return sdp_solve(self.build(), **kw)


def _realify(m: np.ndarray) -> np.ndarray:
    """Standard real embedding: Hermitian PSD iff the embedding is PSD."""
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


@dataclass
class SdpProblem:
    """Dense semidefinite program over a real decision vector.

    PSD blocks are affine maps from the decision vector to Hermitian
    matrices; equality constraints are affine; the objective is linear.
    Affinity holds by construction (blocks are stored as constant plus
    per-variable coefficient slices).
    """

    n_vars: int
    objective: AffineMatrix | None
    psd_blocks: list
    eq_blocks: list

    def __post_init__(self):
        total = sum(b.shape[0] for b in self.psd_blocks)
        if total > _PSD_TOTAL_CAP:
            raise SizeError(
                f"total PSD dimension {total} exceeds desk-scale cap {_PSD_TOTAL_CAP}")


@dataclass
class SdpResult:
    status: str                 # optimal | infeasible | numerical-failure
    value: float | None
    x: np.ndarray | None
    gap: float | None
    dual_ray: np.ndarray | None = None
    message: str = ""

    def evaluate(self, expr: AffineMatrix) -> np.ndarray:
        """Value of an affine expression at the optimal point."""
        if self.x is None:
            raise NumericalFailure("no primal point available", detail=self)
        out = expr.const.copy()
        for k, v in enumerate(expr.idx):
            out += expr.coef[k] * self.x[v]
        return out


def sdp_solve(problem: SdpProblem, feastol: float = 1e-8) -> SdpResult:
    """Solve a dense SDP with CVXOPT's interior-point cone solver.

    Hermitian blocks are realified via the standard real embedding.  On
    ``optimal`` the relative duality gap is at most 1e-7.  Primal
    infeasibility is reported with the dual ray as a certificate.
    """
    from cvxopt import matrix as cvxmat
    from cvxopt import solvers

    n = problem.n_vars
    if n == 0:
        raise ConstructionError("SDP has no decision variables")

    c = np.zeros(n)
    if problem.objective is not None:
        for k, v in enumerate(problem.objective.idx):
            c[v] = problem.objective.coef[k, 0, 0].real

    G_parts, h_parts, sdims = [], [], []
    for blk in problem.psd_blocks:
        d = blk.shape[0]
        rd = 2 * d
        sdims.append(rd)
        Gb = np.zeros((rd * rd, n))
        for k, v in enumerate(blk.idx):
            Gb[:, v] -= _realify(blk.coef[k]).reshape(rd * rd, order="F")
        G_parts.append(Gb)
        h_parts.append(_realify(blk.const).reshape(rd * rd, order="F"))
    G = np.vstack(G_parts)
    h = np.concatenate(h_parts)

    # equality rows, rank-reduced so CVXOPT sees a full-row-rank system
    rows, rhs = [], []
    for eq in problem.eq_blocks:
        r, ccols = eq.shape
        flatc = eq.coef.reshape(len(eq.idx), r * ccols) if len(eq.idx) else None
        flat0 = eq.const.reshape(r * ccols)
        for part in (np.real, np.imag):
            block = np.zeros((r * ccols, n))
            if flatc is not None:
                block[:, eq.idx] = part(flatc).T
            rows.append(block)
            rhs.append(-part(flat0))
    A = np.vstack(rows) if rows else np.zeros((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    if A.shape[0]:
        scale = max(1.0, np.abs(A).max(), np.abs(b).max())
        q, r, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > 1e-12 * max(1.0, diag[0] if len(diag) else 0.0)))
        keep = piv[:rank]
        # consistency of the dropped rows
        aug = np.concatenate([A, b[:, None]], axis=1)
        if np.linalg.matrix_rank(aug, tol=1e-9 * scale) > rank:
            return SdpResult(status="infeasible", value=None, x=None, gap=None,
                             message="inconsistent equality constraints")
        A, b = A[keep], b[keep]

    dims = {"l": 0, "q": [], "s": sdims}
    options = {"show_progress": False, "abstol": 1e-9, "reltol": 1e-8,
               "feastol": feastol, "maxiters": 200}
    with _solver_lock:
        try:
            sol = solvers.conelp(
                cvxmat(c), cvxmat(G), cvxmat(h), dims,
                cvxmat(A) if A.shape[0] else None,
                cvxmat(b) if A.shape[0] else None,
                options=options)
        except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
            return SdpResult(status="numerical-failure", value=None, x=None,
                             gap=None, message=f"solver error: {exc}")

    status = sol["status"]
    x = np.array(sol["x"]).ravel() if sol["x"] is not None else None
    gap = sol.get("relative gap")
    if status == "optimal":
        return SdpResult(status="optimal", value=float(np.dot(c, x)), x=x,
                         gap=float(gap) if gap is not None else None)
    if status == "primal infeasible":
        ray = np.array(sol["z"]).ravel() if sol["z"] is not None else None
        return SdpResult(status="infeasible", value=None, x=x, gap=None,
                         dual_ray=ray, message="primal infeasible certificate")
    if status == "unknown" and x is not None and gap is not None and gap < 1e-6:
        return SdpResult(status="optimal", value=float(np.dot(c, x)), x=x,
                         gap=float(gap), message="accepted at relaxed gap")
    return SdpResult(status="numerical-failure", value=None, x=x, gap=None,
                     message=f"solver status: {status}")


def spectral_epigraph(model: SdpModel, expr: AffineMatrix, t: AffineMatrix):
    """Add the constraint ||expr|| <= t via the standard 2x2 epigraph block."""
    r, c = expr.shape
    model.add_psd(AffineMatrix.block([
        [t.times_matrix(np.eye(r)), expr],
        [expr.H, t.times_matrix(np.eye(c))],
    ]))


# ---------------------------------------------------------------------------
# ball-constrained multistart ascent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AscentConfig:
    """Configuration for the projected-ascent optimizer.

    The same seed and configuration always reproduce bit-identical output.
    """

    seed: int
    multistarts: int = 8
    max_iters: int = 60
    tol: float = 1e-7
    step0: float = 0.5
    fd_step: float = 1e-6
    armijo: float = 1e-4

    def __post_init__(self):
        if self.multistarts < 1:
            raise ConstructionError("multistart count must be >= 1")
        if self.tol <= 0:
            raise ConstructionError("tolerance must be positive")


class FrobeniusBall:
    """Ball slot measured in the flat 2-norm of the coefficient array."""

    def __init__(self, shape):
        self.shape = tuple(shape)

    def norm(self, arr: np.ndarray) -> float:
        return float(np.linalg.norm(arr.ravel()))


class _LevelBall:
    """Ball slot for the unit ball of M_n(X), via the space's norm oracle."""

    def __init__(self, space, level: int):
        self.space = space
        self.level = level
        self.shape = (level, level, space.dim)

    def norm(self, arr: np.ndarray) -> float:
        return float(self.space.level_norm(self.level, arr))


@dataclass
class AscentResult:
    value: float
    points: list
    start_index: int
    n_iters: int
    n_evals: int
    converged: bool
    norms: list

    @property
    def point(self):
        return self.points[0]


def _project(slots, points, margin=1e-12):
    out = []
    for slot, p in zip(slots, points):
        nrm = slot.norm(p)
        out.append(p / (nrm * (1.0 + margin)) if nrm > 1.0 else p)
    return out


def _fd_gradient(objective, slots, points, h, counter):
    grads = []
    for si, p in enumerate(points):
        g = np.zeros_like(p, dtype=complex)
        flat = p.ravel()
        gflat = g.ravel()
        for k in range(flat.size):
            for part, mul in ((1.0, 1.0), (1.0j, 1.0j)):
                orig = flat[k]
                flat[k] = orig + h * part
                fp = objective(points)
                flat[k] = orig - h * part
                fm = objective(points)
                flat[k] = orig
                counter[0] += 2
                gflat[k] += mul * (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def multi_ball_ascent(objective, slots, cfg: AscentConfig, grad=None,
                      warm_starts=()) -> AscentResult:
    """Maximize ``objective`` over a product of unit balls.

    ``slots`` is a list of ball descriptors exposing ``shape`` and
    ``norm(array)``; feasible points are kept by radial scaling (valid by
    positive homogeneity of the norms).  The returned value is the objective
    at a feasible point, hence a certified lower bound for the supremum.
    Multistarts are merged deterministically by (value, start index).
    """
    rng = np.random.default_rng(cfg.seed)
    starts = []
    for ws in warm_starts:
        starts.append([np.array(p, dtype=complex).reshape(s.shape)
                       for p, s in zip(ws, slots)])
    starts.append([np.zeros(s.shape, dtype=complex) for s in slots])
    while len(starts) < len(warm_starts) + 1 + cfg.multistarts:
        pt = [(rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape))
              for s in slots]
        starts.append(pt)

    best = None
    evals = [0]

    def f(pts):
        evals[0] += 1
        return float(objective(pts))

    for s_idx, raw in enumerate(starts):
        pts = _project(slots, raw)
        val = f(pts)
        iters = 0
        converged = False
        for iters in range(1, cfg.max_iters + 1):
            g = grad(pts) if grad is not None else _fd_gradient(
                objective, slots, pts, cfg.fd_step, evals)
            gnorm = float(np.sqrt(sum(np.vdot(x, x).real for x in g)))
            if gnorm < cfg.tol:
                converged = True
                break
            d = [x / gnorm for x in g]
            t = cfg.step0
            improved = False
            while t > 1e-12:
                cand = _project(slots, [p + t * dd for p, dd in zip(pts, d)])
                cval = f(cand)
                if cval >= val + cfg.armijo * t * gnorm:
                    gain = cval - val
                    pts, val = cand, cval
                    improved = gain > 1e-11 * max(1.0, abs(val))
                    break
                t *= 0.5
            if not improved:
                converged = True
                break
        # enforce strict feasibility of the reported point
        for _ in range(3):
            norms = [slot.norm(p) for slot, p in zip(slots, pts)]
            if all(nr <= 1.0 + 1e-9 for nr in norms):
                break
            pts = [p / max(1.0, nr * (1.0 + 1e-10)) for p, nr in zip(pts, norms)]
        val = f(pts)
        cand = (val, -s_idx, pts, iters, converged,
                [slot.norm(p) for slot, p in zip(slots, pts)])
        if best is None or (cand[0], cand[1]) > (best[0], best[1]):
            best = cand

    val, negidx, pts, iters, converged, norms = best
    return AscentResult(value=val, points=pts, start_index=-negidx,
                        n_iters=iters, n_evals=evals[0], converged=converged,
                        norms=norms)


def ball_ascent(objective, space, level: int, cfg: AscentConfig, grad=None,
                warm_starts=()) -> AscentResult:
    """Maximize a function over the unit ball of M_level(space).

    ``objective`` receives the coefficient array of shape
    (level, level, space.dim).  See :func:`multi_ball_ascent` for the
    guarantees; the returned value never exceeds the true supremum and the
    returned point is feasible within 1e-9.
    """
    slot = _LevelBall(space, level)
    wrapped = lambda pts: objective(pts[0])
    g = None
    if grad is not None:
        g = lambda pts: [grad(pts[0])]
    ws = [[w] for w in warm_starts]
    res = multi_ball_ascent(wrapped, [slot], cfg, grad=g, warm_starts=ws)
    return res
