"""Concrete and quotient matrix-normed spaces with element-level norms.

A space is presented as a linear span of matrices inside a block-diagonal
ambient ``⊕_i M_{d_i}``.  Norms at level n are operator norms of realized
``nD x nD`` matrices; quotient norms are computed by semidefinite
programming over coset representatives and memoized.  On top of the norms
sit the abstract (norm-only) tests: Ruan-axiom sampling, the positivity and
adjoint characterizations of operator systems, Blecher's unitary criterion,
and lower bounds for MIN_q norms.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .errors import (
    ConstructionError,
    ConvergenceError,
    DimensionError,
    DomainError,
    LevelError,
)
from .numkernel import AffineMatrix, AscentConfig, SdpModel

_GRAM_COND_CAP = 1e10


def _block_offsets(blocks):
    offs, o = [], 0
    for d in blocks:
        if d < 1:
            raise ConstructionError("ambient block dimensions must be positive")
        offs.append(o)
        o += d
    return offs, o


class ConcreteSpace:
    """A span of matrices in a block-diagonal ambient, with matrix norms.

    Optionally unital (one basis element realizes as the ambient identity)
    and self-adjoint-closed (the adjoint of every basis element stays in the
    span).  An optional level cap marks the space as a reduct that only
    exposes norms at levels <= cap.
    """

    def __init__(self, ambient_blocks, basis, unit_index=None,
                 selfadjoint=False, level_cap=None, name=None):
        self.ambient_blocks = tuple(int(b) for b in ambient_blocks)
        self._offsets, self.ambient_dim = _block_offsets(self.ambient_blocks)
        B = np.asarray(basis, dtype=complex)
        if B.ndim != 3 or B.shape[0] == 0:
            raise ConstructionError("basis must be a nonempty list of matrices")
        if B.shape[1] != self.ambient_dim or B.shape[2] != self.ambient_dim:
            raise ConstructionError("basis matrices do not match the ambient")
        mask = np.zeros((self.ambient_dim, self.ambient_dim), dtype=bool)
        for off, d in zip(self._offsets, self.ambient_blocks):
            mask[off:off + d, off:off + d] = True
        if np.any(np.abs(B[:, ~mask]) > 0):
            raise ConstructionError("basis has support outside the ambient blocks")
        self.basis = B
        self.dim = B.shape[0]
        self.level_cap = None if level_cap is None else int(level_cap)
        if self.level_cap is not None and self.level_cap < 1:
            raise ConstructionError("level cap must be >= 1")
        self.name = name

        flat = B.reshape(self.dim, -1)
        self._gram = flat.conj() @ flat.T
        w = np.linalg.eigvalsh(self._gram)
        if w[0] <= 0 or w[-1] / w[0] > _GRAM_COND_CAP:
            raise ConstructionError(
                "basis is numerically dependent (Gram condition too large)")
        self._gram_inv = np.linalg.inv(self._gram)

        self.unit_index = unit_index
        if unit_index is not None:
            if not (0 <= unit_index < self.dim):
                raise ConstructionError("unit index out of range")
            if nk.op_norm(B[unit_index] - np.eye(self.ambient_dim)) > 1e-9:
                raise ConstructionError(
                    "designated unit does not realize as the ambient identity")

        self.selfadjoint = bool(selfadjoint)
        self._adj = None
        if self.selfadjoint:
            adj = np.conj(np.swapaxes(B, 1, 2))
            coeffs, resid = self._represent(adj.reshape(self.dim, -1))
            if resid > 1e-9:
                raise ConstructionError(
                    f"span is not closed under adjoints (residual {resid:.2e})")
            self._adj = coeffs.T  # adjoint(basis_b) = sum_a _adj[a,b] basis_a
        self._norm_lock = threading.Lock()

    # -- representation helpers ----------------------------------------
    def _represent(self, flat_rows):
        """Least-squares coordinates of flattened ambient matrices."""
        flatB = self.basis.reshape(self.dim, -1)
        rhs = flat_rows @ flatB.conj().T
        coeffs = rhs @ self._gram_inv.T
        recon = coeffs @ flatB
        resid = float(np.abs(recon - flat_rows).max()) if flat_rows.size else 0.0
        return coeffs, resid

    def coeffs_of(self, mat, level=1):
        """Coordinates of an ambient level-``level`` matrix, with residual."""
        D = self.ambient_dim
        m = nk.as_complex_matrix(mat)
        if m.shape != (level * D, level * D):
            raise DimensionError("matrix does not match the requested level")
        blocks = m.reshape(level, D, level, D).transpose(0, 2, 1, 3)
        coeffs, resid = self._represent(blocks.reshape(level * level, -1))
        return coeffs.reshape(level, level, self.dim), resid

    def realize(self, level, coeffs):
        c = np.asarray(coeffs, dtype=complex).reshape(level, level, self.dim)
        out = np.einsum("ijb,bkl->ikjl", c, self.basis)
        D = self.ambient_dim
        return out.reshape(level * D, level * D)

    def level_norm(self, level, coeffs) -> float:
        if self.level_cap is not None and level > self.level_cap:
            raise LevelError(
                f"level {level} above the cap {self.level_cap} of this space")
        return nk.op_norm(self.realize(level, coeffs))

    # -- elements -------------------------------------------------------
    def element(self, level, coeffs) -> "LevelElement":
        return LevelElement(self, level, coeffs)

    def basis_element(self, b) -> "LevelElement":
        c = np.zeros((1, 1, self.dim), dtype=complex)
        c[0, 0, b] = 1.0
        return LevelElement(self, 1, c)

    @property
    def unit_coeffs(self):
        if self.unit_index is None:
            return None
        c = np.zeros(self.dim, dtype=complex)
        c[self.unit_index] = 1.0
        return c

    def unit_element(self, level=1) -> "LevelElement":
        u = self.unit_coeffs
        if u is None:
            raise DomainError("space has no designated unit")
        c = np.zeros((level, level, self.dim), dtype=complex)
        for i in range(level):
            c[i, i] = u
        return LevelElement(self, level, c)

    def adjoint_coeffs(self, level, coeffs):
        if self._adj is None:
            raise DomainError("space is not self-adjoint-closed")
        c = np.asarray(coeffs, dtype=complex).reshape(level, level, self.dim)
        return np.einsum("ab,jib->jia", self._adj, c.conj()).transpose(1, 0, 2)

    def norm_gradient_pack(self, level):
        """(objective, gradient) closures for ``c -> ||realize(c)||``.

        The gradient follows the top singular pair: for a linear realizer
        the derivative in each complex coordinate is the conjugated pairing
        of the singular vectors through that coordinate's direction matrix.
        """
        B = self.basis
        D = self.ambient_dim

        def objective(c):
            return nk.op_norm(self.realize(level, c))

        def gradient(c):
            m = self.realize(level, c)
            u, s, vh = np.linalg.svd(m)
            ub = u[:, 0].reshape(level, D)
            vb = vh[0, :].conj().reshape(level, D)
            w = np.einsum("id,bde,je->ijb", ub.conj(), B, vb)
            return np.conj(w)

        return objective, gradient

    def __repr__(self):
        tag = self.name or "ConcreteSpace"
        return (f"<{tag} dim={self.dim} ambient={list(self.ambient_blocks)}"
                f"{' unital' if self.unit_index is not None else ''}>")


class QuotientSpace:
    """Quotient of a space by a null subspace, with SDP coset norms.

    Nested quotients are flattened onto a single concrete base space; the
    norm of a coset at level n is the infimum of parent norms over
    representatives, computed via the spectral-norm epigraph and memoized by
    element hash.
    """

    def __init__(self, parent, null_coeffs, level_cap=None):
        N = np.asarray(null_coeffs, dtype=complex)
        if N.ndim != 2 or N.shape[0] == 0:
            raise ConstructionError("null subspace needs at least one vector")
        if isinstance(parent, QuotientSpace):
            if N.shape[1] != parent.dim:
                raise ConstructionError("null vectors do not match the parent")
            base = parent.base
            lifted = N @ parent._lift.T
            allnull = np.vstack([parent._null, lifted])
        else:
            base = parent
            if N.shape[1] != base.dim:
                raise ConstructionError("null vectors do not match the parent")
            allnull = N
        self.parent = parent
        self.base = base
        u, s, vh = np.linalg.svd(allnull, full_matrices=True)
        rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
        if rank == 0:
            raise ConstructionError("null subspace is numerically zero")
        if rank >= base.dim:
            raise ConstructionError("quotient would be zero-dimensional")
        self._null = vh[:rank]            # orthonormal rows spanning the null space
        comp = vh[rank:]
        self.dim = base.dim - rank
        self._lift = comp.T.copy()        # quotient coords -> base coords
        self._proj = comp.conj().copy()   # base coords -> quotient coords
        self.level_cap = (parent.level_cap if level_cap is None else int(level_cap))
        self.ambient_blocks = base.ambient_blocks
        self.ambient_dim = base.ambient_dim
        self.selfadjoint = False
        self._adj = None
        if base.selfadjoint:
            # the involution descends when the null space is adjoint-closed
            nadj = np.einsum("ab,kb->ka", base._adj, self._null.conj())
            resid = nk.op_norm(nadj - (nadj @ self._null.conj().T) @ self._null)
            if resid <= 1e-9:
                self.selfadjoint = True
                full = self._proj @ base._adj @ np.conj(self._lift)
                self._adj = full
        self.unit_index = None
        self._unit_coeffs = None
        if base.unit_index is not None:
            un = base.unit_coeffs
            drop = self._null.conj() @ un
            if np.linalg.norm(drop) < 1 - 1e-9:
                self._unit_coeffs = self._proj @ un
        self._memo = {}
        self._norm_lock = threading.Lock()

    @property
    def unit_coeffs(self):
        return None if self._unit_coeffs is None else self._unit_coeffs.copy()

    def element(self, level, coeffs) -> "LevelElement":
        return LevelElement(self, level, coeffs)

    def unit_element(self, level=1) -> "LevelElement":
        if self._unit_coeffs is None:
            raise DomainError("quotient has no designated unit")
        c = np.zeros((level, level, self.dim), dtype=complex)
        for i in range(level):
            c[i, i] = self._unit_coeffs
        return LevelElement(self, level, c)

    def basis_element(self, b) -> "LevelElement":
        c = np.zeros((1, 1, self.dim), dtype=complex)
        c[0, 0, b] = 1.0
        return LevelElement(self, 1, c)

    def lift_coeffs(self, level, coeffs):
        c = np.asarray(coeffs, dtype=complex).reshape(level, level, self.dim)
        return np.einsum("dk,ijk->ijd", self._lift, c)

    def project_coeffs(self, level, base_coeffs):
        c = np.asarray(base_coeffs, dtype=complex).reshape(level, level, self.base.dim)
        return np.einsum("kd,ijd->ijk", self._proj, c)

    def realize_representative(self, level, coeffs):
        return self.base.realize(level, self.lift_coeffs(level, coeffs))

    def adjoint_coeffs(self, level, coeffs):
        if self._adj is None:
            raise DomainError("quotient involution is not available")
        c = np.asarray(coeffs, dtype=complex).reshape(level, level, self.dim)
        return np.einsum("ab,jib->jia", self._adj, c.conj()).transpose(1, 0, 2)

    def level_norm(self, level, coeffs) -> float:
        if self.level_cap is not None and level > self.level_cap:
            raise LevelError(
                f"level {level} above the cap {self.level_cap} of this space")
        c = np.asarray(coeffs, dtype=complex).reshape(level, level, self.dim)
        key = (level, c.tobytes())
        with self._norm_lock:
            hit = self._memo.get(key)
        if hit is not None:
            return hit
        val = self._coset_norm(level, c)
        with self._norm_lock:
            self._memo[key] = val
        return val

    def _coset_norm(self, level, c):
        rep = self.base.realize(level, np.einsum("dk,ijk->ijd", self._lift, c))
        nullmats = [self.base.realize(1, v.reshape(1, 1, -1)) for v in self._null]
        model = SdpModel()
        t = model.scalar()
        expr = AffineMatrix.constant(rep)
        for nm in nullmats:
            Z = model.complex_matrix(level, level)
            expr = expr + Z.kron_right(nm)
        nk.spectral_epigraph(model, expr, t)
        model.minimize(t)
        res = model.solve()
        if res.status != "optimal":
            raise nk.NumericalFailure(
                f"quotient norm SDP failed: {res.message}", detail=res)
        return max(0.0, float(res.value))

    def __repr__(self):
        return f"<QuotientSpace dim={self.dim} base={self.base!r}>"


class LevelElement:
    """An element of M_n(X): an n x n array of coefficient vectors."""

    def __init__(self, space, level, coeffs):
        self.space = space
        self.level = int(level)
        c = np.array(coeffs, dtype=complex)
        if c.shape != (self.level, self.level, space.dim):
            raise DimensionError(
                f"coefficients must have shape {(level, level, space.dim)}")
        self.coeffs = c

    def norm(self) -> float:
        return self.space.level_norm(self.level, self.coeffs)

    def realize(self) -> np.ndarray:
        if isinstance(self.space, QuotientSpace):
            return self.space.realize_representative(self.level, self.coeffs)
        return self.space.realize(self.level, self.coeffs)

    def pad(self, extra: int) -> "LevelElement":
        """Zero row/column padding to level ``level + extra``."""
        n2 = self.level + extra
        c = np.zeros((n2, n2, self.space.dim), dtype=complex)
        c[:self.level, :self.level] = self.coeffs
        return LevelElement(self.space, n2, c)

    def adjoint(self) -> "LevelElement":
        return LevelElement(self.space, self.level,
                            self.space.adjoint_coeffs(self.level, self.coeffs))

    def __add__(self, other):
        self._check(other)
        return LevelElement(self.space, self.level, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return LevelElement(self.space, self.level, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return LevelElement(self.space, self.level, self.coeffs * scalar)

    __rmul__ = __mul__

    def _check(self, other):
        if other.space is not self.space or other.level != self.level:
            raise DimensionError("elements live in different spaces or levels")

    def __repr__(self):
        return f"<LevelElement level={self.level} of {self.space!r}>"


def element_norm(x: LevelElement) -> float:
    """Norm of x in M_n(X); concrete spaces realize, quotients solve an SDP."""
    return x.norm()


# ---------------------------------------------------------------------------
# factories
# ---------------------------------------------------------------------------

def hermitian_basis(d: int) -> np.ndarray:
    """Hermitian basis of M_d: identity first, then generalized Gell-Mann."""
    out = [np.eye(d, dtype=complex)]
    for i in range(d):
        for j in range(i + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = m[j, i] = 1.0
            out.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = -1.0j
            m[j, i] = 1.0j
            out.append(m)
    for k in range(1, d):
        m = np.zeros((d, d), dtype=complex)
        m[:k, :k] = np.eye(k)
        m[k, k] = -k
        out.append(m * np.sqrt(2.0 / (k * (k + 1))))
    return np.stack(out)


def full_matrix_system(d: int, level_cap=None) -> ConcreteSpace:
    """The full matrix algebra M_d as an operator system (Hermitian basis)."""
    return ConcreteSpace([d], hermitian_basis(d), unit_index=0,
                         selfadjoint=True, level_cap=level_cap,
                         name=f"M{d}-system")


def full_matrix_space(d: int, level_cap=None) -> ConcreteSpace:
    """The full matrix algebra M_d as a plain operator space (unit basis)."""
    units = np.zeros((d * d, d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            units[i * d + j, i, j] = 1.0
    return ConcreteSpace([d], units, selfadjoint=True, level_cap=level_cap,
                         name=f"M{d}-space")


def prefix_subspace(space: ConcreteSpace, k: int, name=None) -> ConcreteSpace:
    """Span of the first k basis elements, inheriting flags when they survive."""
    if not (1 <= k <= space.dim):
        raise ConstructionError("prefix length out of range")
    unit = space.unit_index if (space.unit_index is not None and
                                space.unit_index < k) else None
    sub = space.basis[:k]
    adj = np.conj(np.swapaxes(sub, 1, 2))
    sa = False
    if space.selfadjoint:
        flat = sub.reshape(k, -1)
        g = flat.conj() @ flat.T
        rhs = adj.reshape(k, -1) @ flat.conj().T
        co = rhs @ np.linalg.inv(g).T
        sa = bool(np.abs(co @ flat - adj.reshape(k, -1)).max() <= 1e-9)
    return ConcreteSpace(space.ambient_blocks, sub, unit_index=unit,
                         selfadjoint=sa, level_cap=space.level_cap, name=name)


def direct_sum(a: ConcreteSpace, b: ConcreteSpace, level_cap=None) -> ConcreteSpace:
    """Block-diagonal (sup-norm) direct sum of two concrete spaces."""
    Da, Db = a.ambient_dim, b.ambient_dim
    basis = []
    for m in a.basis:
        big = np.zeros((Da + Db, Da + Db), dtype=complex)
        big[:Da, :Da] = m
        basis.append(big)
    for m in b.basis:
        big = np.zeros((Da + Db, Da + Db), dtype=complex)
        big[Da:, Da:] = m
        basis.append(big)
    return ConcreteSpace(a.ambient_blocks + b.ambient_blocks, np.stack(basis),
                         level_cap=level_cap)


# ---------------------------------------------------------------------------
# Ruan-axiom sampling
# ---------------------------------------------------------------------------

@dataclass
class RuanReport:
    trials: int
    max_violation: float
    worst: dict


def ruan_check(space, trials: int, seed: int, norm_fn=None,
               tol: float = 1e-8) -> RuanReport:
    """Sample both Ruan relations and report the largest violation.

    Relation one: zero row/column padding preserves the norm.  Relation two:
    ``||sum a_i.x_i.b_i|| <= ||sum a_i a_i*||^{1/2} max_i||x_i||
    ||sum b_i* b_i||^{1/2}``.  ``norm_fn(level, coeffs)`` may override the
    space's norm oracle (used to verify that corrupted norms are caught).
    """
    if norm_fn is None:
        norm_fn = space.level_norm
    rng = np.random.default_rng(seed)
    cap = space.level_cap
    qmax = min(3, cap) if cap is not None else 3
    worst = {"kind": None, "violation": 0.0, "trial": None}
    maxv = 0.0

    def rand_elem(q):
        c = (rng.standard_normal((q, q, space.dim)) +
             1j * rng.standard_normal((q, q, space.dim)))
        n = norm_fn(q, c)
        if n > 1e-12:
            c *= rng.uniform(0.2, 1.0) / n
        return c

    for t in range(trials):
        q = int(rng.integers(1, qmax + 1))
        pad_room = (cap - q) if cap is not None else (4 - q)
        if pad_room >= 1 and rng.uniform() < 0.5:
            k = int(rng.integers(1, pad_room + 1))
            x = rand_elem(q)
            padded = np.zeros((q + k, q + k, space.dim), dtype=complex)
            padded[:q, :q] = x
            v = abs(norm_fn(q + k, padded) - norm_fn(q, x))
            kind = "padding"
        else:
            nterms = 2
            alphas = [(rng.standard_normal((q, q)) + 1j * rng.standard_normal((q, q)))
                      / np.sqrt(q) for _ in range(nterms)]
            betas = [(rng.standard_normal((q, q)) + 1j * rng.standard_normal((q, q)))
                     / np.sqrt(q) for _ in range(nterms)]
            xs = [rand_elem(q) for _ in range(nterms)]
            lhs_c = np.zeros((q, q, space.dim), dtype=complex)
            for al, be, x in zip(alphas, betas, xs):
                lhs_c += np.einsum("ru,uvb,vs->rsb", al, x, be)
            lhs = norm_fn(q, lhs_c)
            ra = np.sqrt(nk.op_norm(sum(al @ al.conj().T for al in alphas)))
            rb = np.sqrt(nk.op_norm(sum(be.conj().T @ be for be in betas)))
            rx = max(norm_fn(q, x) for x in xs)
            v = max(0.0, lhs - ra * rx * rb)
            kind = "product"
        if v > maxv:
            maxv = v
            worst = {"kind": kind, "violation": v, "trial": t, "q": q}
    return RuanReport(trials=trials, max_violation=maxv, worst=worst)


# ---------------------------------------------------------------------------
# abstract positivity, adjoints, unitaries
# ---------------------------------------------------------------------------

@dataclass
class PositivityResult:
    positive: bool
    margin: float
    selfadjoint_residual: float


def is_positive_abstract(x: LevelElement, tol: float = 1e-8) -> PositivityResult:
    """Norm-only positivity test in a unital space.

    A self-adjoint contraction x is positive exactly when ``||1 - x|| <= 1``
    (unit shift of the spectrum); inputs are rescaled to the unit ball
    first, so the reported margin equals the least eigenvalue for concrete
    matrix systems.
    """
    space = x.space
    if getattr(space, "unit_coeffs", None) is None:
        raise DomainError("positivity needs a unital space")
    sa = (x - x.adjoint()).norm()
    if sa > 1e-8 * max(1.0, x.norm()):
        raise DomainError(f"element is not self-adjoint (residual {sa:.2e})")
    t = x.norm()
    xs = x * (1.0 / t) if t > 1.0 else x
    shifted = space.unit_element(x.level) - xs
    s = shifted.norm()
    return PositivityResult(positive=s <= 1.0 + tol, margin=1.0 - s,
                            selfadjoint_residual=sa)


def _adjoint_block_coeffs(x: LevelElement, y_coeffs, n_trunc: float):
    """Coefficients of [[n 1, x], [y, n 1]] in M_{2m}(X)."""
    space, m = x.space, x.level
    c = np.zeros((2 * m, 2 * m, space.dim), dtype=complex)
    u = space.unit_coeffs
    for i in range(2 * m):
        c[i, i] += n_trunc * u
    c[:m, m:] += x.coeffs
    c[m:, :m] += y_coeffs
    return c


def adjoint_via_minimization(x: LevelElement, n_trunc: int,
                             cfg: AscentConfig | None = None) -> LevelElement:
    """Recover the adjoint of x from the norm structure alone.

    Minimizes ``||[[n 1, x],[y, n 1]]||^2`` over y in the ball of radius
    ``||x||``; the cross terms cancel exactly when y = -x*, so the adjoint
    is the negation of the minimizer.  (The element produced is compared
    against the concrete conjugate transpose in the tests.)
    """
    space = x.space
    if getattr(space, "unit_coeffs", None) is None:
        raise DomainError("adjoint recovery needs a unital space")
    if cfg is None:
        cfg = AscentConfig(seed=0, multistarts=6, max_iters=80)
    r = x.norm()
    if r <= 1e-14:
        return LevelElement(space, x.level, np.zeros_like(x.coeffs))
    m = x.level

    def objective(z):
        blk = _adjoint_block_coeffs(x, r * z, float(n_trunc))
        return -space.level_norm(2 * m, blk) ** 2

    grad = None
    if isinstance(space, ConcreteSpace):
        B = space.basis
        D = space.ambient_dim

        def grad(z):
            blk = _adjoint_block_coeffs(x, r * z, float(n_trunc))
            mat = space.realize(2 * m, blk)
            u, s, vh = np.linalg.svd(mat)
            ub = u[:, 0].reshape(2 * m, D)
            vb = vh[0, :].conj().reshape(2 * m, D)
            w = np.einsum("id,bde,je->ijb", ub.conj(), B, vb)
            g_full = np.conj(w)  # gradient of sigma_max wrt block coeffs
            return -2.0 * s[0] * r * g_full[m:, :m]

    warm = [x.coeffs * (-1.0 / r), x.coeffs * (1.0 / r)]
    res = nk.ball_ascent(objective, space, m, cfg, grad=grad, warm_starts=warm)
    ymin = LevelElement(space, m, r * res.point)
    est = -1.0 * ymin
    if not res.converged:
        raise ConvergenceError("adjoint search did not converge", best=est)
    return est


@dataclass
class UnitaryResult:
    unitary: bool
    defect: float
    level_witness: int
    witness: np.ndarray | None


def is_unitary(u: LevelElement, n_max: int | None = None,
               cfg: AscentConfig | None = None, tol: float = 1e-4) -> UnitaryResult:
    """Blecher's norm characterization of unitaries, tested by ascent.

    An element u with ||u|| = 1 is unitary iff for all n and all x in
    Ball(M_n(X)), ``||[u_n  x]||^2 = ||[u_n ; x]||^2 = 1 + ||x||^2``.  The
    defect is the sup over sampled levels n <= n_max of the sum of the two
    identity violations, estimated by ball ascent.  Levels are truncated at
    twice the largest ambient block by default.
    """
    space = u.space
    if u.level != 1:
        raise DomainError("unitary test expects a level-1 element")
    nu = u.norm()
    if abs(nu - 1.0) > 1e-8:
        raise DomainError(f"||u|| = {nu:.9f} is not within 1e-8 of 1")
    if n_max is None:
        n_max = 2 * max(space.ambient_blocks)
    if space.level_cap is not None:
        n_max = min(n_max, space.level_cap // 2)
    if n_max < 1:
        raise LevelError("level cap leaves no room for the 2n-level brackets")
    if cfg is None:
        cfg = AscentConfig(seed=0, multistarts=5, max_iters=40)

    best = (0.0, 1, None)
    for n in range(1, n_max + 1):
        udiag = np.zeros((n, n, space.dim), dtype=complex)
        for i in range(n):
            udiag[i, i] = u.coeffs[0, 0]

        def objective(xc, n=n, udiag=udiag):
            row = np.zeros((2 * n, 2 * n, space.dim), dtype=complex)
            row[:n, :n] = udiag
            row[:n, n:] = xc
            col = np.zeros((2 * n, 2 * n, space.dim), dtype=complex)
            col[:n, :n] = udiag
            col[n:, :n] = xc
            nx2 = space.level_norm(n, xc) ** 2
            r2 = space.level_norm(2 * n, row) ** 2
            c2 = space.level_norm(2 * n, col) ** 2
            return abs(r2 - 1.0 - nx2) + abs(c2 - 1.0 - nx2)

        warm = []
        for b in range(space.dim):
            w = np.zeros((n, n, space.dim), dtype=complex)
            w[0, 0, b] = 1.0
            warm.append(w)
        res = nk.ball_ascent(objective, space, n, cfg, warm_starts=warm)
        if res.value > best[0]:
            best = (res.value, n, res.point)
    return UnitaryResult(unitary=best[0] <= tol, defect=best[0],
                         level_witness=best[1], witness=best[2])


# ---------------------------------------------------------------------------
# MIN_q norms
# ---------------------------------------------------------------------------

def _apply_images(images, coeffs, level):
    """Realize sum_b coeffs[:,:,b] (x) images[b] as a level x q block matrix."""
    q = images.shape[1]
    out = np.einsum("ijb,bkl->ikjl", coeffs, images)
    return out.reshape(level * q, level * q)


def min_q_norm(x: LevelElement, q: int, cfg: AscentConfig | None = None,
               extra_starts=()) -> float:
    """Certified lower bound for the norm of x in MIN_q(X).

    The MIN_q norm at level n is the sup of ``||phi^{(n)}(x)||`` over
    q-contractive maps phi: X -> M_q.  For n <= q the identity is a
    q-isometry and the space norm is returned exactly.  Above q the bound
    comes from ascent over map coefficients; during the search feasibility
    uses a cheap inner ascent estimate of ||phi||_q with a safety margin,
    and the winning candidate is then rescaled by its exact q-norm (maps
    into M_q have cb norm equal to the q-norm, computed by the extension
    SDP) so the reported value is evaluated at a genuinely q-contractive
    map, hence a true lower bound.
    """
    space = x.space
    if space.level_cap is not None and space.level_cap < q:
        raise LevelError("space level cap is below the requested q")
    n = x.level
    if n <= q:
        return x.norm()
    if cfg is None:
        cfg = AscentConfig(seed=0, multistarts=4, max_iters=30)
    inner_cfg = AscentConfig(seed=cfg.seed + 1, multistarts=2, max_iters=20)

    def q_norm_of(images):
        def obj(zc):
            return nk.op_norm(_apply_images(images, zc, q))

        def grad(zc):
            m = _apply_images(images, zc, q)
            u, s, vh = np.linalg.svd(m)
            ub = u[:, 0].reshape(q, q)
            vb = vh[0, :].conj().reshape(q, q)
            w = np.einsum("id,bde,je->ijb", ub.conj(), images, vb)
            return np.conj(w)

        return nk.ball_ascent(obj, space, q, inner_cfg, grad=grad).value

    def objective(T):
        images = T.reshape(space.dim, q, q)
        est = q_norm_of(images)
        if est <= 1e-14:
            return 0.0
        images = images / (est * (1.0 + 1e-6))
        return nk.op_norm(_apply_images(images, x.coeffs, n))

    warm = [np.array(w, dtype=complex).reshape(space.dim, q, q)
            for w in extra_starts]
    if isinstance(space, ConcreteSpace):
        # compressions to q x q corners of ambient blocks are q-contractive
        for off, d in zip(space._offsets, space.ambient_blocks):
            for shift in range(d - q + 1):
                sl = slice(off + shift, off + shift + q)
                warm.append(space.basis[:, sl, sl].copy())

    slot = nk.FrobeniusBall((space.dim, q, q))
    res = nk.multi_ball_ascent(lambda pts: objective(pts[0]), [slot], cfg,
                               warm_starts=[[w] for w in warm])
    images = res.point.reshape(space.dim, q, q)
    if isinstance(space, ConcreteSpace):
        from .maps import LinMap, cb_norm_upper
        target = full_matrix_space(q)
        phi = LinMap(space, target,
                     images.reshape(space.dim, q * q).T.reshape(target.dim,
                                                                space.dim))
        exact = cb_norm_upper(phi)
        if exact.status == "optimal" and exact.value > 1e-14:
            scaled = images / (exact.value * (1.0 + 1e-12))
            return nk.op_norm(_apply_images(scaled, x.coeffs, n))
    return res.value
