"""Linear maps between spaces: amplification, Choi calculus, cb norms, repair.

A map is stored by its coefficient matrix with respect to the two bases, so
amplifications act entrywise on coefficient arrays.  For maps out of a full
matrix algebra the Choi block matrix drives the complete-positivity tests
and the quantitative ucp repair algorithms; completely bounded norms are
bounded above by a semidefinite program (the two-block characterization of
the completely bounded trace norm of the adjoint map, minimized over
ambient extensions) and below by ball ascent on amplifications.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .errors import ConstructionError, DimensionError, DomainError
from .numkernel import AffineMatrix, AscentConfig, SdpModel
from .spaces import ConcreteSpace, LevelElement, QuotientSpace


class LinMap:
    """A linear map between spaces, given by its coefficient matrix.

    ``coeffs[t, s]`` is the coordinate of the image of source basis element
    ``s`` along target basis element ``t``; images therefore lie in the
    target span exactly.
    """

    def __init__(self, source, target, coeffs):
        self.source = source
        self.target = target
        c = np.asarray(coeffs, dtype=complex)
        if c.shape != (target.dim, source.dim):
            raise DimensionError(
                f"coefficient matrix must be {(target.dim, source.dim)}")
        self.coeffs = c

    @classmethod
    def identity(cls, space) -> "LinMap":
        return cls(space, space, np.eye(space.dim))

    @classmethod
    def from_ambient_images(cls, source, target, mats, tol=1e-8) -> "LinMap":
        """Build a map from realized images; they must lie in the target span."""
        cols = []
        for m in mats:
            co, resid = target.coeffs_of(m, level=1)
            if resid > tol:
                raise ConstructionError(
                    f"image leaves the target span (residual {resid:.2e})")
            cols.append(co[0, 0])
        return cls(source, target, np.stack(cols, axis=1))

    def apply(self, x: LevelElement) -> LevelElement:
        if x.space is not self.source:
            raise DimensionError("element does not live in the source space")
        out = np.einsum("ts,ijs->ijt", self.coeffs, x.coeffs)
        return LevelElement(self.target, x.level, out)

    __call__ = apply

    def apply_coeffs(self, coeffs):
        return np.einsum("ts,...s->...t", self.coeffs, np.asarray(coeffs, dtype=complex))

    def image_mats(self) -> np.ndarray:
        """Realized images of the source basis in the target ambient."""
        out = np.einsum("ts,tkl->skl", self.coeffs, self.target.basis)
        return out

    def compose(self, inner: "LinMap") -> "LinMap":
        """self after inner."""
        if inner.target is not self.source:
            raise DimensionError("composition mismatch")
        return LinMap(inner.source, self.target, self.coeffs @ inner.coeffs)

    def __add__(self, other):
        self._check(other)
        return LinMap(self.source, self.target, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return LinMap(self.source, self.target, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return LinMap(self.source, self.target, self.coeffs * scalar)

    __rmul__ = __mul__

    def _check(self, other):
        if other.source is not self.source or other.target is not self.target:
            raise DimensionError("maps have different source or target")

    def unit_defect(self) -> float:
        """||phi(1) - 1|| in the target, for unital source and target."""
        u = self.source.unit_coeffs
        ut = self.target.unit_coeffs
        if u is None or ut is None:
            raise DomainError("unit defect needs unital source and target")
        diff = self.apply_coeffs(u) - ut
        return self.target.level_norm(1, diff.reshape(1, 1, -1))

    def __repr__(self):
        return f"<LinMap {self.source!r} -> {self.target!r}>"


class Amplification:
    """The n-th amplification phi^(n), acting on level-n elements."""

    def __init__(self, base: LinMap, n: int):
        self.base = base
        self.n = int(n)

    def apply(self, x: LevelElement) -> LevelElement:
        if x.level != self.n:
            raise DimensionError(f"amplification acts on level {self.n} only")
        return self.base.apply(x)

    __call__ = apply


def amplify(phi: LinMap, n: int) -> Amplification:
    return Amplification(phi, n)


# ---------------------------------------------------------------------------
# Choi calculus
# ---------------------------------------------------------------------------

def _unit_cob(space: ConcreteSpace):
    """Coefficients of the matrix units of a full matrix-algebra space."""
    if not isinstance(space, ConcreteSpace) or len(space.ambient_blocks) != 1:
        raise DomainError("source must be a full matrix algebra")
    q = space.ambient_blocks[0]
    if space.dim != q * q:
        raise DomainError("source basis does not span the full matrix algebra")
    cob = np.zeros((q * q, space.dim), dtype=complex)
    for i in range(q):
        for j in range(q):
            m = np.zeros((q, q), dtype=complex)
            m[i, j] = 1.0
            co, resid = space.coeffs_of(m, level=1)
            if resid > 1e-9:
                raise DomainError("source basis does not span the full matrix algebra")
            cob[i * q + j] = co[0, 0]
    return q, cob


@dataclass
class ChoiMat:
    """Block matrix [phi(e_ij)] realized in M_q(target ambient)."""

    matrix: np.ndarray
    q: int
    map: LinMap = field(repr=False)

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(nk.hermitian_part(self.matrix))[0])


def choi(phi: LinMap) -> ChoiMat:
    q, cob = _unit_cob(phi.source)
    Dt = phi.target.ambient_dim
    C = np.zeros((q * Dt, q * Dt), dtype=complex)
    for i in range(q):
        for j in range(q):
            img = phi.target.realize(
                1, phi.apply_coeffs(cob[i * q + j]).reshape(1, 1, -1))
            C[i * Dt:(i + 1) * Dt, j * Dt:(j + 1) * Dt] = img
    return ChoiMat(matrix=C, q=q, map=phi)


def choi_inverse(matrix, source: ConcreteSpace, target):
    """Map with the given Choi block matrix, plus the off-span residual.

    The blocks are represented in the target basis by least squares; if
    they do not lie in the target span the residual reports how much was
    discarded.
    """
    q, cob = _unit_cob(source)
    Dt = target.ambient_dim
    m = nk.as_complex_matrix(matrix)
    if m.shape != (q * Dt, q * Dt):
        raise DimensionError("Choi matrix has the wrong shape")
    unit_images = np.zeros((q * q, target.dim), dtype=complex)
    resid = 0.0
    for i in range(q):
        for j in range(q):
            blk = m[i * Dt:(i + 1) * Dt, j * Dt:(j + 1) * Dt]
            co, r = target.coeffs_of(blk, level=1)
            unit_images[i * q + j] = co[0, 0]
            resid = max(resid, r)
    # unit_images are images of matrix units; convert to the source basis
    coeffs = unit_images.T @ np.linalg.inv(cob).T
    return LinMap(source, target, coeffs), resid


@dataclass
class CpResult:
    cp: bool
    margin: float
    route: str
    unit_defect: float | None = None

    def __bool__(self):
        return self.cp


def is_cp(phi: LinMap, tol: float = 1e-8, levels: int = 4, samples: int = 5,
          seed: int = 0) -> CpResult:
    """Complete positivity: Choi PSD for full-matrix sources, sampled otherwise."""
    try:
        c = choi(phi)
        return CpResult(cp=c.min_eig() >= -tol, margin=c.min_eig(), route="choi")
    except DomainError:
        pass
    if phi.source.unit_coeffs is None:
        raise DomainError("sampled cp check needs a unital source")
    rng = np.random.default_rng(seed)
    margin = np.inf
    src = phi.source
    for lvl in range(1, levels + 1):
        for _ in range(samples):
            z = (rng.standard_normal((lvl, lvl, src.dim)) +
                 1j * rng.standard_normal((lvl, lvl, src.dim)))
            za = src.adjoint_coeffs(lvl, z)
            sa = 0.5 * (z + za)
            x = LevelElement(src, lvl, sa)
            shift = x.norm() + 0.1
            pos = x + shift * _unit_level(src, lvl)
            img = phi.apply(pos)
            margin = min(margin, nk.min_eig(img.realize()))
    return CpResult(cp=margin >= -tol, margin=float(margin), route="sampled")


def _unit_level(space, level):
    return space.unit_element(level)


def is_ucp(phi: LinMap, tol: float = 1e-8, **kw) -> CpResult:
    res = is_cp(phi, tol=tol, **kw)
    ud = phi.unit_defect()
    return CpResult(cp=res.cp and ud <= tol, margin=res.margin,
                    route=res.route, unit_defect=ud)


# ---------------------------------------------------------------------------
# q-norms and completely bounded norms
# ---------------------------------------------------------------------------

@dataclass
class QNormResult:
    lower: float
    upper: float | None
    witness: np.ndarray | None


def _canonical_ball_starts(space, q):
    starts = []
    if getattr(space, "unit_coeffs", None) is not None:
        starts.append(space.unit_element(q).coeffs)
    if isinstance(space, ConcreteSpace) and len(space.ambient_blocks) == 1 \
            and space.dim == space.ambient_blocks[0] ** 2:
        d = space.ambient_blocks[0]
        if d == q:
            _, cob = _unit_cob(space)
            ch = np.zeros((q, q, space.dim), dtype=complex)
            sw = np.zeros((q, q, space.dim), dtype=complex)
            for i in range(q):
                for j in range(q):
                    ch[i, j] = cob[i * q + j] / q       # [e_ij] scaled into the ball
                    sw[i, j] = cob[j * q + i]           # the swap unitary
            starts.extend([ch, sw])
    return starts


def q_norm(phi: LinMap, q: int, cfg: AscentConfig | None = None) -> QNormResult:
    """Norm of the q-th amplification: ascent lower bound, SDP upper bound.

    The upper bound is attached when the target is concrete and q reaches
    the largest target block, where the amplification norm equals the
    completely bounded norm (Smith's lemma regime).
    """
    if cfg is None:
        cfg = AscentConfig(seed=0, multistarts=8, max_iters=80)
    tgt = phi.target
    src = phi.source
    if isinstance(tgt, ConcreteSpace):
        images = phi.image_mats()
        Dt = tgt.ambient_dim

        def objective(c):
            m = np.einsum("ijb,bkl->ikjl", c, images).reshape(q * Dt, q * Dt)
            return nk.op_norm(m)

        def grad(c):
            m = np.einsum("ijb,bkl->ikjl", c, images).reshape(q * Dt, q * Dt)
            u, s, vh = np.linalg.svd(m)
            ub = u[:, 0].reshape(q, Dt)
            vb = vh[0, :].conj().reshape(q, Dt)
            w = np.einsum("id,bde,je->ijb", ub.conj(), images, vb)
            return np.conj(w)
    else:
        def objective(c):
            return phi.apply(LevelElement(src, q, c)).norm()

        grad = None

    warm = _canonical_ball_starts(src, q)
    res = nk.ball_ascent(objective, src, q, cfg, grad=grad, warm_starts=warm)
    upper = None
    if isinstance(tgt, ConcreteSpace) and isinstance(src, ConcreteSpace) \
            and q >= max(tgt.ambient_blocks):
        try:
            upper = cb_norm_upper(phi).value
        except nk.NumericalFailure:
            upper = None
    return QNormResult(lower=res.value, upper=upper, witness=res.point)


def _choi_apply_expr(J: AffineMatrix, m: np.ndarray, A: int, Dt: int) -> AffineMatrix:
    """Image of the A x A matrix m under the map with Choi expression J."""
    expr = None
    for i in range(A):
        for j in range(A):
            if abs(m[i, j]) < 1e-300:
                continue
            blk = J.subblock(i * Dt, (i + 1) * Dt, j * Dt, (j + 1) * Dt).scale(m[i, j])
            expr = blk if expr is None else expr + blk
    if expr is None:
        expr = AffineMatrix.constant(np.zeros((Dt, Dt)))
    return expr


def _watrous_bound(model: SdpModel, J: AffineMatrix, A: int, Dt: int) -> AffineMatrix:
    """Scalar expression dominating the cb (spectral) norm of the map with Choi J.

    Uses the two-block semidefinite characterization of the completely
    bounded trace norm applied to the adjoint map, whose Choi matrix is the
    entrywise conjugate of J in this index convention.
    """
    Y0 = model.hermitian(A * Dt)
    Y1 = model.hermitian(A * Dt)
    t0 = model.scalar()
    t1 = model.scalar()
    Jc = J.conj()
    model.add_psd(AffineMatrix.block([
        [Y0, Jc.scale(-1.0)],
        [Jc.H.scale(-1.0), Y1],
    ]))
    eye = np.eye(Dt)
    model.add_psd(t0.times_matrix(eye) - Y0.ptrace_first(A, Dt))
    model.add_psd(t1.times_matrix(eye) - Y1.ptrace_first(A, Dt))
    return (t0 + t1).scale(0.5)


def _choi_of_map_fixed(phi: LinMap) -> np.ndarray:
    """Choi matrix (ambient-indexed) of a map whose source spans its ambient."""
    src, tgt = phi.source, phi.target
    A, Dt = src.ambient_dim, tgt.ambient_dim
    flat = src.basis.reshape(src.dim, -1)
    gram_inv = np.linalg.inv(flat @ flat.conj().T)
    images = phi.image_mats()
    J = np.zeros((A * Dt, A * Dt), dtype=complex)
    for i in range(A):
        for j in range(A):
            e = np.zeros(A * A, dtype=complex)
            e[i * A + j] = 1.0
            co = gram_inv @ (flat.conj() @ e)
            img = np.einsum("s,skl->kl", co, images)
            J[i * Dt:(i + 1) * Dt, j * Dt:(j + 1) * Dt] = img
    return J


@dataclass
class CbBound:
    value: float
    status: str
    sdp: nk.SdpResult | None = None


def cb_norm_upper(phi: LinMap) -> CbBound:
    """Certified upper bound for the completely bounded norm.

    Minimizes, over Choi matrices of ambient extensions that agree with the
    map on the source span, the two-block SDP value for the completely
    bounded trace norm of the adjoint.  Extending into the full ambient
    incurs no norm inflation, so at the optimum the bound is tight up to
    solver tolerance.
    """
    src, tgt = phi.source, phi.target
    if not isinstance(src, ConcreteSpace) or not isinstance(tgt, ConcreteSpace):
        raise DomainError("cb norm bound needs concrete source and target")
    A, Dt = src.ambient_dim, tgt.ambient_dim
    model = SdpModel()
    if src.dim == A * A:
        J = AffineMatrix.constant(_choi_of_map_fixed(phi))
    else:
        J = model.complex_matrix(A * Dt, A * Dt)
        images = phi.image_mats()
        for b in range(src.dim):
            expr = _choi_apply_expr(J, src.basis[b], A, Dt)
            model.add_eq_zero(expr - AffineMatrix.constant(images[b]))
    s = _watrous_bound(model, J, A, Dt)
    model.minimize(s)
    res = model.solve()
    if res.status != "optimal":
        value = float("inf")
        if res.x is not None:
            value = float(res.evaluate(s)[0, 0].real)
        return CbBound(value=value, status=res.status, sdp=res)
    return CbBound(value=float(res.value), status="optimal", sdp=res)


def cb_distance_upper(phi: LinMap, psi: LinMap) -> float:
    """Upper bound for ||phi - psi||_cb."""
    return cb_norm_upper(phi - psi).value


# ---------------------------------------------------------------------------
# approximate positivity of near-contractive unital maps
# ---------------------------------------------------------------------------

@dataclass
class ApproxPositiveReport:
    samples: int
    delta: float
    imag_bound: float
    max_imag: float
    min_real_eig: float
    violations: list


def approx_positive_check(phi: LinMap, samples: int, seed: int,
                          delta: float) -> ApproxPositiveReport:
    """Sampled check of the positivity leak of a unital near-contraction.

    For ||phi|| <= 1 + delta (unital, between operator systems) every
    self-adjoint contraction x satisfies ``||Im phi(x)|| <= delta +
    sqrt(delta)`` and every positive contraction has ``Re phi(x) + delta/2
    >= 0``.  Violations are collected as counterexample records, not
    raised.
    """
    src, tgt = phi.source, phi.target
    if src.unit_coeffs is None or tgt.unit_coeffs is None:
        raise DomainError("approximate-positivity check needs unital systems")
    lower = q_norm(phi, 1, AscentConfig(seed=seed + 1, multistarts=4,
                                        max_iters=40)).lower
    if lower > 1.0 + delta + 1e-9:
        raise DomainError(
            f"measured level-1 norm {lower:.6f} exceeds 1 + delta")
    rng = np.random.default_rng(seed)
    bound = delta + np.sqrt(delta)
    max_imag, min_real = 0.0, np.inf
    violations = []
    for k in range(samples):
        z = (rng.standard_normal((1, 1, src.dim)) +
             1j * rng.standard_normal((1, 1, src.dim)))
        sa = 0.5 * (z + src.adjoint_coeffs(1, z))
        x = LevelElement(src, 1, sa)
        nx = x.norm()
        if nx > 1e-12:
            x = x * (rng.uniform(0.3, 1.0) / nx)
        y = phi.apply(x).realize()
        im = nk.op_norm((y - y.conj().T) / 2j)
        max_imag = max(max_imag, im)
        if im > bound + 1e-6:
            violations.append({"kind": "imag", "sample": k, "value": im})
        # positive contraction: shift the self-adjoint sample into the cone
        lo = nk.min_eig(x.realize())
        p = x + max(0.0, -lo) * src.unit_element(1)
        npn = p.norm()
        if npn > 1e-12:
            p = p * (1.0 / max(1.0, npn))
        yr = phi.apply(p).realize()
        re_eig = nk.min_eig((yr + yr.conj().T) / 2)
        min_real = min(min_real, re_eig)
        if re_eig < -delta / 2 - 1e-6:
            violations.append({"kind": "real", "sample": k, "value": re_eig})
    return ApproxPositiveReport(samples=samples, delta=delta, imag_bound=bound,
                                max_imag=max_imag, min_real_eig=float(min_real),
                                violations=violations)


# ---------------------------------------------------------------------------
# quantitative ucp repair
# ---------------------------------------------------------------------------

def trace_map(source: ConcreteSpace, target, c_coeffs) -> LinMap:
    """The map x -> tau(x) c for the normalized trace tau on the source."""
    q = source.ambient_dim
    taus = np.array([np.trace(b) / q for b in source.basis])
    c = np.asarray(c_coeffs, dtype=complex).reshape(target.dim)
    return LinMap(source, target, np.outer(c, taus))


@dataclass
class RepairResult:
    map: LinMap
    distance: float
    bound: float
    within_bound: bool
    fallback_used: bool
    ucp: CpResult
    clip_distance: float
    offspan_residual: float


def ucp_repair_unital(phi: LinMap, delta: float) -> RepairResult:
    """Repair a unital near-contraction on M_q into a genuine ucp map.

    The Choi block matrix is clipped to the PSD cone, pulled back to a cp
    map, and unitalized by the normalized-trace correction; the guaranteed
    distance is ``3 q^2 delta + 2 q^2 sqrt(delta)``.  The trace correction
    is not always completely positive, in which case a conjugation
    fallback by ``psi0(1)^{-1/2}`` (regularized) runs instead, followed by
    an exact unitalization whose correction term is PSD by construction.
    Bound violations are flagged in the result, never raised.
    """
    src, tgt = phi.source, phi.target
    q, _ = _unit_cob(src)
    b = choi(phi).matrix
    proj = nk.psd_project(b)
    psi0, offspan = choi_inverse(proj.matrix, src, tgt)
    unit_t = tgt.unit_coeffs
    if unit_t is None:
        raise DomainError("repair needs a unital target")
    corr = unit_t - psi0.apply_coeffs(src.unit_coeffs)
    psi = psi0 + trace_map(src, tgt, corr)
    fallback = False
    if not is_cp(psi).cp:
        fallback = True
        s = tgt.realize(1, psi0.apply_coeffs(src.unit_coeffs).reshape(1, 1, -1))
        s = nk.hermitian_part(s) + 1e-8 * np.eye(tgt.ambient_dim)
        w, v = np.linalg.eigh(s)
        si = (v * (1.0 / np.sqrt(np.clip(w, 1e-12, None)))) @ v.conj().T
        imgs = psi0.image_mats()
        chi = LinMap.from_ambient_images(
            src, tgt, [si @ m @ si for m in imgs], tol=1e-6)
        corr2 = unit_t - chi.apply_coeffs(src.unit_coeffs)
        psi = chi + trace_map(src, tgt, corr2)
    dist = cb_distance_upper(psi, phi)
    bound = 3.0 * q * q * delta + 2.0 * q * q * np.sqrt(delta) + 1e-4
    return RepairResult(map=psi, distance=dist, bound=bound,
                        within_bound=dist <= bound, fallback_used=fallback,
                        ucp=is_ucp(psi), clip_distance=proj.distance,
                        offspan_residual=offspan)


def ucp_repair_nonunital(phi: LinMap, delta: float) -> RepairResult:
    """Repair a near-unital near-contraction on M_q into a ucp map.

    Requires ``||phi||_q <= 1 + delta <= 2`` and ``||phi(1) - 1|| <=
    delta``; the trace correction forces unitality first, then the unital
    repair runs.  Guaranteed distance ``10 q^2 sqrt(delta)``.
    """
    src, tgt = phi.source, phi.target
    q, _ = _unit_cob(src)
    if 1.0 + delta > 2.0 + 1e-12:
        raise DomainError("nonunital repair requires 1 + delta <= 2")
    ud = phi.unit_defect()
    if ud > delta + 1e-9:
        raise DomainError(f"||phi(1) - 1|| = {ud:.3e} exceeds delta")
    corr = tgt.unit_coeffs - phi.apply_coeffs(src.unit_coeffs)
    phi0 = phi + trace_map(src, tgt, corr)
    inner = ucp_repair_unital(phi0, 2.0 * delta)
    dist = cb_distance_upper(inner.map, phi)
    bound = 10.0 * q * q * np.sqrt(delta) + 1e-4
    return RepairResult(map=inner.map, distance=dist, bound=bound,
                        within_bound=dist <= bound,
                        fallback_used=inner.fallback_used, ucp=inner.ucp,
                        clip_distance=inner.clip_distance,
                        offspan_residual=inner.offspan_residual)


# ---------------------------------------------------------------------------
# ucp extension by semidefinite feasibility
# ---------------------------------------------------------------------------

@dataclass
class ExtensionResult:
    status: str                      # optimal | infeasible | numerical-failure
    map: LinMap | None
    restriction_distance: float | None
    sdp_value: float | None
    certificate: np.ndarray | None = None


def ucp_extension(f: LinMap, target, eps: float,
                  full_source: ConcreteSpace | None = None) -> ExtensionResult:
    """Extend a ucp map on a unital subsystem of M_q to all of M_q.

    Feasibility runs over the Choi matrix of the candidate g: PSD, unital,
    range constrained to the target span, and the restriction to the
    subsystem within ``eps`` of f in completely bounded norm (which
    dominates the q-norm of the restriction difference).  Infeasibility
    surfaces the solver's dual ray as a certificate.
    """
    E = f.source
    tgt = f.target if target is None else target
    if not isinstance(E, ConcreteSpace) or len(E.ambient_blocks) != 1:
        raise DomainError("the subsystem must live in a single full matrix block")
    if E.unit_index is None:
        raise DomainError("the subsystem must be unital")
    q = E.ambient_blocks[0]
    if not isinstance(tgt, ConcreteSpace):
        raise DomainError("extension needs a concrete target")
    Dt = tgt.ambient_dim

    model = SdpModel()
    J = model.hermitian(q * Dt)
    model.add_psd(J)
    # unital
    gid = _choi_apply_expr(J, np.eye(q), q, Dt)
    model.add_eq_zero(gid - AffineMatrix.constant(np.eye(Dt)))
    # range in the target span
    flat = tgt.basis.reshape(tgt.dim, -1)
    u, sv, vh = np.linalg.svd(flat, full_matrices=True)
    comp = vh[tgt.dim:]
    for i in range(q):
        for j in range(q):
            m = np.zeros((q, q), dtype=complex)
            m[i, j] = 1.0
            gex = _choi_apply_expr(J, m, q, Dt)
            for crow in comp:
                model.add_eq_zero(gex.hs_inner(crow.reshape(Dt, Dt)))
    # restriction distance via an extension variable
    H = model.complex_matrix(q * Dt, q * Dt)
    f_imgs = f.image_mats()
    for b in range(E.dim):
        eb = E.basis[b]
        lhs = _choi_apply_expr(H, eb, q, Dt)
        rhs = _choi_apply_expr(J, eb, q, Dt) - AffineMatrix.constant(f_imgs[b])
        model.add_eq_zero(lhs - rhs)
    s = _watrous_bound(model, H, q, Dt)
    model.add_psd(AffineMatrix.constant(np.array([[eps]])) - s)
    model.minimize(s)
    res = model.solve()
    if res.status == "infeasible":
        return ExtensionResult(status="infeasible", map=None,
                               restriction_distance=None, sdp_value=None,
                               certificate=res.dual_ray)
    if res.status != "optimal":
        return ExtensionResult(status="numerical-failure", map=None,
                               restriction_distance=None, sdp_value=None)
    Jval = res.evaluate(J)
    src_full = full_source
    if src_full is None or src_full.ambient_blocks != (q,) \
            or src_full.dim != q * q:
        from .spaces import full_matrix_system
        src_full = full_matrix_system(q)
    imgs = []
    for b in range(src_full.dim):
        m = src_full.basis[b]
        Jr = Jval.reshape(q, Dt, q, Dt)
        imgs.append(np.einsum("ij,ikjl->kl", m, Jr))
    g = LinMap.from_ambient_images(src_full, tgt, imgs, tol=1e-6)
    # measured restriction distance at level q
    rest_imgs = []
    for b in range(E.dim):
        Jr = Jval.reshape(q, Dt, q, Dt)
        rest_imgs.append(np.einsum("ij,ikjl->kl", E.basis[b], Jr))
    g_rest = LinMap.from_ambient_images(E, tgt, rest_imgs, tol=1e-6)
    dist = q_norm(g_rest - f, q,
                  AscentConfig(seed=1, multistarts=4, max_iters=40)).lower
    return ExtensionResult(status="optimal", map=g, restriction_distance=dist,
                           sdp_value=float(res.value))
