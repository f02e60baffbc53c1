"""Pipeline orchestration and structural theorems: exit-set equivalence,
block independence, Morse decompositions with connection matrices, and
continuation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import block as block_mod
from . import expr, flow, homalg, lyapunov, morse
from .config import DEFAULT


class ConleyError(Exception):
    pass


class PipelineError(ConleyError):
    pass


class NotAttractorRepellerError(ConleyError):
    pass


class ContinuationError(ConleyError):
    pass


@dataclass
class Quadruple:
    """The data the homology is computed from: a Morse function on a block
    with the Euclidean metric and the canonical orientation frames."""

    f: object          # Expr after perturbation
    metric: str        # "euclidean"
    block: object
    crits: list
    base: object       # base Lyapunov Expr
    epsilon: float
    seed: int
    certificate: object


@dataclass
class HIResult:
    homology: homalg.HomologyResult
    quadruple: Quadruple
    complex: homalg.ChainComplex
    counts: list


def compute_HI(fieldd, b, lyap, s_decl, lam=None, seed=0, epsilon=None,
               perturbation=None, coeff="Z", tols=DEFAULT, precheck=True):
    """Full pipeline: verify the inputs, Morse-perturb the Lyapunov
    function, find critical points, count connections, take homology."""
    if precheck:
        classified = block_mod.classify_boundary(b, fieldd, lam=lam,
                                                 tols=tols)
        block_mod.exit_set(classified)  # raises on unresolved faces
        iso = block_mod.check_isolation(b, fieldd, lam=lam, tols=tols)
        if not iso:
            raise PipelineError(
                f"block is not isolating (trapped samples {iso.failures[:3]})")
        rep = lyapunov.verify_lyapunov(lyap, fieldd, b, s_decl, lam=lam,
                                       tols=tols)
        if not rep:
            raise PipelineError(
                f"Lyapunov verification failed (min decrease "
                f"{rep.min_decrease:.3e} at {rep.min_location}, "
                f"f spread over S {rep.value_spread:.3e})")
    rng = np.random.default_rng(seed)
    eps = tols.epsilon if epsilon is None else epsilon
    f, cert = lyapunov.morse_perturb(lyap, b, epsilon=eps,
                                     perturbation=perturbation, rng=rng,
                                     lam=lam, tols=tols)
    crits = morse.find_critical_points(f, b, lam=lam, tols=tols)
    complex_, counts = morse.build_complex(
        f, b, crits, lam=lam, tols=tols, coeff=coeff, seed=seed)
    h = homalg.homology(complex_, coeff=coeff)
    quad = Quadruple(f, "euclidean", b, crits, lyap, eps, seed, cert)
    return HIResult(h, quad, complex_, counts)


@dataclass
class ExitTheoremReport:
    verdict: bool
    hi: homalg.HomologyResult
    relative: homalg.HomologyResult


def verify_exit_theorem(fieldd, b, lyap, s_decl, lam=None, seed=0,
                        epsilon=None, perturbation=None, coeff="Z",
                        tols=DEFAULT):
    """Compare HI against the relative cubical homology of the block and
    its exit set."""
    res = compute_HI(fieldd, b, lyap, s_decl, lam=lam, seed=seed,
                     epsilon=epsilon, perturbation=perturbation,
                     coeff=coeff, tols=tols)
    classified = block_mod.classify_boundary(b, fieldd, lam=lam, tols=tols)
    exitc = block_mod.exit_set(classified)
    rel = homalg.cubical_relative_homology(classified, exitc, coeff=coeff)
    return ExitTheoremReport(res.homology == rel, res.homology, rel), res


def block_independence(fieldd, lyap_a, block_a, lyap_b, block_b, s_decl_a,
                       s_decl_b, lam=None, seed=0, epsilon=None, coeff="Z",
                       tols=DEFAULT):
    """Two blocks isolating the same invariant set must give equal HI."""
    ra = compute_HI(fieldd, block_a, lyap_a, s_decl_a, lam=lam, seed=seed,
                    epsilon=epsilon, coeff=coeff, tols=tols)
    rb = compute_HI(fieldd, block_b, lyap_b, s_decl_b, lam=lam, seed=seed,
                    epsilon=epsilon, coeff=coeff, tols=tols)
    return ra.homology == rb.homology, ra, rb


@dataclass
class DecompositionReport:
    q: homalg.PoincarePolynomial
    parts: list
    whole: homalg.PoincarePolynomial


def decomposition_analysis(fieldd, s_block, s_lyap, s_decl, sub_specs,
                           lam=None, seed=0, epsilon=None, tols=DEFAULT):
    """Morse relations for a declared decomposition.

    ``sub_specs`` is a list of (block, lyapunov Expr, SDeclaration) for the
    Morse sets, pairwise disjoint inside the S block.
    """
    whole = compute_HI(fieldd, s_block, s_lyap, s_decl, lam=lam, seed=seed,
                       epsilon=epsilon, tols=tols)
    parts = []
    for sb, sl, sd in sub_specs:
        parts.append(compute_HI(fieldd, sb, sl, sd, lam=lam, seed=seed,
                                epsilon=epsilon, tols=tols))
    pw = homalg.poincare(whole.homology)
    pp = [homalg.poincare(p.homology) for p in parts]
    q = homalg.relations_check(pp, pw)
    return DecompositionReport(q, pp, pw), whole, parts


# ---------------------------------------------------------------------------
# attractor-repeller pairs and connection matrices

@dataclass
class AttractorRepellerReport:
    boundary_blocks: dict      # k -> (dA, delta, dR) integer matrices
    delta_ranks: dict          # k -> rank of induced delta on homology
    q: homalg.PoincarePolynomial
    q_deficit: homalg.PoincarePolynomial
    connection_matrix_squares_to_zero: bool

    @property
    def verdict(self):
        return (self.connection_matrix_squares_to_zero
                and self.q == self.q_deficit)


def _split_complex(complex_, crits, a_block, r_block):
    """Partition generators of the S complex into attractor and repeller
    generators by containment of their coordinates, and return per-degree
    index lists (A first)."""
    by_label = {}
    for c in crits:
        by_label[str(c.coords)] = c
    order = {}
    for k, labels in complex_.labels.items():
        a_idx, r_idx = [], []
        for i, lab in enumerate(labels):
            c = by_label[lab]
            p = np.asarray(c.coords)
            in_a = a_block.contains(p)
            in_r = r_block.contains(p)
            if in_a == in_r:
                raise NotAttractorRepellerError(
                    f"critical point {c.coords} is in "
                    f"{'both' if in_a else 'neither'} sub-block")
            (a_idx if in_a else r_idx).append(i)
        order[k] = (a_idx, r_idx)
    return order


def attractor_repeller(s_result, a_block, r_block):
    """Reorder the S-level Morse boundary into the attractor-repeller block
    form, extract the connection data, and check the rank identity against
    the Poincare deficit."""
    complex_ = s_result.complex
    crits = s_result.quadruple.crits
    order = _split_complex(complex_, crits, a_block, r_block)
    blocks = {}
    na = {}
    nr = {}
    for k in range(complex_.top + 1):
        a_idx, r_idx = order.get(k, ([], []))
        na[k] = len(a_idx)
        nr[k] = len(r_idx)
    dA, dR, delta = {}, {}, {}
    for k in range(1, complex_.top + 1):
        M = complex_.boundary(k)
        arow, rrow = order.get(k - 1, ([], []))
        acol, rcol = order.get(k, ([], []))
        dA[k] = [[M[i][j] for j in acol] for i in arow]
        dR[k] = [[M[i][j] for j in rcol] for i in rrow]
        delta[k] = [[M[i][j] for j in rcol] for i in arow]
        lower_left = [(i, j, M[i][j]) for i in rrow for j in acol if M[i][j]]
        if lower_left:
            i, j, v = lower_left[0]
            raise NotAttractorRepellerError(
                "connection from the attractor up to the repeller detected "
                f"(entry {v} at boundary degree {k}, row {i}, col {j}); "
                "not an attractor-repeller pair at this resolution")
        blocks[k] = (dA[k], delta[k], dR[k])
    ca = homalg.ChainComplex([na.get(k, 0) for k in range(complex_.top + 1)],
                             {k: _pad(dA[k], na.get(k - 1, 0), na.get(k, 0))
                              for k in dA})
    cr = homalg.ChainComplex([nr.get(k, 0) for k in range(complex_.top + 1)],
                             {k: _pad(dR[k], nr.get(k - 1, 0), nr.get(k, 0))
                              for k in dR})
    ha = homalg.homology(ca)
    hr = homalg.homology(cr)
    # induced map on homology: rank of delta_k restricted to cycles of the
    # repeller complex, modulo boundaries of the attractor complex
    dranks = {}
    for k in range(1, complex_.top + 1):
        dranks[k] = _induced_rank(
            _pad(delta[k], na.get(k - 1, 0), nr.get(k, 0)),
            _pad(dR.get(k, []), nr.get(k - 1, 0), nr.get(k, 0)),
            _pad(dA.get(k, []), na.get(k - 1, 0), na.get(k, 0)),
            nr.get(k, 0))
    squares = _delta_squares_to_zero(complex_.top, dA, dR, delta, na, nr)
    # rank identity: Q_t = sum_k rank(delta_k on homology) t^{k-1}
    qcoeffs = [0] * (complex_.top + 1)
    for k, r in dranks.items():
        if r:
            qcoeffs[k - 1] += r
    q = homalg.PoincarePolynomial(tuple(qcoeffs))
    deficit = homalg.relations_check(
        [homalg.poincare(ha), homalg.poincare(hr)],
        homalg.poincare(s_result.homology))
    return AttractorRepellerReport(blocks, dranks, q, deficit, squares), ha, hr


def _pad(M, rows, cols):
    if not M:
        return homalg.zeros(rows, cols)
    return M


def _delta_squares_to_zero(top, dA, dR, delta, na, nr):
    """Assemble the connection matrix Delta on cycle coordinates of
    H_*(A) + H_*(R) and verify its square vanishes exactly.

    Delta carries H_k(R) into H_{k-1}(A) via the induced delta_k and is
    zero on H_*(A); the square is computed over Q on the assembled total
    matrix."""
    # cycle bases per degree
    KA = {k: homalg.kernel_basis_fractions(
        _pad(dA.get(k, []), na.get(k - 1, 0), na.get(k, 0)),
        ncols=na.get(k, 0)) for k in range(top + 1)}
    KR = {k: homalg.kernel_basis_fractions(
        _pad(dR.get(k, []), nr.get(k - 1, 0), nr.get(k, 0)),
        ncols=nr.get(k, 0)) for k in range(top + 1)}
    # block entries: coordinates of delta_k (R cycle) in [KA_{k-1} | im dA_k]
    blocks = {}
    for k in range(1, top + 1):
        dk = _pad(delta.get(k, []), na.get(k - 1, 0), nr.get(k, 0))
        cols = []
        basisA = KA.get(k - 1, [])
        imA = _pad(dA.get(k, []), na.get(k - 1, 0), na.get(k, 0))
        ncA = len(imA[0]) if imA and imA[0] else 0
        rows = na.get(k - 1, 0)
        span = [[basisA[j][i] for j in range(len(basisA))]
                + [imA[i][j] for j in range(ncA)] for i in range(rows)]
        for v in KR.get(k, []):
            img = [sum(Fraction(dk[i][t]) * v[t] for t in range(len(v)))
                   for i in range(rows)]
            z = homalg.solve_fractions(span, img) if rows else []
            if z is None:
                return False  # delta of a cycle fails to be a cycle
            cols.append(z[:len(basisA)])
        blocks[k] = (cols, len(basisA))
    # assemble the total matrix over all degrees and square it exactly
    offA = {}
    offR = {}
    N = 0
    for k in range(top + 1):
        offA[k] = N
        N += len(KA.get(k, []))
    for k in range(top + 1):
        offR[k] = N
        N += len(KR.get(k, []))
    D = [[Fraction(0)] * N for _ in range(N)]
    for k, (cols, nak) in blocks.items():
        for j, col in enumerate(cols):
            for i, v in enumerate(col):
                D[offA[k - 1] + i][offR[k] + j] = v
    sq = homalg.matmul(D, D)
    return all(all(v == 0 for v in row) for row in sq)


def _induced_rank(delta, dR_k, dA_k, nr_k):
    """Rank of the map H_k(R) -> H_{k-1}(A) induced by delta.

    Computed over Q: restrict delta to ker(dR_k) and mod out by im(dA_k):
    rank = rank([delta K | dA_k]) - rank(dA_k), where K is a kernel basis.
    """
    K = homalg.kernel_basis_fractions(dR_k, ncols=nr_k)
    rows = len(delta)
    if rows == 0 or not K:
        return 0
    dK = [[sum(Fraction(delta[i][t]) * K[j][t] for t in range(len(K[j])))
           for j in range(len(K))] for i in range(rows)]
    acols = len(dA_k[0]) if dA_k and dA_k[0] else 0
    combined = [[dK[i][j] for j in range(len(K))]
                + [Fraction(dA_k[i][j]) for j in range(acols)]
                for i in range(rows)]
    return homalg.rank_fractions(combined) - homalg.rank_fractions(dA_k)


# ---------------------------------------------------------------------------
# continuation

@dataclass(frozen=True)
class ContinuationFunction:
    """F(x, mu) = f_{omega(mu)}(x) + r (1 + cos(pi mu)) on B x S^1, with
    S^1 = R / 2Z and omega the flat-ended even ramp profile."""

    f_lam: object   # Expr in x and lam
    delta: float
    kappa: float
    r: float

    @property
    def expr_in_mu(self):
        """F as an Expr in x1..xm and lam, where lam plays the role of mu."""
        omega = expr.RampProfile(0, self.delta, expr.Param())
        body = expr.substitute_param(self.f_lam, omega)
        bump = expr.mul(expr.Const(self.r),
                        expr.add(expr.ONE,
                                 expr.call("cos",
                                           expr.mul(expr.Const(math.pi),
                                                    expr.Param()))))
        return expr.add(body, bump)


def continuation_r_bound(f_lam, b, delta, samples=9, mu_samples=41):
    """Sampled bound max |omega'(mu) d/dlam f_lam| / (pi sin(pi delta))
    over the block times the mu circle."""
    m = b.dimension
    dflam = expr.compile_scalar(expr.derive(f_lam, "lam"))
    lo, hi = b.bounding_box()
    axes = [np.linspace(lo[i], hi[i], samples) for i in range(m)]
    grid = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grid], axis=-1)
    best = 0.0
    for mu in np.linspace(-1.0, 1.0, mu_samples):
        w1 = expr.ramp_eval(1, delta, mu)
        if w1 == 0.0:
            continue
        w0 = expr.ramp_eval(0, delta, mu)
        for p in pts:
            v = abs(w1 * dflam(p, w0))
            if v > best:
                best = v
    return best / (math.pi * math.sin(math.pi * delta))


def build_continuation_function(f_lam, b, delta=0.2, kappa=1.0, r=None,
                                samples=9):
    """Assemble the continuation function, choosing the amplitude r from
    the sampled bound when not supplied."""
    if not 0.0 < delta < 0.25:
        raise ContinuationError(f"delta must lie in (0, 1/4), got {delta}")
    bound = continuation_r_bound(f_lam, b, delta, samples=samples)
    if r is None:
        r = max(2.0 * bound, 1.0)
    elif r <= bound:
        raise ContinuationError(
            f"amplitude r = {r} does not exceed the sampled bound {bound}")
    return ContinuationFunction(f_lam, delta, kappa, float(r))


@dataclass
class IndexSplitReport:
    verdict: bool
    crit_mu: list        # (coords, mu, index of F)
    alpha_indices: list  # Morse indices of f_lam at lam=0
    beta_indices: list   # at lam=1
    failures: list


def _wrap_mu(mu):
    t = math.fmod(mu, 2.0)
    if t < 0.0:
        t += 2.0
    return t  # representative in [0, 2)


def verify_index_split(cf, b, tols=DEFAULT):
    """Find the critical points of F on B x S^1 and check they sit at
    mu in {0, 1} with the index shift of the endpoints' Morse functions."""
    m = b.dimension
    F = cf.expr_in_mu
    vars_ = list(range(m)) + ["lam"]
    grads = [expr.compile_scalar(expr.derive(F, v)) for v in vars_]
    hess_rows = []
    for v in vars_:
        gv = expr.derive(F, v)
        hess_rows.append([expr.compile_scalar(expr.derive(gv, w))
                          for w in vars_])

    def gradv(p, mu):
        return np.array([g(p, mu) for g in grads])

    def hessm(p, mu):
        return np.array([[e(p, mu) for e in row] for row in hess_rows])

    lo, hi = b.bounding_box()
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    span = np.asarray(hi) - np.asarray(lo)
    axes = [np.linspace(lo[i], hi[i], tols.seed_density) for i in range(m)]
    mu_seeds = np.linspace(0.0, 2.0, 17)[:-1]
    import itertools as _it
    roots = []
    for seed in _it.product(*axes):
        for mu0 in mu_seeds:
            p = np.array(seed, dtype=float)
            mu = float(mu0)
            ok = False
            for _ in range(80):
                g = gradv(p, mu)
                if not np.all(np.isfinite(g)):
                    break
                if float(np.linalg.norm(g)) < tols.newton_tol:
                    ok = True
                    break
                H = hessm(p, mu)
                try:
                    step = np.linalg.lstsq(H, g, rcond=None)[0]
                except np.linalg.LinAlgError:
                    break
                ns = float(np.linalg.norm(step))
                capn = float(np.max(span))
                if ns > capn:
                    step *= capn / ns
                p = p - step[:m]
                mu = _wrap_mu(mu - step[m])
                if np.any(p < lo - span) or np.any(p > hi + span):
                    break
            if ok and b.contains(p):
                roots.append((p, mu))
    dedupe = max(10 * tols.newton_tol, 1e-7)
    uniq = []
    for p, mu in roots:
        dup = False
        for q, nu in uniq:
            dmu = min(abs(mu - nu), 2.0 - abs(mu - nu))
            if float(np.linalg.norm(p - q)) < dedupe and dmu < dedupe:
                dup = True
                break
        if not dup:
            uniq.append((p, mu))
    crit_mu = []
    failures = []
    for p, mu in uniq:
        H = hessm(p, mu)
        H = 0.5 * (H + H.T)
        evals = np.linalg.eigvalsh(H)
        idx = int(np.sum(evals < 0))
        crit_mu.append((tuple(float(v) for v in p), float(mu), idx))
        dmu0 = min(mu, 2.0 - mu)
        dmu1 = abs(mu - 1.0)
        if min(dmu0, dmu1) > 1e-6:
            failures.append(
                f"critical point at interior mu = {mu} (r too small "
                "or bound undersampled)")
    # endpoint Morse indices of f_lam at lam = 0 and 1
    alpha = _endpoint_indices(cf.f_lam, b, 0.0, tols)
    beta = _endpoint_indices(cf.f_lam, b, 1.0, tols)
    at0 = sorted(idx for _, mu, idx in crit_mu
                 if min(mu, 2.0 - mu) <= 1e-6)
    at1 = sorted(idx for _, mu, idx in crit_mu if abs(mu - 1.0) <= 1e-6)
    if at0 != sorted(i + 1 for i in alpha):
        failures.append(
            f"indices at mu=0 are {at0}, expected shift of {sorted(alpha)}")
    if at1 != sorted(beta):
        failures.append(
            f"indices at mu=1 are {at1}, expected {sorted(beta)}")
    # chain-group split by cardinality: C_k(F) = C_{k-1}(f^a) + C_k(f^b)
    top = max([idx for _, _, idx in crit_mu], default=0)
    for k in range(top + 2):
        lhs = sum(1 for _, _, idx in crit_mu if idx == k)
        rhs = sum(1 for i in alpha if i == k - 1) \
            + sum(1 for i in beta if i == k)
        if lhs != rhs:
            failures.append(
                f"chain group split fails in degree {k}: {lhs} != {rhs}")
    return IndexSplitReport(not failures, crit_mu, sorted(alpha),
                            sorted(beta), failures)


def _endpoint_indices(f_lam, b, lam, tols):
    f = expr.substitute_param(f_lam, expr.Const(lam))
    crits = morse.find_critical_points(f, b, tols=tols)
    return [c.index for c in crits]


def continuation_invariance(family, b, lam_grid, lyap0, lyap1, s_decl0,
                            s_decl1, seed=0, epsilon=None, tols=DEFAULT):
    """Check isolation along the grid, then equality of endpoint HI."""
    for lv in lam_grid:
        rep = block_mod.check_isolation(b, family, lam=float(lv), tols=tols)
        if not rep:
            raise ContinuationError(
                f"block stops isolating at lam = {float(lv)} (trapped "
                f"samples {rep.failures[:3]}); not a continuation")
    r0 = compute_HI(family, b, lyap0, s_decl0, lam=float(lam_grid[0]),
                    seed=seed, epsilon=epsilon, tols=tols)
    r1 = compute_HI(family, b, lyap1, s_decl1, lam=float(lam_grid[-1]),
                    seed=seed, epsilon=epsilon, tols=tols)
    return r0.homology == r1.homology, r0, r1
