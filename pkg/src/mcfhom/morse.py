"""Critical points, signed connecting-orbit counts, and the Morse chain
complex of a gradient flow on a cubical block.

Connections are counted only between critical points of adjacent index.
For an index-k source the seeds live on a small sphere inside the unstable
eigenspace; basin boundaries on that sphere are isolated by adaptive
bisection and each witness orbit receives a sign by transporting the
source's unstable frame along it.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import expr, flow, homalg
from .config import DEFAULT


class MorseError(Exception):
    pass


class DegenerateCriticalPointError(MorseError):
    def __init__(self, coords, margin):
        super().__init__(
            f"degenerate critical point at {coords} "
            f"(eigenvalue margin {margin:.3e}); re-perturb")
        self.coords = coords
        self.margin = margin


class OrientationError(MorseError):
    pass


@dataclass(frozen=True)
class CriticalPoint:
    ident: int
    coords: tuple
    f_value: float
    eigenvalues: tuple  # ascending
    index: int          # number of negative eigenvalues
    margin: float       # min |eigenvalue|
    frame: tuple        # unstable eigenvectors, ascending eigenvalue order

    def frame_matrix(self):
        return (np.column_stack([np.asarray(v) for v in self.frame])
                if self.frame else np.zeros((len(self.coords), 0)))


def _sign_normalize(v):
    for c in v:
        if abs(c) > 1e-12:
            return v if c > 0 else -v
    return v


def find_critical_points(f, b, lam=None, tols=DEFAULT):
    """Newton search for critical points of f inside the block.

    Seeds form a lattice over the bounding box; converged roots are kept if
    they lie in the block, deduplicated, and checked for nondegeneracy.
    """
    m = b.dimension
    grad = [expr.compile_scalar(g) for g in expr.gradient(f, m)]
    hess = [[expr.compile_scalar(e) for e in row]
            for row in expr.hessian(f, m)]

    def gradv(p):
        return np.array([g(p, lam) for g in grad])

    def hessm(p):
        return np.array([[e(p, lam) for e in row] for row in hess])

    lo, hi = b.bounding_box()
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    span = hi - lo
    axes = [np.linspace(lo[i], hi[i], tols.seed_density) for i in range(m)]
    seeds = [np.array(p) for p in itertools.product(*axes)]
    found = []
    dedupe = max(10 * tols.newton_tol, 1e-8)
    for s in seeds:
        p = s.copy()
        ok = False
        for _ in range(80):
            try:
                g = gradv(p)
            except (ValueError, ZeroDivisionError, OverflowError):
                break
            if not np.all(np.isfinite(g)):
                break
            if float(np.linalg.norm(g)) < tols.newton_tol:
                ok = True
                break
            H = hessm(p)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
            # crude damping to keep iterates near the block
            ns = float(np.linalg.norm(step))
            if ns > float(np.max(span)):
                step *= float(np.max(span)) / ns
            p = p - step
            if np.any(p < lo - span) or np.any(p > hi + span):
                break
        if not ok or not b.contains(p):
            continue
        if any(float(np.linalg.norm(p - q)) < dedupe for q in found):
            continue
        found.append(p)
    crits = []
    for i, p in enumerate(sorted(found, key=lambda q: tuple(q))):
        H = hessm(p)
        H = 0.5 * (H + H.T)
        evals, evecs = np.linalg.eigh(H)
        margin = float(np.min(np.abs(evals)))
        if margin <= tols.margin_tol:
            raise DegenerateCriticalPointError(
                tuple(float(v) for v in p), margin)
        k = int(np.sum(evals < 0))
        frame = tuple(tuple(float(v) for v in _sign_normalize(evecs[:, j]))
                      for j in range(k))
        fv = expr.compile_scalar(f)(p, lam)
        crits.append(CriticalPoint(
            ident=i,
            coords=tuple(float(v) for v in p),
            f_value=float(fv),
            eigenvalues=tuple(float(v) for v in evals),
            index=k,
            margin=margin,
            frame=frame))
    return crits


@dataclass
class Witness:
    direction: tuple  # coefficients on the unstable sphere of the source
    sign: int
    capture_time: float


@dataclass
class ConnectionCount:
    source: int
    target: int
    n: int
    witnesses: list


# ---------------------------------------------------------------------------
# direction-sphere refinement

def _initial_simplices(k, n_min, rot):
    """Triangulated unit sphere S^{k-1} in coefficient space: the boundary
    of the cross-polytope, uniformly refined until at least ``n_min``
    vertices, then rotated to avoid axis coincidences."""
    if k == 1:
        return [(np.array([1.0]),), (np.array([-1.0]),)]
    simplices = []
    for signs in itertools.product((-1.0, 1.0), repeat=k):
        verts = []
        for i in range(k):
            e = np.zeros(k)
            e[i] = signs[i]
            verts.append(e)
        simplices.append(tuple(verts))
    while _vertex_count(simplices) < n_min:
        simplices = [s for sp in simplices for s in _split(sp)]
    return [tuple(rot @ v for v in sp) for sp in simplices]


def _vertex_count(simplices):
    seen = set()
    for sp in simplices:
        for v in sp:
            seen.add(tuple(np.round(v, 12)))
    return len(seen)


def _split(sp):
    """Longest-edge bisection with the new vertex pushed to the sphere."""
    besti, bestj, bestd = 0, 1, -1.0
    for i in range(len(sp)):
        for j in range(i + 1, len(sp)):
            d = float(np.linalg.norm(sp[i] - sp[j]))
            if d > bestd:
                besti, bestj, bestd = i, j, d
    mid = 0.5 * (sp[besti] + sp[bestj])
    mid = mid / np.linalg.norm(mid)
    a = tuple(mid if t == bestj else v for t, v in enumerate(sp))
    bsp = tuple(mid if t == besti else v for t, v in enumerate(sp))
    return [a, bsp]


def _diameter(sp):
    return max(float(np.linalg.norm(a - b))
               for a, b in itertools.combinations(sp, 2)) if len(sp) > 1 else 0.0


class ConnectionFinder:
    """Counts connecting orbits from one source critical point to every
    index-adjacent target, sharing the direction labeling across targets."""

    def __init__(self, f, gradfield, b, crits, lam=None, tols=DEFAULT,
                 seed=0):
        self.f = f
        self.gradfield = gradfield
        self.b = b
        self.crits = crits
        self.by_id = {c.ident: c for c in crits}
        self.lam = lam
        self.tols = tols
        self.scale = flow.field_scale(gradfield, b, lam)
        self.grad = [expr.compile_scalar(g)
                     for g in expr.gradient(f, b.dimension)]
        rng = np.random.default_rng(seed)
        self._rngs = {}
        self.seed = seed
        self._witnesses = {}  # source ident -> {target ident: [Witness]}
        self._budget_hits = 0

    def _rotation(self, k):
        if k not in self._rngs:
            rng = np.random.default_rng((self.seed, k))
            A = rng.standard_normal((k, k))
            Q, R = np.linalg.qr(A)
            Q = Q * np.sign(np.diag(R))
            self._rngs[k] = Q
        return self._rngs[k]

    def _seed_point(self, x, d):
        U = x.frame_matrix()
        return np.asarray(x.coords) + self.tols.delta_u * (U @ d)

    def _label(self, x, d):
        """Classify the orbit leaving x along direction d (coefficients in
        the unstable eigenspace)."""
        p0 = self._seed_point(x, d)
        lc, traj = flow.classify_limit(
            self.gradfield, p0, self.crits, self.b, tols=self.tols,
            lam=self.lam, scale=self.scale)
        if lc.tag == "converged":
            return ("crit", lc.crit_id), traj
        if lc.tag == "exited":
            return ("exit",), traj
        self._budget_hits += 1
        return ("budget",), traj

    def witnesses_for(self, source_ident):
        if source_ident not in self._witnesses:
            self._witnesses[source_ident] = self._search(
                self.by_id[source_ident])
        return self._witnesses[source_ident]

    def _search(self, x):
        k = x.index
        out = {}
        if k == 0:
            return out
        targets = {c.ident for c in self.crits if c.index == k - 1}
        if not targets:
            return out
        found = []  # (direction ndarray, target ident, capture time)
        labels = {}

        def label_of(d):
            # Every capture of a target is recorded the moment it is seen:
            # refinement vertices that land inside a capture window are just
            # as valid witnesses as the initial seeds, and the windows can be
            # far narrower than the seed spacing.  _collect merges the
            # cluster of directions inside one window into a single witness.
            key = tuple(np.round(d, 14))
            if key not in labels:
                lab, traj = self._label(x, d)
                labels[key] = (lab, traj.ts[-1] if traj.ts else 0.0)
                if lab[0] == "crit" and lab[1] in targets:
                    found.append((np.asarray(d, float), lab[1],
                                  abs(labels[key][1])))
            return labels[key]

        rot = self._rotation(k) if k > 1 else np.eye(1)
        work = list(_initial_simplices(k, self.tols.n_dir_seeds, rot))
        for sp in work:
            for v in sp:
                label_of(v)
        budget_warned = False
        while work:
            sp = work.pop()
            labs = []
            for v in sp:
                lab, t = label_of(v)
                labs.append(lab)
            if any(l[0] == "budget" for l in labs):
                if not budget_warned:
                    warnings.warn(
                        "time budget exceeded while labeling directions; "
                        "treating as non-connecting", stacklevel=2)
                    budget_warned = True
                labs = [l for l in labs if l[0] != "budget"]
            if len(set(labs)) < 2:
                continue
            if _diameter(sp) < self.tols.dir_tol:
                mid = sum(sp) / len(sp)
                label_of(mid / np.linalg.norm(mid))
                continue
            work.extend(_split(sp) if len(sp) > 1 else [])
        return self._collect(x, found)

    def _same_orbit(self, x, tgt, d1, d2):
        """Two directions converging to the same target represent one
        connecting orbit iff their geodesic midpoint also converges to it
        (the capture window around a transverse orbit is connected)."""
        mid = d1 + d2
        nm = float(np.linalg.norm(mid))
        if nm < 1e-12:
            return False
        lab, _ = self._label(x, mid / nm)
        return lab == ("crit", tgt)

    def _collect(self, x, found):
        """Cluster witness directions and attach signs."""
        out = {}
        cluster_tol = max(100 * self.tols.dir_tol, 1e-8)
        by_target = {}
        for d, tgt, t in found:
            by_target.setdefault(tgt, []).append((d, t))
        for tgt, items in by_target.items():
            reps = []
            for d, t in items:
                for rep in reps:
                    if (float(np.linalg.norm(d - rep[0])) < cluster_tol
                            or self._same_orbit(x, tgt, d, rep[0])):
                        break
                else:
                    reps.append((d, t))
            ws = []
            for d, t in reps:
                sign = self._orientation_sign(x, self.by_id[tgt], d, t)
                ws.append(Witness(tuple(float(v) for v in d), sign, t))
            out[tgt] = ws
        return out

    def _orientation_sign(self, x, y, d, t_capture):
        """Sign of a witness orbit: transport the unstable frame of x along
        the orbit, then express it in the basis (flow direction at the
        arrival point) + (unstable frame of y); the determinant sign of
        that change of basis is the orientation number."""
        p0 = self._seed_point(x, d)
        frame = [np.asarray(v, float) for v in x.frame]
        W, p = flow.transport_frame(
            self.gradfield, p0, t_capture, frame, lam=self.lam,
            tols=self.tols)
        v_flow = -np.array([g(p, self.lam) for g in self.grad])
        nf = float(np.linalg.norm(v_flow))
        if nf == 0.0:
            raise OrientationError(
                "zero flow direction at the arrival point")
        cols = [v_flow / nf]
        cols.extend(np.asarray(v, float) for v in y.frame)
        B = np.column_stack(cols)
        Wm = np.column_stack(W)
        C, *_ = np.linalg.lstsq(B, Wm, rcond=None)
        det = float(np.linalg.det(C))
        if abs(det) < self.tols.det_tol:
            raise OrientationError(
                f"orientation unresolved for connection "
                f"{x.ident} -> {y.ident} (|det| = {abs(det):.3e}); "
                f"tighten tolerances")
        return 1 if det > 0 else -1


def count_connections(x, y, finder, coeff="Z"):
    """Signed count of connecting orbits from x down to y (adjacent index).
    """
    if x.index != y.index + 1:
        raise MorseError(
            f"index difference must be 1, got {x.index} -> {y.index}")
    ws = finder.witnesses_for(x.ident).get(y.ident, [])
    n = sum(w.sign for w in ws)
    if coeff == "Z2":
        n = len(ws) % 2
    return ConnectionCount(x.ident, y.ident, n, ws)


def build_complex(f, b, crits, finder=None, lam=None, tols=DEFAULT,
                  coeff="Z", seed=0, gradfield=None):
    """Assemble the Morse chain complex over the given critical points and
    verify d^2 = 0 exactly."""
    if gradfield is None:
        gradfield = expr.negative_gradient(f, b.dimension)
    if finder is None:
        finder = ConnectionFinder(f, gradfield, b, crits, lam=lam,
                                  tols=tols, seed=seed)
    top = max((c.index for c in crits), default=0)
    gens = [[c for c in crits if c.index == k] for k in range(top + 1)]
    dims = [len(g) for g in gens]
    boundaries = {}
    counts = []
    for k in range(1, top + 1):
        M = homalg.zeros(dims[k - 1], dims[k])
        for j, x in enumerate(gens[k]):
            for i, y in enumerate(gens[k - 1]):
                cc = count_connections(x, y, finder, coeff=coeff)
                counts.append(cc)
                M[i][j] = cc.n
        boundaries[k] = M
    labels = {k: [str(c.coords) for c in g] for k, g in enumerate(gens)}
    c = homalg.ChainComplex(dims, boundaries, labels)
    bad = homalg.verify_d_squared(c)
    if bad is not None and coeff != "Z2":
        kk, i, j, v = bad
        raise MorseError(
            f"d^2 != 0: (d_{kk} d_{kk + 1}) entry ({i}, {j}) = {v}; "
            f"a connecting orbit was missed or double-counted")
    if coeff == "Z2":
        # check mod 2
        for k in range(1, top):
            P = homalg.matmul(c.boundary(k), c.boundary(k + 1))
            for row in P:
                for v in row:
                    if v % 2:
                        raise MorseError("d^2 != 0 over Z/2")
    return c, counts


def verify_d_squared(c):
    return homalg.verify_d_squared(c)
