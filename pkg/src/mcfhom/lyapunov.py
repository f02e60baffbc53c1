"""Lyapunov verification, convex combinations, and Morse perturbations.

A Lyapunov function decreases strictly along the flow away from the
invariant set.  The invariant set is user-declared as a collar (sample
points plus a radius); verification treats the declaration as an
assumption and reports against it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import block as block_mod
from . import expr
from .config import DEFAULT


class LyapunovError(Exception):
    pass


class CertificationError(LyapunovError):
    def __init__(self, lam, reason):
        super().__init__(
            f"homotopy certificate failed at lambda={lam}: {reason}")
        self.lam = lam


@dataclass(frozen=True)
class SDeclaration:
    """User-declared invariant set: sample points, collar radius, and the
    tolerance within which f must be constant across the samples.

    For a fat invariant set (for example an interval of equilibria) a
    Lyapunov function is constant on S only up to the declared tolerance;
    the declaration owns that bound so that verification stays honest.
    """

    samples: tuple  # tuple of coordinate tuples; may be empty
    radius: float
    value_tol: float = 1e-8


@dataclass
class LyapunovReport:
    verdict: bool
    min_decrease: float  # minimum of -df.X over the sampled region
    min_location: tuple
    collar_radius: float
    value_spread: float  # max |f(s_i) - f(s_j)| over declared S samples
    violating_sample: tuple = None

    def __bool__(self):
        return self.verdict


def _lattice(b, n):
    lo, hi = b.bounding_box()
    axes = [np.linspace(lo[i], hi[i], n) for i in range(b.dimension)]
    grid = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grid], axis=-1)
    return [p for p in pts if b.contains(p)]


def verify_lyapunov(f, fieldd, b, s_decl, samples=None, lam=None,
                    tols=DEFAULT):
    """Check df.X < 0 on a lattice over the block outside the S collar,
    and that f is constant over the declared S samples."""
    m = b.dimension
    n = tols.verify_samples if samples is None else samples
    df = [expr.compile_scalar(expr.derive(f, i)) for i in range(m)]
    F = expr.compile_field(fieldd)
    fval = expr.compile_scalar(f)

    from .flow import field_scale
    scale = field_scale(fieldd, b, lam)
    tol = tols.strict_decrease_tol * max(scale, 1.0)

    s_pts = [np.asarray(s, dtype=float) for s in s_decl.samples]
    rad = s_decl.radius

    best = math.inf
    best_loc = None
    violating = None
    for p in _lattice(b, n):
        if s_pts and min(float(np.linalg.norm(p - s)) for s in s_pts) <= rad:
            continue
        X = F(p, lam)
        decrease = -sum(df[i](p, lam) * X[i] for i in range(m))
        if decrease < best:
            best = decrease
            best_loc = tuple(float(v) for v in p)
        if decrease <= tol and violating is None:
            violating = tuple(float(v) for v in p)
    spread = 0.0
    if s_pts:
        vals = [fval(s, lam) for s in s_pts]
        spread = max(vals) - min(vals)
    verdict = bool((best > tol if best_loc is not None else True)
                   and spread <= s_decl.value_tol)
    if best_loc is None:
        best = math.inf
    return LyapunovReport(verdict, best, best_loc, rad, spread, violating)


def combine(fa, fb, lam_coeff, mu_coeff):
    """Convex-cone combination lam*fa + mu*fb of Lyapunov functions; any
    positive coefficients preserve the Lyapunov property."""
    if lam_coeff <= 0 or mu_coeff <= 0:
        raise LyapunovError("combination coefficients must be positive")
    return expr.add(expr.mul(expr.Const(float(lam_coeff)), fa),
                    expr.mul(expr.Const(float(mu_coeff)), fb))


def shift(c, f, mu_coeff=1.0):
    """Affine shift c + mu*f, also Lyapunov for mu > 0."""
    if mu_coeff <= 0:
        raise LyapunovError("scale coefficient must be positive")
    return expr.add(expr.Const(float(c)),
                    expr.mul(expr.Const(float(mu_coeff)), f))


@dataclass
class HomotopyCertificate:
    lambdas: tuple
    min_boundary_gradient: float  # min |grad f_lam| over boundary samples


def linear_perturbation(m, rng):
    """Random unit-direction linear form sum_i c_i x_i."""
    c = rng.standard_normal(m)
    c /= np.linalg.norm(c)
    out = expr.ZERO
    for i in range(m):
        out = expr.add(out, expr.mul(expr.Const(float(c[i])), expr.Var(i)))
    return out


def morse_perturb(base, b, epsilon=None, perturbation=None, rng=None,
                  lam=None, tols=DEFAULT):
    """Perturb a Lyapunov function to a Morse function on the block.

    Returns (perturbed Expr, HomotopyCertificate).  The certificate checks,
    on a lambda grid in [0, 1], that the gradient flow of
    base + lambda*eps*perturbation keeps the block isolating and that no
    critical point of the interpolant touches the boundary (minimum
    gradient norm over boundary samples stays positive).
    """
    eps = tols.epsilon if epsilon is None else epsilon
    if eps <= 0:
        raise LyapunovError("perturbation magnitude must be positive")
    if perturbation is None:
        if rng is None:
            rng = np.random.default_rng(0)
        perturbation = linear_perturbation(b.dimension, rng)
    perturbed = expr.add(base, expr.mul(expr.Const(float(eps)), perturbation))

    m = b.dimension
    steps = tols.cert_lambda_steps
    lambdas = tuple(i / steps for i in range(steps + 1))
    min_bgrad = math.inf
    for lv in lambdas:
        interp = expr.add(base,
                          expr.mul(expr.Const(float(lv * eps)), perturbation))
        grad = [expr.compile_scalar(g) for g in expr.gradient(interp, m)]
        for face, s in b.boundary_samples(tols.isolation_samples_per_face):
            gn = math.sqrt(sum(g(s, lam) ** 2 for g in grad))
            min_bgrad = min(min_bgrad, gn)
            if gn <= tols.margin_tol:
                raise CertificationError(
                    lv, f"critical point of the interpolant touches the "
                        f"boundary near {tuple(float(v) for v in s)}")
        gradfield = expr.negative_gradient(interp, m)
        rep = block_mod.check_isolation(b, gradfield, lam=lam, tols=tols)
        if not rep:
            raise CertificationError(
                lv, f"block stops isolating (trapped boundary samples "
                    f"{rep.failures[:3]})")
    return perturbed, HomotopyCertificate(lambdas, min_bgrad)
