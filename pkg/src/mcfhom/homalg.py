"""Exact integer homological algebra.

Matrices are lists of int rows (Python big integers throughout).  The rank
computations run twice along independent routes: Smith normal form over the
integers and fraction-free Gaussian elimination over the rationals.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from . import block as block_mod


class HomalgError(Exception):
    pass


class NotAComplexError(HomalgError):
    pass


# ---------------------------------------------------------------------------
# basic matrix helpers (dense lists of ints)

def zeros(r, c):
    return [[0] * c for _ in range(r)]


def identity(n):
    M = zeros(n, n)
    for i in range(n):
        M[i][i] = 1
    return M


def matmul(A, B):
    if not A or not B:
        return []
    n, k, m = len(A), len(B), len(B[0]) if B else 0
    out = zeros(n, m)
    for i in range(n):
        Ai = A[i]
        Oi = out[i]
        for t in range(k):
            a = Ai[t]
            if a:
                Bt = B[t]
                for j in range(m):
                    Oi[j] += a * Bt[j]
    return out


def shape(A):
    return len(A), len(A[0]) if A else 0


# ---------------------------------------------------------------------------
# Smith normal form

def smith_normal_form(A):
    """Return (diag, U, V) with U*A*V diagonal, d_i >= 1, d_i | d_{i+1},
    U and V unimodular.  ``diag`` lists only the nonzero invariant factors."""
    n, m = shape(A)
    M = [row[:] for row in A]
    U = identity(n)
    V = identity(m)

    def swap_rows(i, j):
        M[i], M[j] = M[j], M[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for row in M:
            row[i], row[j] = row[j], row[i]
        for row in V:
            row[i], row[j] = row[j], row[i]

    def add_row(src, dst, q):
        # row dst += q * row src
        Ms, Md = M[src], M[dst]
        for j in range(m):
            Md[j] += q * Ms[j]
        Us, Ud = U[src], U[dst]
        for j in range(n):
            Ud[j] += q * Us[j]

    def add_col(src, dst, q):
        for row in M:
            row[dst] += q * row[src]
        for row in V:
            row[dst] += q * row[src]

    def negate_row(i):
        M[i] = [-v for v in M[i]]
        U[i] = [-v for v in U[i]]

    t = 0
    r = min(n, m)
    while t < r:
        # pivot: smallest nonzero absolute value in the remaining block,
        # re-selected after every reduction pass to limit entry growth
        while True:
            piv = None
            best = None
            for i in range(t, n):
                for j in range(t, m):
                    v = M[i][j]
                    if v and (best is None or abs(v) < best):
                        best = abs(v)
                        piv = (i, j)
            if piv is None:
                break
            i, j = piv
            if i != t:
                swap_rows(t, i)
            if j != t:
                swap_cols(t, j)
            p = M[t][t]
            clean = True
            for i in range(t + 1, n):
                v = M[i][t]
                if v:
                    add_row(t, i, -(v // p))
                    if M[i][t]:
                        clean = False
            for j in range(t + 1, m):
                v = M[t][j]
                if v:
                    add_col(t, j, -(v // p))
                    if M[t][j]:
                        clean = False
            if clean:
                break
        if piv is None or M[t][t] == 0:
            break
        if M[t][t] < 0:
            negate_row(t)
        t += 1
    # enforce divisibility chain
    changed = True
    while changed:
        changed = False
        for i in range(t - 1):
            a, b = M[i][i], M[i + 1][i + 1]
            if b % a != 0:
                # standard 2x2 fix: add col i+1 to col i, re-reduce the block
                add_col(i + 1, i, 1)
                # now M[i+1][i] = b; clear it via row/col ops
                while True:
                    v = M[i + 1][i]
                    if v == 0:
                        break
                    q = v // M[i][i]
                    add_row(i, i + 1, -q)
                    if M[i + 1][i]:
                        swap_rows(i, i + 1)
                # clear fill-in in row i
                vij = M[i][i + 1]
                if vij:
                    q = vij // M[i][i]
                    add_col(i, i + 1, -q)
                if M[i][i] < 0:
                    negate_row(i)
                if M[i + 1][i + 1] < 0:
                    negate_row(i + 1)
                changed = True
    diag = [M[i][i] for i in range(t) if M[i][i]]
    return diag, U, V


def snf_rank(A):
    return len(smith_normal_form(A)[0])


# ---------------------------------------------------------------------------
# rational elimination (independent rank route)

def rank_fractions(A):
    """Rank over Q by Gaussian elimination with exact Fraction arithmetic."""
    n, m = shape(A)
    M = [[Fraction(v) for v in row] for row in A]
    rank = 0
    col = 0
    for col in range(m):
        piv = None
        for i in range(rank, n):
            if M[i][col]:
                piv = i
                break
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        pv = M[rank][col]
        for i in range(rank + 1, n):
            f = M[i][col] / pv
            if f:
                M[i] = [a - f * b for a, b in zip(M[i], M[rank])]
        rank += 1
        if rank == n:
            break
    return rank


def kernel_basis_fractions(A, ncols=None):
    """Basis (list of Fraction column vectors) of ker A over Q.

    ``ncols`` disambiguates the domain dimension when A has no rows."""
    n, m = shape(A)
    if not A and ncols is not None:
        m = ncols
    M = [[Fraction(v) for v in row] for row in A]
    pivots = []
    rank = 0
    for col in range(m):
        piv = None
        for i in range(rank, n):
            if M[i][col]:
                piv = i
                break
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        pv = M[rank][col]
        M[rank] = [v / pv for v in M[rank]]
        for i in range(n):
            if i != rank and M[i][col]:
                f = M[i][col]
                M[i] = [a - f * b for a, b in zip(M[i], M[rank])]
        pivots.append(col)
        rank += 1
    free = [j for j in range(m) if j not in pivots]
    basis = []
    for j in free:
        v = [Fraction(0)] * m
        v[j] = Fraction(1)
        for r, pc in enumerate(pivots):
            v[pc] = -M[r][j]
        basis.append(v)
    return basis


def solve_fractions(A, b):
    """One exact solution of A z = b over Q, or None if inconsistent.

    ``A`` is a list of rows (ints or Fractions), ``b`` a column vector.
    """
    n, m = shape(A)
    M = [[Fraction(v) for v in row] + [Fraction(b[i])]
         for i, row in enumerate(A)]
    pivots = []
    rank = 0
    for col in range(m):
        piv = None
        for i in range(rank, n):
            if M[i][col]:
                piv = i
                break
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        pv = M[rank][col]
        M[rank] = [v / pv for v in M[rank]]
        for i in range(n):
            if i != rank and M[i][col]:
                f = M[i][col]
                M[i] = [a - f * c for a, c in zip(M[i], M[rank])]
        pivots.append(col)
        rank += 1
    for i in range(rank, n):
        if M[i][m]:
            return None
    z = [Fraction(0)] * m
    for r, pc in enumerate(pivots):
        z[pc] = M[r][m]
    return z


def rank_mod2(A):
    n, m = shape(A)
    rows = []
    for row in A:
        bits = 0
        for j, v in enumerate(row):
            if v & 1:
                bits |= 1 << j
        if bits:
            rows.append(bits)
    rank = 0
    for col in range(m):
        mask = 1 << col
        piv = None
        for i in range(rank, len(rows)):
            if rows[i] & mask:
                piv = i
                break
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i] & mask:
                rows[i] ^= rows[rank]
        rank += 1
    return rank


# ---------------------------------------------------------------------------
# chain complexes and homology

@dataclass
class ChainComplex:
    """Finitely generated free complex over Z (or Z/2).

    ``dims[k]`` is the rank of C_k; ``boundaries[k]`` is the matrix of
    d_k : C_k -> C_{k-1}, shape (dims[k-1], dims[k]).  Degrees run 0..top.
    """

    dims: list
    boundaries: dict  # k -> matrix
    labels: dict = dc_field(default_factory=dict)  # k -> generator names

    @property
    def top(self):
        return len(self.dims) - 1

    def boundary(self, k):
        if k in self.boundaries:
            return self.boundaries[k]
        rows = self.dims[k - 1] if 1 <= k <= self.top else 0
        cols = self.dims[k] if 0 <= k <= self.top else 0
        return zeros(rows, cols)


def verify_d_squared(c):
    """Check d_{k} . d_{k+1} = 0 exactly; returns the first offending entry
    or None."""
    for k in range(1, c.top + 1):
        P = matmul(c.boundary(k), c.boundary(k + 1))
        for i, row in enumerate(P):
            for j, v in enumerate(row):
                if v:
                    return (k, i, j, v)
    return None


@dataclass
class HomologyResult:
    betti: list  # betti[k]
    torsion: dict  # k -> list of invariant factors > 1

    def __eq__(self, other):
        return (self.trimmed_betti() == other.trimmed_betti()
                and {k: v for k, v in self.torsion.items() if v}
                == {k: v for k, v in other.torsion.items() if v})

    def trimmed_betti(self):
        b = list(self.betti)
        while b and b[-1] == 0:
            b.pop()
        return b

    def euler(self):
        return sum((-1) ** k * b for k, b in enumerate(self.betti))

    def describe(self):
        parts = []
        for k, b in enumerate(self.betti):
            tors = self.torsion.get(k, [])
            if b == 0 and not tors:
                continue
            terms = []
            if b:
                terms.append("Z" if b == 1 else f"Z^{b}")
            terms.extend(f"Z/{d}" for d in tors)
            parts.append(f"H_{k} = " + " + ".join(terms))
        return "; ".join(parts) if parts else "0"


def homology(c, coeff="Z", check=True):
    """Homology of a chain complex; Betti numbers and torsion over Z, or
    mod-2 Betti numbers with ``coeff="Z2"``."""
    if check:
        bad = verify_d_squared(c)
        if bad is not None:
            k, i, j, v = bad
            raise NotAComplexError(
                f"d_{k} . d_{k + 1} has entry {v} at ({i}, {j})")
    betti = []
    torsion = {}
    for k in range(c.top + 1):
        dk = c.boundary(k)
        dk1 = c.boundary(k + 1)
        if coeff == "Z2":
            rk = rank_mod2(dk) if c.dims[k] else 0
            rk1 = rank_mod2(dk1)
            betti.append(c.dims[k] - rk - rk1)
        else:
            diag_k = smith_normal_form(dk)[0] if c.dims[k] else []
            diag_k1 = smith_normal_form(dk1)[0]
            betti.append(c.dims[k] - len(diag_k) - len(diag_k1))
            tors = [d for d in diag_k1 if d > 1]
            if tors:
                torsion[k] = tors
        if betti[-1] < 0:
            raise HomalgError(f"negative Betti number in degree {k}")
    return HomologyResult(betti, torsion)


# ---------------------------------------------------------------------------
# cubical chain complex

def _cell_dim(cell):
    return sum(1 for lo, hi in cell if lo != hi)


def cell_boundary(cell):
    """Signed codimension-one boundary of a cubical cell: list of
    (face_cell, sign) with sign (-1)^(number of earlier nondegenerate axes)
    times (+1 for the upper face, -1 for the lower)."""
    out = []
    nd_seen = 0
    for i, (lo, hi) in enumerate(cell):
        if lo == hi:
            continue
        sign = (-1) ** nd_seen
        upper = cell[:i] + ((hi, hi),) + cell[i + 1:]
        lower = cell[:i] + ((lo, lo),) + cell[i + 1:]
        out.append((upper, sign))
        out.append((lower, -sign))
        nd_seen += 1
    return out


def build_cubical_complex(cells, relative_to=frozenset()):
    """Chain complex of a closed cubical cell set, modulo a closed subset.

    ``cells`` must be closed under faces; ``relative_to`` likewise.  Cells
    of the subcomplex are dropped (their chain groups are quotiented away).
    """
    sub = set(relative_to)
    for c in sub:
        for f in block_mod.cell_faces(c):
            if f not in sub:
                raise HomalgError(
                    "relative subcomplex is not closed under faces")
    allcells = set(cells) | sub
    for c in allcells:
        for f in block_mod.cell_faces(c):
            if f not in allcells:
                raise HomalgError("cell set is not closed under faces")
    use = sorted(c for c in allcells if c not in sub)
    if not use:
        return ChainComplex([0], {})
    top = max(_cell_dim(c) for c in use)
    by_dim = [[] for _ in range(top + 1)]
    for c in use:
        by_dim[_cell_dim(c)].append(c)
    index = {}
    for k, lst in enumerate(by_dim):
        lst.sort()
        for i, c in enumerate(lst):
            index[c] = i
    dims = [len(lst) for lst in by_dim]
    boundaries = {}
    for k in range(1, top + 1):
        Mtx = zeros(dims[k - 1], dims[k])
        for j, c in enumerate(by_dim[k]):
            for f, sign in cell_boundary(c):
                if f in sub:
                    continue
                Mtx[index[f]][j] += sign
        boundaries[k] = Mtx
    labels = {k: [str(c) for c in lst] for k, lst in enumerate(by_dim)}
    return ChainComplex(dims, boundaries, labels)


def cubical_relative_homology(b, subcells, coeff="Z"):
    """H_*(B, A) for a GridBlock B and a closed cubical subcomplex A of
    its boundary."""
    cells = block_mod.block_cells(b)
    sub = set(subcells)
    if not sub <= cells:
        raise HomalgError("subcomplex is not contained in the block")
    return homology(build_cubical_complex(cells, sub), coeff=coeff)


# ---------------------------------------------------------------------------
# Poincare polynomials and Morse relations

@dataclass(frozen=True)
class PoincarePolynomial:
    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    def __add__(self, other):
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [0] * (n - len(self.coeffs))
        b = list(other.coeffs) + [0] * (n - len(other.coeffs))
        return PoincarePolynomial(tuple(x + y for x, y in zip(a, b)))

    def __call__(self, t):
        return sum(c * t ** k for k, c in enumerate(self.coeffs))

    def __str__(self):
        if not self.coeffs:
            return "0"
        terms = []
        for k, c in enumerate(self.coeffs):
            if c == 0:
                continue
            if k == 0:
                terms.append(str(c))
            else:
                tk = "t" if k == 1 else f"t^{k}"
                terms.append(tk if c == 1 else f"{c}*{tk}")
        return " + ".join(terms) if terms else "0"


def _trim(coeffs):
    c = list(coeffs)
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


def poincare(h):
    """Free ranks as a polynomial; torsion carries no rank and is reported
    separately on the HomologyResult."""
    return PoincarePolynomial(tuple(h.betti))


class RelationsError(HomalgError):
    pass


def relations_check(parts, whole):
    """Check Sum_i P_t(part_i) = P_t(whole) + (1+t) Q_t; return Q_t.

    The deficit polynomial must be divisible by (1+t) with nonnegative
    quotient coefficients, otherwise the data is inconsistent with a Morse
    decomposition."""
    total = PoincarePolynomial(())
    for p in parts:
        total = total + p
    n = max(len(total.coeffs), len(whole.coeffs))
    a = list(total.coeffs) + [0] * (n - len(total.coeffs))
    b = list(whole.coeffs) + [0] * (n - len(whole.coeffs))
    deficit = [x - y for x, y in zip(a, b)]
    # synthetic division of deficit by (1 + t), low degree first:
    # d_0 = q_0, d_k = q_k + q_{k-1}
    q = []
    prev = 0
    for d in deficit:
        qk = d - prev
        q.append(qk)
        prev = qk
    if prev != 0:
        raise RelationsError(
            "data inconsistent with a Morse decomposition: "
            f"(1+t) does not divide the deficit (remainder {prev})")
    if any(v < 0 for v in q):
        raise RelationsError(
            "data inconsistent with a Morse decomposition: "
            f"negative coefficient in Q_t = {q}")
    return PoincarePolynomial(tuple(q))
