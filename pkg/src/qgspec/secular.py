"""Secular system of a quantum graph and certified eigenvalue search.

Unknowns are ``(u_e(0), u_e'(0))`` for every edge. For a spectral parameter
``lam`` each vertex contributes ``deg(v)`` rows ``A_v F(v) + B_v dF(v) = 0`` where
the traces at the head of an edge come from the propagator.

Eigenvalues are located with the exact counting function

    N(lam) = sum_e N_D,e(lam) + n_-(Q(lam)),

where ``N_D,e`` counts Dirichlet eigenvalues of the decoupled edges (Sturm
oscillation) and ``Q(lam)`` is the quadratic form restricted to ``lam``-harmonic
functions, i.e. minus the Dirichlet-to-Neumann map on the admissible trace space
plus the vertex terms. Bisection on ``N`` finds each eigenvalue and its
multiplicity without relying on sign changes of a determinant.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .conditions import (
    ConditionError,
    Delta,
    DeltaPrime,
    VertexConditionSet,
    check_self_adjoint,
    to_ab_pairs,
    trace_parametrization,
)
from .graph import MetricGraph, degree, total_length
from .potential import as_potential, sup_norm
from .propagator import EdgeSolver

log = logging.getLogger(__name__)

ROOT_RTOL = 1e-11
CLUSTER_RTOL = 1e-9
LOOSE_RTOL = 1e-7
MAX_FEM_ELEMENTS = 6_000_000


class SpectrumError(RuntimeError):
    pass


class CertificateError(SpectrumError):
    pass


@dataclass
class Certificate:
    window_top: float
    secular_count: int
    fem_counts: tuple[int, ...] = ()
    fem_h: tuple[float, ...] = ()
    weyl_estimate: int = 0
    weyl_ok: bool = True
    nullity_mismatch: list[int] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def fem_ok(self) -> bool:
        return bool(self.fem_counts) and all(c == self.secular_count for c in self.fem_counts)

    @property
    def passed(self) -> bool:
        return self.fem_ok and self.weyl_ok and not self.nullity_mismatch

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        fem = ", ".join(f"{c} (h={h:.3g})" for c, h in zip(self.fem_counts, self.fem_h)) or "not run"
        s = (
            f"{state}: secular count {self.secular_count} below {self.window_top:.10g}; "
            f"FEM count {fem}; Weyl estimate {self.weyl_estimate} ({'ok' if self.weyl_ok else 'off'})"
        )
        if self.nullity_mismatch:
            s += f"; nullity mismatch at indices {self.nullity_mismatch}"
        for n in self.notes:
            s += f"; {n}"
        return s


@dataclass
class Spectrum:
    """Sorted eigenvalues with multiplicities expanded.

    ``offset`` is the number of eigenvalues below the first listed one, so
    ``values[i]`` is eigenvalue number ``offset + i + 1``.
    """

    values: np.ndarray
    multiplicity: np.ndarray  # multiplicity of the cluster each entry belongs to
    cluster_start: np.ndarray  # position of the first entry of each cluster
    window: tuple[float, float]
    certificate: Certificate | None = None
    offset: int = 0

    def __len__(self):
        return len(self.values)

    def first(self, n: int) -> np.ndarray:
        if n > len(self.values):
            raise SpectrumError(f"spectrum holds {len(self.values)} eigenvalues, {n} requested")
        return self.values[:n]

    def clusters(self) -> list[tuple[int, int, float]]:
        """``(start position, multiplicity, value)`` for every distinct eigenvalue."""
        out = []
        for s in self.cluster_start:
            m = int(self.multiplicity[s])
            out.append((int(s), m, float(self.values[s])))
        return out

    def complete_through(self, n: int) -> int:
        """Smallest N >= n that ends on a cluster boundary (None if beyond the list)."""
        for s, m, _ in self.clusters():
            if s + m >= n:
                return s + m if s + m <= len(self.values) else None
        return None

    @property
    def certified(self) -> bool:
        return self.certificate is not None and self.certificate.passed


class SecularSystem:
    def __init__(self, g: MetricGraph, conditions: VertexConditionSet, q=None):
        conditions.validate(g)
        self.graph = g
        self.conditions = conditions
        self.potential = as_potential(q)
        self.potential.validate(g)
        self.solvers = [EdgeSolver.for_edge(g, self.potential, e.id) for e in g.edges]
        self.ab = to_ab_pairs(g, conditions)
        for v, p in self.ab.items():
            if not check_self_adjoint(p):
                raise ConditionError(f"vertex {v}: condition is not self-adjoint")
        n = 2 * g.n_edges
        self.size = n
        A = np.zeros((n, n))
        B = np.zeros((n, n))
        Tcols, Wblocks = [], []
        row = 0
        for v in g.vertices:
            slots = [2 * e + end for e, end in g.incidences(v)]
            d = len(slots)
            p = self.ab[v]
            A[row:row + d, slots] = p.A
            B[row:row + d, slots] = p.B
            row += d
            Tv, Wv = trace_parametrization(conditions[v], d)
            for j in range(Tv.shape[1]):
                col = np.zeros(n)
                col[slots] = Tv[:, j]
                Tcols.append(col)
            Wblocks.append(Wv)
        self.A_rows, self.B_rows = A, B
        self._a_norm = np.linalg.norm(A, axis=1)
        self._b_norm = np.linalg.norm(B, axis=1)
        self.T = np.array(Tcols).T if Tcols else np.zeros((n, 0))
        self.W = scipy.linalg.block_diag(*Wblocks) if Tcols else np.zeros((0, 0))
        self.total_length = total_length(g)

    # -- evaluation at lam -----------------------------------------------------

    def _end_data(self, lam: np.ndarray):
        Ms, nd = [], np.zeros(lam.shape, dtype=np.int64)
        for s in self.solvers:
            M, c = s.sweep(lam)
            Ms.append(M)
            nd += c
        return np.stack(Ms, axis=-3), nd  # (..., E, 2, 2)

    def matrix(self, lam) -> np.ndarray:
        """Row-scaled secular matrices, shape ``lam.shape + (2E, 2E)``.

        Columns are ``(u_e(0), u_e'(0)/s)`` with ``s = sqrt(1 + |lam|)``.
        """
        lam = np.atleast_1d(np.asarray(lam, float))
        M, _ = self._end_data(lam)
        return self._matrix_from(lam, M)

    def _matrix_from(self, lam, M):
        E = self.graph.n_edges
        n = 2 * E
        s = np.sqrt(1.0 + np.abs(lam))
        val = np.zeros(lam.shape + (n, n))
        der = np.zeros(lam.shape + (n, n))
        idx = np.arange(E)
        val[..., 2 * idx, 2 * idx] = 1.0
        der[..., 2 * idx, 2 * idx + 1] = 1.0
        val[..., 2 * idx + 1, 2 * idx] = M[..., 0, 0]
        val[..., 2 * idx + 1, 2 * idx + 1] = M[..., 0, 1] * s[..., None]
        der[..., 2 * idx + 1, 2 * idx] = -M[..., 1, 0] / s[..., None]
        der[..., 2 * idx + 1, 2 * idx + 1] = -M[..., 1, 1]
        S = self.A_rows @ val + s[..., None, None] * (self.B_rows @ der)
        # scale rows by their coefficient size, not by their value: a row that
        # vanishes identically (continuity along a loop at a Dirichlet
        # eigenvalue of that loop) must stay zero
        S /= (self._a_norm + s[..., None] * self._b_norm)[..., None]
        return S

    def secular_values(self, lam) -> tuple[np.ndarray, np.ndarray]:
        """Determinant proxy (sign-tracked, bounded by 1 in modulus) and smallest singular value."""
        S = self.matrix(lam)
        sign, logdet = np.linalg.slogdet(S)
        sv = np.linalg.svd(S, compute_uv=False)
        return sign * np.exp(logdet), sv[..., -1]

    def form_matrix(self, lam) -> tuple[np.ndarray, np.ndarray]:
        """``Q(lam)`` on the admissible trace space and the Dirichlet counts."""
        lam = np.atleast_1d(np.asarray(lam, float))
        M, nd = self._end_data(lam)
        return self._form_from(M), nd

    def _form_from(self, M):
        E = self.graph.n_edges
        n = 2 * E
        K = np.zeros(M.shape[:-3] + (n, n))
        inv = 1.0 / M[..., 0, 1]
        idx = np.arange(E)
        K[..., 2 * idx, 2 * idx] = M[..., 0, 0] * inv
        K[..., 2 * idx + 1, 2 * idx + 1] = M[..., 1, 1] * inv
        K[..., 2 * idx, 2 * idx + 1] = -inv
        K[..., 2 * idx + 1, 2 * idx] = -inv
        return self.T.T @ K @ self.T + self.W

    def count(self, lam) -> np.ndarray:
        """Exact number of eigenvalues strictly below each ``lam`` (counted with multiplicity)."""
        lam = np.atleast_1d(np.asarray(lam, float))
        Q, nd = self.form_matrix(lam)
        if Q.shape[-1] == 0:
            return nd
        w = np.linalg.eigvalsh(Q)
        return nd + (w < 0).sum(axis=-1)

    # -- search ----------------------------------------------------------------

    def lower_bound(self) -> float:
        """Safe value below the spectrum: negative couplings plus the potential floor."""
        g = self.graph
        b = sup_norm(self.potential, g)
        for v in g.vertices:
            c = self.conditions[v]
            if isinstance(c, Delta) and c.sigma < 0:
                b += c.sigma ** 2
            elif isinstance(c, DeltaPrime) and c.beta < 0:
                b += (degree(g, v) / c.beta) ** 2
        lo = -b - 1.0
        for _ in range(60):
            if self.count(lo)[0] == 0:
                return lo
            lo = 2.0 * lo - 1.0
        raise SpectrumError("could not find a lower bound for the spectrum")

    def _bracket_above(self, n: int, lo: float) -> float:
        L = self.total_length
        k = math.pi * (n + 2 * self.graph.n_edges + 2) / L
        hi = k * k + sup_norm(self.potential, self.graph) + 1.0
        while self.count(hi)[0] < n:
            hi = 4.0 * hi + 1.0
        return hi

    def _grid(self, lo: float, hi: float) -> np.ndarray:
        L = self.total_length
        dk = 0.25 * math.pi / L
        parts = []
        if lo < 0:
            parts.append(np.linspace(lo, 0.0, 17)[:-1])
        k_hi = math.sqrt(max(hi, 0.0))
        # irrational offset keeps grid points off Dirichlet edge eigenvalues
        ks = (np.arange(0, int(k_hi / dk) + 2) + 0.381966011250105) * dk
        parts.append(ks * ks)
        grid = np.concatenate(parts)
        grid = grid[(grid > lo) & (grid < hi)]
        return np.concatenate([[lo], grid, [hi]])

    def _bisect(self, targets: np.ndarray, a: np.ndarray, b: np.ndarray, jobs: int = 1) -> np.ndarray:
        """For each target index n find ``lam_n = sup{lam : N(lam) < n}``."""

        def run(t, a, b):
            a, b = a.copy(), b.copy()
            for _ in range(200):
                tol = ROOT_RTOL * (1.0 + np.abs(a))
                act = (b - a) > tol
                if not act.any():
                    break
                mid = 0.5 * (a[act] + b[act])
                c = self.count(mid)
                lower = c < t[act]
                ia = np.flatnonzero(act)
                a[ia[lower]] = mid[lower]
                b[ia[~lower]] = mid[~lower]
            return 0.5 * (a + b)

        if jobs <= 1 or len(targets) < 64:
            return run(targets, a, b)
        chunks = np.array_split(np.arange(len(targets)), jobs)
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(lambda ix: run(targets[ix], a[ix], b[ix]), chunks))
        return np.concatenate(parts)

    def _indices(self, first: int, last: int, lo: float, hi: float, jobs: int) -> np.ndarray:
        """Eigenvalues number ``first..last`` (1-based), given N(lo) < first and N(hi) >= last."""
        grid = self._grid(lo, hi)
        counts = self.count(grid)
        counts = np.maximum.accumulate(counts)
        targets = np.arange(first, last + 1)
        # bracket: a = last grid point with count < n, b = first with count >= n
        ib = np.searchsorted(counts, targets, side="left")
        ib = np.clip(ib, 1, len(grid) - 1)
        a, b = grid[ib - 1], grid[ib]
        return self._bisect(targets, a.astype(float), b.astype(float), jobs)

    def find_spectrum(
        self,
        n: int | None = None,
        window: tuple[float, float] | None = None,
        certify: bool = True,
        jobs: int = 1,
    ) -> Spectrum:
        """All eigenvalues in ``window`` (lo < lam <= hi) or the first ``n``.

        A trailing degenerate cluster is always completed, so ``len(result)`` can
        exceed ``n``. With ``certify`` the count is checked against the FEM oracle
        and the Weyl estimate; a mismatch raises :class:`CertificateError`.
        """
        if (n is None) == (window is None):
            raise ValueError("give exactly one of n or window")
        floor = self.lower_bound()
        if n is not None:
            if n < 1:
                raise ValueError("n must be positive")
            first, lo = 1, floor
            hi = self._bracket_above(n + 1, floor)
            last = n
        else:
            wlo, whi = map(float, window)
            if not whi > wlo:
                raise ValueError("empty window")
            lo = max(wlo + 1e-9 * (1 + abs(wlo)), floor)
            hi = whi + 1e-9 * (1 + abs(whi))
            first = int(self.count(lo)[0]) + 1
            last = int(self.count(hi)[0])
            lo, hi = floor, self._bracket_above(last + 1, floor)
            if last < first:
                return Spectrum(np.zeros(0), np.zeros(0, int), np.zeros(0, int), (wlo, whi),
                                self._certify_empty(whi) if certify else None, first - 1)
        vals = self._indices(first, last + 1, lo, hi, jobs)
        # complete a trailing cluster
        while abs(vals[-1] - vals[-2]) <= LOOSE_RTOL * (1 + abs(vals[-1])):
            more = self._indices(len(vals) + first, len(vals) + first, lo,
                                 self._bracket_above(len(vals) + first, lo), jobs)
            vals = np.concatenate([vals, more])
        next_val = vals[-1]
        vals = np.sort(vals[:-1])
        vals, mult, starts = self._resolve_clusters(vals, next_val)
        spec = Spectrum(vals, mult, starts, (float(lo) if window is None else window[0],
                                             float(vals[-1]) if window is None else window[1]),
                        offset=first - 1)
        if certify:
            nxt = first + len(vals) + 1  # index of next_val
            k = 2 * self.graph.n_edges + 2
            more = self._indices(nxt, nxt + k - 2, lo, self._bracket_above(nxt + k - 1, lo), jobs)
            spec.certificate = self.certify(spec, np.sort(np.concatenate([[next_val], more])))
            if not spec.certificate.passed:
                raise CertificateError(spec.certificate.summary())
        return spec

    def _resolve_clusters(self, vals: np.ndarray, next_val: float):
        """Group bisection roots into clusters and polish their centres.

        Roots on an edge Dirichlet eigenvalue are only resolved to about
        ``1e-8`` relative by counting, so candidates are grouped loosely first;
        a loose group is kept only if the secular nullity at its polished centre
        equals its size, otherwise it is split into tight groups.
        """
        ext = np.concatenate([[-np.inf], vals, [next_val]])

        def polish(groups):
            st = np.array([g[0] for g in groups], dtype=int)
            m = np.array([g[1] for g in groups], dtype=int)
            centers = np.array([vals[s0:s0 + k].mean() for s0, k in groups])
            spread = np.array([np.ptp(vals[s0:s0 + k]) for s0, k in groups])
            return self._polish(centers, m, ext[st], ext[st + m + 1], spread)

        loose = _groups(vals, LOOSE_RTOL)
        multi = [g for g in loose if g[1] > 1]
        accepted = set()
        if multi:
            c = polish(multi)
            null = self._nullities(c)
            accepted = {g for g, k in zip(multi, null) if k == g[1]}
        groups = []
        for g in loose:
            if g[1] == 1 or g in accepted:
                groups.append(g)
            else:
                groups.extend((g[0] + s2, m2) for s2, m2 in _groups(vals[g[0]:g[0] + g[1]], CLUSTER_RTOL))
        centers = polish(groups)
        sizes = np.array([g[1] for g in groups], dtype=int)
        starts = np.array([g[0] for g in groups], dtype=int)
        return np.repeat(centers, sizes), np.repeat(sizes, sizes), starts

    def _nullities(self, lam: np.ndarray) -> np.ndarray:
        sv = np.linalg.svd(self.matrix(lam), compute_uv=False)
        return (sv < self.sv_tolerance(lam)[:, None]).sum(axis=1)

    def _polish(self, centers: np.ndarray, mult: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                spread: np.ndarray) -> np.ndarray:
        """Refine cluster centres by minimising the m-th smallest secular singular value.

        The counting function is exact but loses digits where a root sits on a
        Dirichlet eigenvalue of an edge; the secular matrix is entire in ``lam``
        and its vanishing singular values are V-shaped at a root, so a golden
        section search converges to full precision. ``lower``/``upper`` are the
        neighbouring roots, which bound the search interval.
        """
        if len(centers) == 0:
            return centers
        w = 2e-7 * (1.0 + np.abs(centers)) + spread
        w = np.minimum(w, 0.25 * np.minimum(upper - centers, centers - lower))
        a, b = centers - w, centers + w
        idx = self.size - mult  # position of the m-th smallest singular value

        def f(x):
            sv = np.linalg.svd(self.matrix(x), compute_uv=False)
            return sv[np.arange(len(x)), idx]

        gr = 0.5 * (math.sqrt(5.0) - 1.0)
        c, d = b - gr * (b - a), a + gr * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(80):
            left = fc < fd
            b = np.where(left, d, b)
            a = np.where(left, a, c)
            nc = np.where(left, b - gr * (b - a), d)
            nd = np.where(left, c, a + gr * (b - a))
            fnew = f(np.where(left, nc, nd))
            fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
            c, d = nc, nd
            if np.all(b - a <= 1e-15 * (1.0 + np.abs(a))):
                break
        x = 0.5 * (a + b)
        # keep the bisection value where the polish did not improve the residual
        keep = f(x) > f(centers)
        return np.where(keep, centers, x)

    # -- certificate -----------------------------------------------------------

    def _certify_empty(self, top):
        c = Certificate(top, int(self.count(top)[0]))
        self._fem_check(c, top, None)
        return c

    def certify(self, spec: Spectrum, following) -> Certificate:
        """Check the counting function at a gap just above the listed eigenvalues.

        ``following`` are the next eigenvalues after the list. The shift is put
        in the gap with the best margin relative to its height, three quarters
        of the way up (conforming elements only overestimate eigenvalues).
        """
        following = np.atleast_1d(np.asarray(following, float))
        ladder = np.concatenate([[float(spec.values[-1])], following])
        gaps = np.diff(ladder)
        score = gaps / np.maximum(ladder[1:], 1.0) ** 2
        j = int(np.argmax(score))
        last = float(ladder[j])
        top = last + 0.75 * gaps[j]
        expected = spec.offset + len(spec.values) + j
        n_sec = int(self.count(top)[0])
        cert = Certificate(top, n_sec)
        if n_sec != expected:
            cert.notes.append(f"count at certificate shift {n_sec} != expected {expected}")
            cert.nullity_mismatch.append(-1)
        self._fem_check(cert, top, last)
        L = self.total_length
        est = math.ceil(L * math.sqrt(max(top, 0.0)) / math.pi)
        cert.weyl_estimate = est
        cert.weyl_ok = abs(n_sec - est) <= self.graph.n_vertices + 2
        cert.nullity_mismatch.extend(self._nullity_check(spec))
        return cert

    def _fem_check(self, cert: Certificate, top: float, last: float | None):
        from .fem import SingularShift, count_below, discretize

        g = self.graph
        lmin = float(g.lengths.min())
        h = lmin / 512
        if last is not None and top > 0:
            margin = top - last
            h_needed = math.sqrt(12.0 * margin / (2.0 * max(top, 1.0) ** 2))
            h = min(h, h_needed)
        n_el = sum(math.ceil(e.length / h) for e in g.edges)
        if n_el > MAX_FEM_ELEMENTS:
            cert.notes.append(f"FEM certificate skipped: mesh would exceed {MAX_FEM_ELEMENTS} elements")
            return
        counts, hs = [], []
        for hh in (h, h / 2):
            d = discretize(g, self.conditions, self.potential, hh)
            shift = top
            for _ in range(5):
                try:
                    counts.append(count_below(d, shift))
                    break
                except SingularShift:
                    shift += 1e-7 * (1 + abs(shift))
            hs.append(d.h)
        cert.fem_counts, cert.fem_h = tuple(counts), tuple(hs)

    def _nullity_check(self, spec: Spectrum) -> list[int]:
        """Cluster starts where the secular nullity disagrees with the counted multiplicity."""
        bad = []
        clusters = spec.clusters()
        if not clusters:
            return bad
        lam = np.array([c[2] for c in clusters])
        sv = np.linalg.svd(self.matrix(lam), compute_uv=False)
        tol = self.sv_tolerance(lam)
        for (s, m, _), row, t in zip(clusters, sv, tol):
            small = int((row < t).sum())
            if small != m:
                bad.append(spec.offset + s + 1)
        return bad

    def sv_tolerance(self, lam):
        return 1e-8 * (1.0 + self.total_length * np.sqrt(np.abs(lam)))

    # -- eigenvectors ------------------------------------------------------------

    def eigenvector_coefficients(self, lam: float, m: int = 1) -> np.ndarray:
        """Orthonormal (coefficient-space) basis of the null space, rows ``(u_e(0), u_e'(0))``.

        Returns an array of shape ``(m, E, 2)``.
        """
        S = self.matrix(lam)[0]
        _, sv, Vh = np.linalg.svd(S)
        if sv[-m] > self.sv_tolerance(lam) * 10:
            raise SpectrumError(
                f"numerical rank disagrees with multiplicity {m} at lam={lam}: singular values {sv[-m - 1:]}"
            )
        vecs = Vh[-m:].reshape(m, -1, 2).copy()
        vecs[..., 1] *= math.sqrt(1.0 + abs(lam))
        return vecs


def _groups(vals: np.ndarray, rtol: float) -> list[tuple[int, int]]:
    """``(start, size)`` of runs of sorted values within ``rtol`` of the run's first value."""
    out = []
    n = len(vals)
    i = 0
    while i < n:
        j = i + 1
        while j < n and vals[j] - vals[i] <= rtol * (1 + abs(vals[i])):
            j += 1
        out.append((i, j - i))
        i = j
    return out


def find_spectrum(g, conditions, q=None, n=None, window=None, certify=True, jobs=1) -> Spectrum:
    return SecularSystem(g, conditions, q).find_spectrum(n=n, window=window, certify=certify, jobs=jobs)
