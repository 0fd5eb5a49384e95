"""Fundamental solutions of ``-u'' + q u = lam u`` along a single edge.

The propagator ``M(x; lam)`` maps ``(u(0), u'(0))`` to ``(u(x), u'(x))``. Constant
potential pieces use the closed form ``[[c, s], [-kappa s, c]]`` with
``kappa = lam - q``, ``c = cos(sqrt(kappa) x)``, ``s = sin(sqrt(kappa) x)/sqrt(kappa)``
(hyperbolic for ``kappa < 0``). Linear pieces use a fourth-order Magnus stepper,
which keeps ``det M = 1`` to rounding.

All functions accept ``lam`` as scalar or 1-d array and broadcast over it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .graph import MetricGraph
from .potential import Piece, Potential, as_potential

SERIES_CUTOFF = 1e-8
_SQ3 = np.sqrt(3.0)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


class PropagatorError(ValueError):
    pass


def cs(kappa, x):
    """``c = cos(sqrt(kappa) x)`` and ``s = sin(sqrt(kappa) x) / sqrt(kappa)``, any sign of kappa."""
    kappa, x = np.broadcast_arrays(np.asarray(kappa, float), np.asarray(x, float))
    z = kappa * x * x
    c = np.empty(z.shape)
    s = np.empty(z.shape)
    pos = z > SERIES_CUTOFF
    neg = z < -SERIES_CUTOFF
    mid = ~(pos | neg)
    if pos.any():
        k = np.sqrt(kappa[pos])
        c[pos] = np.cos(k * x[pos])
        s[pos] = np.sin(k * x[pos]) / k
    if neg.any():
        k = np.sqrt(-kappa[neg])
        c[neg] = np.cosh(k * x[neg])
        s[neg] = np.sinh(k * x[neg]) / k
    if mid.any():
        zm, xm = z[mid], x[mid]
        c[mid] = 1.0 - zm / 2.0 + zm * zm / 24.0
        s[mid] = xm * (1.0 - zm / 6.0 + zm * zm / 120.0)
    return c, s


def constant_piece_matrix(kappa, h) -> np.ndarray:
    c, s = cs(kappa, h)
    M = np.empty(c.shape + (2, 2))
    M[..., 0, 0] = c
    M[..., 0, 1] = s
    M[..., 1, 0] = -np.asarray(kappa, float) * s
    M[..., 1, 1] = c
    return M


def _s_minus_series(kappa, h):
    """``(h/2 - s(kappa, 2h)/4) / kappa`` without cancellation near kappa = 0."""
    kappa, h = np.broadcast_arrays(np.asarray(kappa, float), np.asarray(h, float))
    y = 2.0 * h
    z = kappa * y * y
    out = np.empty(z.shape)
    small = np.abs(z) < 1e-4
    if small.any():
        ys, zs = y[small], z[small]
        # (y - s(kappa, y)) / (4 kappa) = y^3/24 (1 - z/20 + z^2/840 - z^3/60480)
        out[small] = ys ** 3 / 24.0 * (1.0 - zs / 20.0 + zs * zs / 840.0 - zs ** 3 / 60480.0)
    big = ~small
    if big.any():
        _, s2 = cs(kappa[big], y[big])
        out[big] = (h[big] / 2.0 - s2 / 4.0) / kappa[big]
    return out


def constant_piece_gram(kappa, h) -> np.ndarray:
    """``[[int c^2, int c s], [int c s, int s^2]]`` over ``(0, h)``."""
    _, s1 = cs(kappa, h)
    _, s2 = cs(kappa, 2.0 * h)
    G = np.empty(np.shape(s1) + (2, 2))
    G[..., 0, 0] = np.asarray(h) / 2.0 + s2 / 4.0
    G[..., 0, 1] = G[..., 1, 0] = s1 * s1 / 2.0
    G[..., 1, 1] = _s_minus_series(kappa, h)
    return G


def _expm_traceless(O) -> np.ndarray:
    """exp of a batch of real traceless 2x2 matrices: ``C I + S O`` with ``O^2 = -det(O) I``."""
    delta = -(O[..., 0, 0] * O[..., 1, 1] - O[..., 0, 1] * O[..., 1, 0])
    c, s = cs(-delta, 1.0)
    E = s[..., None, None] * O
    E[..., 0, 0] += c
    E[..., 1, 1] += c
    return E


def magnus_step(lam, xa, xb, qa, qb) -> np.ndarray:
    """One fourth-order Magnus step over ``[xa, xb]`` for q linear from qa to qb.

    All arguments broadcast; the result has the broadcast shape plus ``(2, 2)``.
    """
    lam, xa, xb, qa, qb = np.broadcast_arrays(*(np.asarray(a, float) for a in (lam, xa, xb, qa, qb)))
    h = xb - xa
    t1, t2 = 0.5 - _SQ3 / 6.0, 0.5 + _SQ3 / 6.0
    a1 = qa + (qb - qa) * t1 - lam
    a2 = qa + (qb - qa) * t2 - lam
    w = _SQ3 / 12.0 * h * h * (a1 - a2)
    O = np.empty(lam.shape + (2, 2))
    O[..., 0, 0] = w
    O[..., 0, 1] = h
    O[..., 1, 0] = h * (a1 + a2) / 2.0
    O[..., 1, 1] = -w
    return _expm_traceless(O)


def _scan_products(steps: np.ndarray) -> np.ndarray:
    """Inclusive left products ``steps[..., i, :, :] @ ... @ steps[..., 0, :, :]`` by doubling."""
    P = steps.copy()
    n = P.shape[-3]
    k = 1
    while k < n:
        P[..., k:, :, :] = P[..., k:, :, :] @ P[..., :-k, :, :]
        k *= 2
    return P


# substep counts are rounded up to this ladder so that every lam gets the same
# discretisation whether it is propagated alone or inside a batch
_LADDER = np.unique(np.round(2.0 ** (np.arange(0, 64) / 4.0))).astype(np.int64)


def magnus_substeps(lam, grid: float, qmax: float = 0.0, slope: float = 0.0) -> np.ndarray:
    """Number of Magnus substeps for each ``lam`` on a linear piece of length ``grid``."""
    lam = np.abs(np.asarray(lam, float))
    scale = 1.0 + lam + abs(qmax) + abs(slope) ** (2.0 / 3.0)
    need = np.ceil(grid * np.sqrt(scale) / 0.05).astype(np.int64)
    return _LADDER[np.searchsorted(_LADDER, need)]


class EdgeSolver:
    """Propagation data for one edge and one potential."""

    def __init__(self, pieces: list[Piece], length: float):
        self.pieces = pieces
        self.length = float(length)
        self.constant = all(q0 == q1 for _, _, q0, q1 in pieces)

    @classmethod
    def for_edge(cls, g: MetricGraph, q: Potential, e: int) -> "EdgeSolver":
        length = g.edges[e].length
        return cls(as_potential(q).on(e).pieces(length), length)

    # -- stepping -----------------------------------------------------------

    def _linear_substeps(self, piece: Piece, lam: float):
        x0, x1, q0, q1 = piece
        grid = x1 - x0
        n = int(magnus_substeps(lam, grid, max(abs(q0), abs(q1)), (q1 - q0) / grid))
        xs = np.linspace(x0, x1, n + 1)
        qs = q0 + (q1 - q0) * (xs - x0) / (x1 - x0)
        return xs, qs

    def _march(self, piece: Piece, lam: float):
        """Substep grid, potential values and cumulative propagators for a scalar ``lam``."""
        xs, qs = self._linear_substeps(piece, lam)
        steps = magnus_step(lam, xs[:-1], xs[1:], qs[:-1], qs[1:])
        return xs, qs, np.concatenate([np.eye(2)[None], _scan_products(steps)])

    def _linear_batch(self, piece: Piece, lam: np.ndarray, M: np.ndarray, count=None) -> np.ndarray:
        """Carry ``M`` (``lam.shape + (2, 2)``) across a linear piece, adding zero crossings
        of its second column to ``count`` when given."""
        x0, x1, q0, q1 = piece
        grid = x1 - x0
        ns = magnus_substeps(lam, grid, max(abs(q0), abs(q1)), (q1 - q0) / grid)
        M = M.copy()
        for n in np.unique(ns):
            sel = ns == n
            xs = np.linspace(x0, x1, n + 1)
            qs = q0 + (q1 - q0) * (xs - x0) / grid
            steps = magnus_step(lam[sel][:, None], xs[:-1], xs[1:], qs[:-1], qs[1:])
            P = _scan_products(steps) @ M[sel][:, None]  # (k, n, 2, 2) after each substep
            if count is not None:
                u = np.concatenate([M[sel][:, None, 0, 1], P[..., 0, 1]], axis=1)
                count[sel] += _sign_crossing(u[:, :-1], u[:, 1:]).sum(axis=1)
            M[sel] = P[:, -1]
        return M

    def _piece_matrix(self, piece: Piece, lam, xb: float) -> np.ndarray:
        """Propagator from the start of ``piece`` to ``xb``."""
        x0, x1, q0, q1 = piece
        if q0 == q1:
            return constant_piece_matrix(lam - q0, xb - x0)
        if np.ndim(lam) == 0:
            return self._linear_matrices(piece, float(lam), np.array([xb]))[0]
        if xb == x1:
            flat = np.asarray(lam, float).ravel()
            return self._linear_batch(piece, flat, np.broadcast_to(np.eye(2), flat.shape + (2, 2))
                                      ).reshape(np.shape(lam) + (2, 2))
        return np.stack([self._linear_matrices(piece, float(l), np.array([xb]))[0]
                         for l in np.ravel(lam)]).reshape(np.shape(lam) + (2, 2))

    def _linear_matrices(self, piece: Piece, lam: float, pts: np.ndarray) -> np.ndarray:
        """Propagators from the start of a linear piece to each of ``pts``."""
        x0, x1, q0, q1 = piece
        grid, qs, P = self._march(piece, lam)
        cell = np.clip(np.searchsorted(grid, pts, side="right") - 1, 0, len(grid) - 2)
        qp = q0 + (q1 - q0) * (pts - x0) / (x1 - x0)
        return magnus_step(lam, grid[cell], pts, qs[cell], qp) @ P[cell]

    def matrix(self, lam, x: float | None = None) -> np.ndarray:
        """``M(x; lam)`` with shape ``lam.shape + (2, 2)``."""
        lam = np.asarray(lam, float)
        if x is None:
            x = self.length
        if not 0.0 <= x <= self.length * (1 + 1e-14):
            raise PropagatorError(f"x={x} outside edge [0, {self.length}]")
        M = np.broadcast_to(np.eye(2), lam.shape + (2, 2)).copy()
        for piece in self.pieces:
            x0, x1 = piece[0], piece[1]
            if x <= x0:
                break
            xb = min(x, x1)
            M = self._piece_matrix(piece, lam, xb) @ M
        return M

    # -- Sturm counting ------------------------------------------------------

    def sweep(self, lam) -> tuple[np.ndarray, np.ndarray]:
        """End propagator and Dirichlet eigenvalue count below ``lam`` in one pass.

        The count is the number of interior zeros of the solution with
        ``u(0) = 0, u'(0) = 1`` (second column of ``M``), i.e. the number of
        Dirichlet eigenvalues of the edge strictly below ``lam``.
        """
        lam = np.atleast_1d(np.asarray(lam, float))
        M = np.broadcast_to(np.eye(2), lam.shape + (2, 2)).copy()
        count = np.zeros(lam.shape, dtype=np.int64)
        for piece in self.pieces:
            x0, x1, q0, q1 = piece
            if q0 == q1:
                kappa = lam - q0
                h = x1 - x0
                u, v = M[..., 0, 1], M[..., 1, 1]
                Mn = constant_piece_matrix(kappa, h) @ M
                osc = kappa > 0
                if osc.any():
                    k = np.sqrt(kappa[osc])
                    phi0 = np.arctan2(u[osc] + 0.0, v[osc] / k)
                    count[osc] += (np.floor((phi0 + k * h) / np.pi) - np.floor(phi0 / np.pi)).astype(np.int64)
                flat = ~osc
                if flat.any():
                    count[flat] += _sign_crossing(u[flat], Mn[flat, 0, 1])
                M = Mn
            else:
                M = self._linear_batch(piece, lam, M, count)
        count -= (M[..., 0, 1] == 0.0).astype(np.int64)
        if not np.all(np.isfinite(M)):
            raise PropagatorError("propagator overflow; spectral parameter too far below the potential")
        return M, count

    def dirichlet_count(self, lam) -> np.ndarray:
        return self.sweep(lam)[1]

    # -- evaluation -----------------------------------------------------------

    def states(self, lam: float, coeffs: np.ndarray, xs) -> tuple[np.ndarray, np.ndarray]:
        """``u`` and ``u'`` at points ``xs`` for initial data rows ``coeffs`` (m, 2).

        Returns two arrays of shape (m, len(xs)).
        """
        coeffs = np.atleast_2d(np.asarray(coeffs, float))
        xs = np.asarray(xs, float)
        U = np.empty((coeffs.shape[0], xs.size))
        V = np.empty_like(U)
        state = coeffs.T.copy()  # (2, m)
        for piece in self.pieces:
            x0, x1, q0, q1 = piece
            last = piece is self.pieces[-1]
            sel = (xs >= x0) & ((xs < x1) | (last & (xs <= x1 * (1 + 1e-14))))
            if sel.any():
                if q0 == q1:
                    M = constant_piece_matrix(lam - q0, xs[sel] - x0)  # (n, 2, 2)
                else:
                    M = self._linear_matrices(piece, lam, xs[sel])
                out = M @ state  # (n, 2, m)
                U[:, sel] = out[:, 0, :].T
                V[:, sel] = out[:, 1, :].T
            state = self._piece_matrix(piece, lam, x1) @ state
        return U, V

    def gram(self, lam: float, coeffs: np.ndarray, weighted: bool = False) -> np.ndarray:
        """``int_0^length u_i u_j dx`` for solutions with initial data rows ``coeffs``.

        With ``weighted`` the integrand carries the potential, ``int q u_i u_j dx``.
        """
        coeffs = np.atleast_2d(np.asarray(coeffs, float))
        state = coeffs.T.copy()
        G = np.zeros((coeffs.shape[0], coeffs.shape[0]))
        for piece in self.pieces:
            x0, x1, q0, q1 = piece
            if q0 == q1:
                P = constant_piece_gram(lam - q0, x1 - x0)
                G += (q0 if weighted else 1.0) * (state.T @ P @ state)
                state = constant_piece_matrix(lam - q0, x1 - x0) @ state
            else:
                xs, qs, P = self._march(piece, lam)
                xa, xb = xs[:-1, None], xs[1:, None]
                nodes = xa + (xb - xa) * (_GL_NODES + 1.0) / 2.0  # (n, 6)
                w = _GL_WEIGHTS * (xb - xa) / 2.0
                qn = qs[:-1, None] + (qs[1:, None] - qs[:-1, None]) * (nodes - xa) / (xb - xa)
                part = magnus_step(lam, xa, nodes, qs[:-1, None], qn)  # (n, 6, 2, 2)
                u = (part @ P[:-1, None])[..., 0, :] @ state  # (n, 6, m)
                wt = (w * qn if weighted else w)[..., None]
                G += np.einsum("abi,abj->ij", wt * u, u)
                state = P[-1] @ state
        return G


def _sign_crossing(u0, u1):
    """Zeros in (x0, x1] for a non-oscillatory stretch: at most one, detected by sign."""
    hit = (u0 != 0.0) & ((u1 == 0.0) | (np.sign(u0) != np.sign(u1)))
    return hit.astype(np.int64)


@dataclass(frozen=True)
class FundamentalData:
    edge: int
    lam: float
    solver: EdgeSolver

    @cached_property
    def end_matrix(self) -> np.ndarray:
        return self.solver.matrix(self.lam)

    def at(self, x: float) -> np.ndarray:
        return self.solver.matrix(self.lam, x)


def fundamental_data(g: MetricGraph, q, e: int, lam: float) -> FundamentalData:
    return FundamentalData(e, float(lam), EdgeSolver.for_edge(g, as_potential(q), e))


def propagator(g: MetricGraph, q, e: int, lam, x: float) -> np.ndarray:
    if not 0 <= e < g.n_edges:
        raise PropagatorError(f"unknown edge {e}")
    return EdgeSolver.for_edge(g, as_potential(q), e).matrix(lam, x)


def wronskian_defect(d: FundamentalData, x: float | None = None) -> float:
    M = d.end_matrix if x is None else d.at(x)
    return float(abs(np.linalg.det(M) - 1.0))
