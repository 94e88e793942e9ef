"""Complex sparse linear algebra: CSR construction, restarted GMRES and direct solves.

CSR storage and the LU factorization are scipy's; GMRES is implemented here
(right preconditioning, modified Gram-Schmidt, Givens rotations).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def csr_from_triplets(n: int, triplets) -> sp.csr_matrix:
    """Square n x n complex CSR from (row, col, value) triplets; duplicates are summed.

    ``triplets`` is either a sequence of (i, j, v) tuples or a tuple of three arrays.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3 and np.ndim(triplets[0]) == 1:
        rows, cols, vals = (np.asarray(t) for t in triplets)
    else:
        trip = list(triplets)
        if trip:
            rows, cols, vals = (np.array(t) for t in zip(*trip))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0, dtype=complex)
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise IndexError("triplet index out of range")
    A = sp.csr_matrix((vals.astype(complex), (rows, cols)), shape=(n, n))
    A.sum_duplicates()
    A.sort_indices()
    return A


def matvec(A, x):
    return A @ x


# --------------------------------------------------------------------------

@dataclass
class SolverConfig:
    method: str = "direct"           # direct | gmres
    rel_tolerance: float = 1e-9
    restart: int = 50
    max_iterations: int = 2000
    preconditioner: str | Callable | None = None  # None | "block_jacobi" | "ilu" | callable(r) -> z
    block_size: int = 64
    single_precision_above: int = 300_000  # direct solves this large factor in complex64 and refine

    def __post_init__(self):
        if self.method not in ("direct", "gmres"):
            raise ValueError("method must be 'direct' or 'gmres'")
        if not self.rel_tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class SolveReport:
    method: str
    iterations: int = 0
    residual: float = 0.0
    wall_time: float = 0.0
    converged: bool = True
    history: list = field(default_factory=list)
    message: str = ""


def gmres(A, b, config: SolverConfig | None = None, x0=None, M: Callable | None = None):
    """Right-preconditioned restarted GMRES. Returns (x, SolveReport); never raises on stagnation."""
    cfg = config or SolverConfig(method="gmres")
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError("dimension mismatch")
    if M is None:
        M = make_preconditioner(A, cfg)
    op = A.matvec if hasattr(A, "matvec") else (lambda v: A @ v)
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    bnorm = np.linalg.norm(b)
    rep = SolveReport("gmres")
    if bnorm == 0:
        rep.wall_time = time.perf_counter() - t0
        return np.zeros(n, dtype=complex), rep
    tol = cfg.rel_tolerance
    m = max(1, min(cfg.restart, n))
    total = 0
    r = b - op(x)
    beta = np.linalg.norm(r)
    rep.history.append(beta / bnorm)
    while beta / bnorm > tol and total < cfg.max_iterations:
        V = np.zeros((m + 1, n), dtype=complex)
        Z = np.zeros((m, n), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        V[0] = r / beta
        k_used = 0
        breakdown = False
        for k in range(m):
            Z[k] = M(V[k])
            w = op(Z[k])
            for i in range(k + 1):
                H[i, k] = np.vdot(V[i], w)
                w = w - H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            if H[k + 1, k] > 1e-14 * abs(H[k, k]) + 1e-300:
                V[k + 1] = w / H[k + 1, k]
            else:
                breakdown = True
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -np.conj(sn[i]) * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            a, bb = H[k, k], H[k + 1, k]
            rho = np.hypot(abs(a), abs(bb))
            if abs(a) == 0:
                cs[k], sn[k] = 0.0, 1.0
            else:
                cs[k] = abs(a) / rho
                sn[k] = (a / abs(a)) * np.conj(bb) / rho
            H[k, k] = cs[k] * a + sn[k] * bb
            H[k + 1, k] = 0.0
            g[k + 1] = -np.conj(sn[k]) * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_used = k + 1
            rep.history.append(abs(g[k + 1]) / bnorm)
            if abs(g[k + 1]) / bnorm <= tol or breakdown or total >= cfg.max_iterations:
                break
        y = np.linalg.solve(np.triu(H[:k_used, :k_used]), g[:k_used]) if k_used else np.zeros(0)
        x = x + y @ Z[:k_used]
        r = b - op(x)
        beta = np.linalg.norm(r)
        if breakdown and beta / bnorm > tol:
            rep.message = "breakdown"
            break
    rep.iterations = total
    rep.residual = float(beta / bnorm)
    rep.converged = rep.residual <= tol
    if not rep.converged and not rep.message:
        rep.message = "maximum iterations reached"
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def make_preconditioner(A, cfg: SolverConfig) -> Callable:
    p = cfg.preconditioner
    if p is None or p == "none":
        return lambda v: v
    if callable(p):
        return p
    if p == "block_jacobi":
        return block_jacobi(A, cfg.block_size)
    if p == "ilu":
        ilu = spla.spilu(sp.csc_matrix(A), drop_tol=1e-5, fill_factor=20)
        return ilu.solve
    raise ValueError(f"unknown preconditioner {p!r}")


def block_jacobi(A, block: int) -> Callable:
    """Inverse of the diagonal blocks of size ``block`` (last block may be smaller)."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    starts = list(range(0, n, block))
    invs = []
    for s in starts:
        e = min(s + block, n)
        blk = A[s:e, s:e].toarray()
        try:
            invs.append(np.linalg.inv(blk))
        except np.linalg.LinAlgError:
            invs.append(np.linalg.pinv(blk))

    def apply(v):
        out = np.empty_like(v, dtype=complex)
        for s, inv in zip(starts, invs):
            out[s:s + inv.shape[0]] = inv @ v[s:s + inv.shape[0]]
        return out

    return apply


def _factor(A, dtype):
    try:
        return spla.splu(sp.csc_matrix(A, dtype=dtype), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc


def direct_solve(A, b) -> np.ndarray:
    """Sparse LU (COLAMD ordering) in double complex precision."""
    lu = _factor(A, complex)
    x = lu.solve(np.asarray(b, dtype=complex))
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("LU solve produced non-finite values")
    return x


def solve(A, b, config: SolverConfig | None = None):
    """Dispatch to the configured method. Returns (x, SolveReport)."""
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=complex)
    if cfg.method == "gmres":
        return gmres(A, b, cfg)
    n = A.shape[0]
    if n <= cfg.single_precision_above:
        x = direct_solve(A, b)
        bn = np.linalg.norm(b)
        res = float(np.linalg.norm(b - A @ x) / bn) if bn else 0.0
        return x, SolveReport("direct", 0, res, time.perf_counter() - t0)
    # large systems: complex64 LU as a preconditioner, refined by GMRES in double precision
    lu = _factor(A, np.complex64)
    M = lambda v: lu.solve(v.astype(np.complex64)).astype(complex)
    gcfg = SolverConfig("gmres", min(cfg.rel_tolerance, 1e-10), restart=30, max_iterations=200)
    x, rep = gmres(A, b, gcfg, M=M)
    rep.method = "direct-mixed"
    rep.wall_time = time.perf_counter() - t0
    if not rep.converged:
        raise SingularMatrixError(f"mixed-precision refinement stalled at residual {rep.residual:.2e}")
    return x, rep


def write_matrix_market(path, A, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment, field="complex")
