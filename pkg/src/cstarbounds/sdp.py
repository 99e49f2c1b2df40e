"""Dense primal-dual interior-point SDP solver with independent certification.

Problem form (``SdpInstance``)::

    max (or min)  c . x   subject to   F_0 + sum_i x_i F_i  >= 0   (PSD, block diagonal)

The dual is ``min F_0 . Y  s.t.  F_i . Y = -c_i,  Y >= 0`` for ``sense="max"`` (signs
flip for ``"min"``).  Internally the problem is the dual half of the standard pair

    (P) min C.X  s.t. A_i.X = b_i, X >= 0        (D) max b.y  s.t. sum y_i A_i + Z = C, Z >= 0

with C = F_0, A_i = -F_i, b = +-c, y = x.  Iterates follow the Nesterov-Todd direction
with a Mehrotra predictor-corrector step; the Schur complement is factored densely.

SDPA sparse text format (read/write) uses the SDPA sign convention
``min c.x s.t. sum_i x_i G_i - G_0 >= 0``, so ``G_0 = -F_0`` and ``G_i = F_i``::

    "optional comment; a line '"sense=max' marks a maximisation
    m
    nblocks
    n_1 n_2 ...
    c_1 ... c_m              (for sense=max this line holds -c)
    matno block row col value      (1-based, upper triangle, one entry per line)
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
STEP_FRACTION = 0.98


class SdpError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SdpInstance:
    """``F[b]`` is a sparse (m+1) x (n_b*n_b) matrix whose row i is vec(F_i) on block b."""

    c: np.ndarray
    F: tuple[sp.csr_matrix, ...]
    block_sizes: tuple[int, ...]
    sense: str = "max"

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        object.__setattr__(self, "c", c)
        if self.sense not in ("min", "max"):
            raise SdpError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if len(self.F) != len(self.block_sizes):
            raise SdpError("one coefficient matrix per block required")
        F = []
        for Fb, n in zip(self.F, self.block_sizes):
            Fb = sp.csr_matrix(Fb, dtype=float)
            if Fb.shape != (c.size + 1, n * n):
                raise SdpError(f"block of size {n} has coefficient shape {Fb.shape}, expected {(c.size + 1, n * n)}")
            F.append(Fb)
        object.__setattr__(self, "F", tuple(F))
        object.__setattr__(self, "block_sizes", tuple(int(n) for n in self.block_sizes))
        worst = self.symmetry_residual()
        if worst > SYMMETRY_TOL:
            raise SdpError(f"coefficient matrices not symmetric (residual {worst:.3g})")

    @property
    def m(self) -> int:
        return self.c.size

    @classmethod
    def from_dense(cls, c, matrices: Sequence, block_sizes: Sequence[int] | None = None, sense="max"):
        """``matrices[i]`` is F_i: a single square matrix or a list of blocks."""
        mats = [[np.atleast_2d(np.asarray(b, dtype=float)) for b in (M if isinstance(M, (list, tuple)) else [M])]
                for M in matrices]
        if block_sizes is None:
            block_sizes = [b.shape[0] for b in mats[0]]
        rows = []
        for bi, n in enumerate(block_sizes):
            rows.append(sp.csr_matrix(np.array([M[bi].reshape(n * n) for M in mats])))
        return cls(np.asarray(c, dtype=float), tuple(rows), tuple(block_sizes), sense)

    def matrix(self, i: int) -> list[np.ndarray]:
        return [Fb[i].toarray().reshape(n, n) for Fb, n in zip(self.F, self.block_sizes)]

    def evaluate(self, x: np.ndarray) -> list[np.ndarray]:
        """Blocks of F_0 + sum x_i F_i."""
        v = np.concatenate([[1.0], np.asarray(x, dtype=float)])
        return [(Fb.T @ v).reshape(n, n) for Fb, n in zip(self.F, self.block_sizes)]

    def symmetry_residual(self) -> float:
        worst = 0.0
        for Fb, n in zip(self.F, self.block_sizes):
            coo = Fb.tocoo()
            p, q = coo.col // n, coo.col % n
            T = sp.csr_matrix((coo.data, (coo.row, q * n + p)), shape=Fb.shape)
            diff = (Fb - T)
            if diff.nnz:
                worst = max(worst, float(np.abs(diff.data).max()))
        return worst

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.sense.encode())
        h.update(np.ascontiguousarray(self.c).tobytes())
        for Fb, n in zip(self.F, self.block_sizes):
            Fb = Fb.copy()
            Fb.sort_indices()
            h.update(str(n).encode())
            for arr in (Fb.indptr, Fb.indices, Fb.data):
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


@dataclass
class SdpSolution:
    x: np.ndarray
    primal_objective: float  # c . x, in the instance's sense
    dual_objective: float    # the bound from Y, in the instance's sense
    Y: list[np.ndarray]
    S: list[np.ndarray]
    gap: float
    status: str              # optimal | max-iter | infeasible-suspect
    iterations: int
    weak_duality_violations: int = 0
    history: list[dict] = field(default_factory=list)
    ray: np.ndarray | None = None


# ---------------------------------------------------------------- solver

class _Standard:
    """The instance rewritten as standard-form data (C, A, b)."""

    def __init__(self, p: SdpInstance):
        self.n = p.block_sizes
        self.C = [Fb[0].toarray().reshape(n, n) for Fb, n in zip(p.F, self.n)]
        self.A = [(-Fb[1:]).tocsr() for Fb in p.F]
        self.AT = [a.T.tocsr() for a in self.A]
        self.b = p.c.copy() if p.sense == "max" else -p.c
        self.m = p.m
        # per block, per constraint: (rows, cols, vals) of A_i for the Schur complement
        self.entries = []
        for a, n in zip(self.A, self.n):
            per = []
            for i in range(self.m):
                lo, hi = a.indptr[i], a.indptr[i + 1]
                if lo == hi:
                    per.append(None)
                    continue
                idx = a.indices[lo:hi]
                per.append((idx // n, idx % n, a.data[lo:hi]))
            self.entries.append(per)

    def op(self, X: list[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.m)
        for a, Xb in zip(self.A, X):
            out += a @ Xb.ravel()
        return out

    def adj(self, y: np.ndarray) -> list[np.ndarray]:
        return [(at @ y).reshape(n, n) for at, n in zip(self.AT, self.n)]

    def schur(self, W: list[np.ndarray]) -> np.ndarray:
        M = np.zeros((self.m, self.m))
        chunk = 128
        for a, per, Wb, n in zip(self.A, self.entries, W, self.n):
            cols = [j for j in range(self.m) if per[j] is not None]
            for start in range(0, len(cols), chunk):
                js = cols[start:start + chunk]
                G = np.empty((n * n, len(js)))
                for t, j in enumerate(js):
                    r, q, v = per[j]
                    G[:, t] = ((Wb[:, r] * v) @ Wb[q, :]).ravel()
                M[:, js] += a @ G
        return (M + M.T) / 2


def _inner(U: list[np.ndarray], V: list[np.ndarray]) -> float:
    return float(sum(np.vdot(u, v).real for u, v in zip(U, V)))


def _norm(U: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(np.sum(u * u) for u in U)))


def _sym(U: np.ndarray) -> np.ndarray:
    return (U + U.T) / 2


def _factor(X: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(X)
        return v * np.sqrt(np.clip(w, 1e-300, None))


def _nt_scaling(X: np.ndarray, Z: np.ndarray):
    """G with G^-1 X G^-T = G^T Z G = diag(d); the NT point is W = G G^T."""
    Lx, Lz = _factor(X), _factor(Z)
    U, d, Qt = np.linalg.svd(Lz.T @ Lx)
    G = (Lx @ Qt.T) / np.sqrt(d)
    Gi = (np.sqrt(d)[:, None] * Qt) @ np.linalg.inv(Lx)
    return G, Gi, d, _sym(G @ G.T)


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = scipy.linalg.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ Li.T)).min()
    return np.inf if lam >= 0 else -1.0 / lam


def _solve_spd(M: np.ndarray, h: np.ndarray, factor=None):
    if factor is None:
        reg = 0.0
        scale = max(1.0, float(np.abs(np.diag(M)).max(initial=0.0)))
        for _ in range(8):
            try:
                factor = scipy.linalg.cho_factor(M + reg * np.eye(M.shape[0]), check_finite=False)
                break
            except np.linalg.LinAlgError:
                reg = scale * (1e-14 if reg == 0 else reg / scale * 100)
        else:
            return np.linalg.lstsq(M, h, rcond=None)[0], None
    return scipy.linalg.cho_solve(factor, h, check_finite=False), factor


def solve(p: SdpInstance, tol: float = 1e-8, max_iter: int = 100) -> SdpSolution:
    """Primal-dual path following; returns the best iterate on failure."""
    if not 1e-10 <= tol <= 1e-4:
        raise SdpError(f"tol must lie in [1e-10, 1e-4], got {tol}")
    d = _Standard(p)
    m, sizes = d.m, d.n
    ntot = sum(sizes)
    normA = np.sqrt(sum(np.asarray(a.multiply(a).sum(axis=1)).ravel() for a in d.A)) if m else np.zeros(0)
    normC = _norm(d.C)
    xi0 = max([10.0] + [np.sqrt(n) for n in sizes] + [ntot * (1 + abs(d.b[i])) / (1 + normA[i]) for i in range(m)])
    eta0 = max([10.0, normC] + [np.sqrt(n) for n in sizes] + list(normA))
    X = [xi0 * np.eye(n) for n in sizes]
    Z = [eta0 * np.eye(n) for n in sizes]
    y = np.zeros(m)
    normb = float(np.linalg.norm(d.b))

    history, violations, status = [], 0, "max-iter"
    ray = None
    it = 0
    for it in range(max_iter + 1):
        rp = d.b - d.op(X)
        ATy = d.adj(y)
        Rd = [Cb - Zb - Ab for Cb, Zb, Ab in zip(d.C, Z, ATy)]
        pobj, dobj = _inner(d.C, X), float(d.b @ y)
        comp = _inner(X, Z)
        mu = comp / ntot
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(rp)) / (1 + normb)
        dinf = _norm(Rd) / (1 + normC)
        # pobj - dobj = X.Z + X.Rd - y.rp exactly; weak duality up to the infeasibility terms
        slack = abs(_inner(X, Rd)) + abs(float(y @ rp)) + 1e-9 * (1 + abs(pobj) + abs(dobj))
        if pobj - dobj < -slack:
            violations += 1
            log.warning("weak duality violated at iteration %d: %g < %g", it, pobj - dobj, -slack)
        history.append({"iter": it, "pobj": pobj, "dobj": dobj, "gap": pobj - dobj, "pinf": pinf, "dinf": dinf, "mu": mu})
        if max(relgap, pinf, dinf) <= tol:
            status = "optimal"
            break
        if max(abs(pobj), abs(dobj), _norm(X), float(np.linalg.norm(y))) > 1e12:
            status = "infeasible-suspect"
            ray = y / max(np.linalg.norm(y), 1e-300) if np.linalg.norm(y) > _norm(X) else None
            break
        if it == max_iter:
            break

        scal = [_nt_scaling(Xb, Zb) for Xb, Zb in zip(X, Z)]
        W = [t[3] for t in scal]
        M = d.schur(W)
        WRdW = [Wb @ Rb @ Wb for Wb, Rb in zip(W, Rd)]
        factor = None

        def direction(Rc, factor):
            h = rp - d.op(Rc) + d.op(WRdW)
            dy, factor = _solve_spd(M, h, factor)
            dZ = [Rb - Ab for Rb, Ab in zip(Rd, d.adj(dy))]
            dX = [_sym(Rcb - Wb @ dZb @ Wb) for Rcb, Wb, dZb in zip(Rc, W, dZ)]
            return dX, dy, dZ, factor

        def steps(dX, dZ):
            ap = min([1.0] + [STEP_FRACTION * _max_step(Xb, dXb) for Xb, dXb in zip(X, dX)])
            ad = min([1.0] + [STEP_FRACTION * _max_step(Zb, dZb) for Zb, dZb in zip(Z, dZ)])
            return ap, ad

        # predictor
        dXa, dya, dZa, factor = direction([-Xb for Xb in X], factor)
        ap, ad = steps(dXa, dZa)
        comp_aff = _inner([Xb + ap * v for Xb, v in zip(X, dXa)], [Zb + ad * v for Zb, v in zip(Z, dZa)])
        sigma = min(1.0, max(0.0, comp_aff / comp) ** 3)
        # corrector, in the scaled space where X and Z both equal diag(dv)
        Rc = []
        for (G, Gi, dv, _), dXb, dZb in zip(scal, dXa, dZa):
            sX = Gi @ dXb @ Gi.T
            sZ = G.T @ dZb @ G
            R = sigma * mu * np.eye(dv.size) - _sym(sX @ sZ)
            U = 2 * R / (dv[:, None] + dv[None, :]) - np.diag(dv)
            Rc.append(_sym(G @ U @ G.T))
        dX, dy, dZ, factor = direction(Rc, factor)
        ap, ad = steps(dX, dZ)
        X = [_sym(Xb + ap * v) for Xb, v in zip(X, dX)]
        y = y + ad * dy
        Z = [_sym(Zb + ad * v) for Zb, v in zip(Z, dZ)]

    sign = 1.0 if p.sense == "max" else -1.0
    primal, dual = sign * float(d.b @ y), sign * _inner(d.C, X)
    return SdpSolution(
        x=y.copy(),
        primal_objective=primal,
        dual_objective=dual,
        Y=[Xb.copy() for Xb in X],
        S=[Zb.copy() for Zb in Z],
        gap=abs(dual - primal),
        status=status,
        iterations=it,
        weak_duality_violations=violations,
        history=history,
        ray=ray,
    )


# ---------------------------------------------------------------- certification

@dataclass
class Certificate:
    passed: bool
    primal_objective: float
    dual_objective: float
    gap: float
    primal_min_eig: float
    dual_min_eig: float
    dual_residual: float
    objective_mismatch: float
    violations: list[str]


def certify(p: SdpInstance, s: SdpSolution, tol: float = 1e-7) -> Certificate:
    """Recompute every residual from the raw instance data (no solver state reused)."""
    x = np.asarray(s.x, dtype=float)
    violations = []
    if x.size != p.m:
        return Certificate(False, np.nan, np.nan, np.inf, -np.inf, -np.inf, np.inf, np.inf,
                           [f"x has length {x.size}, instance has {p.m} variables"])
    Fx = p.evaluate(x)
    primal_min = min(float(np.linalg.eigvalsh(_sym(B)).min()) for B in Fx)
    dual_min = min(float(np.linalg.eigvalsh(_sym(Y)).min()) for Y in s.Y)
    # F_i . Y for i = 0..m, via dense reconstruction
    traces = np.zeros(p.m + 1)
    for Fb, Y in zip(p.F, s.Y):
        traces += Fb @ np.asarray(Y, dtype=float).ravel()
    if p.sense == "max":
        dual_res = float(np.abs(traces[1:] + p.c).max(initial=0.0))
        dual_obj = float(traces[0])
    else:
        dual_res = float(np.abs(traces[1:] - p.c).max(initial=0.0))
        dual_obj = float(-traces[0])
    primal_obj = float(p.c @ x)
    scale = 1 + abs(primal_obj) + abs(dual_obj)
    gap = abs(dual_obj - primal_obj)
    mismatch = abs(primal_obj - s.primal_objective) + abs(dual_obj - s.dual_objective)
    if primal_min < -tol * scale:
        violations.append(f"primal infeasible: min eigenvalue of F(x) is {primal_min:.3g}")
    if dual_min < -tol * scale:
        violations.append(f"dual matrix not PSD: min eigenvalue {dual_min:.3g}")
    if dual_res > tol * scale:
        violations.append(f"dual equality residual {dual_res:.3g}")
    if gap > tol * scale:
        violations.append(f"duality gap {gap:.3g}")
    if mismatch > tol * scale:
        violations.append(f"reported objectives differ from recomputed ones by {mismatch:.3g}")
    if s.weak_duality_violations:
        violations.append(f"{s.weak_duality_violations} weak-duality violations during iteration")
    return Certificate(not violations, primal_obj, dual_obj, gap, primal_min, dual_min, dual_res, mismatch, violations)


def certified_bound(p: SdpInstance, s: SdpSolution, box: float = 1.0) -> float:
    """Rigorous bound on the optimum, valid when every feasible x has |x_i| <= box.

    The dual matrix is shifted to be PSD, and the leftover equality residual is
    charged at ``box`` per variable.  Upper bound for max problems, lower for min.
    """
    Ys = []
    for Y in s.Y:
        Y = _sym(np.asarray(Y, dtype=float))
        lam = float(np.linalg.eigvalsh(Y).min())
        Ys.append(Y + max(0.0, -lam) * np.eye(Y.shape[0]))
    traces = np.zeros(p.m + 1)
    for Fb, Y in zip(p.F, Ys):
        traces += Fb @ Y.ravel()
    if p.sense == "max":
        return float(traces[0] + box * np.abs(traces[1:] + p.c).sum())
    return float(-traces[0] - box * np.abs(traces[1:] - p.c).sum())


# ---------------------------------------------------------------- complex lowering

def lower_hermitian(H: np.ndarray) -> np.ndarray:
    """Real symmetric [[Re H, -Im H], [Im H, Re H]]; PSD iff H is."""
    H = np.asarray(H, dtype=complex)
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


# ---------------------------------------------------------------- SDPA sparse format

def write_sdpa(p: SdpInstance, path: str | Path | None = None) -> str:
    lines = [f'"sense={p.sense}', str(p.m), str(len(p.block_sizes)), " ".join(map(str, p.block_sizes))]
    c = p.c if p.sense == "min" else -p.c
    lines.append(" ".join(repr(float(v)) for v in c))
    for bi, (Fb, n) in enumerate(zip(p.F, p.block_sizes)):
        coo = Fb.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for r, col, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            i, j = divmod(int(col), n)
            if i > j or v == 0:
                continue
            val = -v if r == 0 else v
            lines.append(f"{r} {bi + 1} {i + 1} {j + 1} {float(val)!r}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_sdpa(source: str | Path) -> SdpInstance:
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) or (
        isinstance(source, str) and "\n" not in source and Path(source).exists()) else str(source)
    sense = "min"
    body = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line[0] in '"*':
            if "sense=max" in line:
                sense = "max"
            continue
        body.append(line.replace(",", " ").replace("{", " ").replace("}", " "))
    try:
        m = int(body[0].split()[0])
        nb = int(body[1].split()[0])
        sizes = [abs(int(v)) for v in body[2].split()[:nb]]
        c = np.array([float(v) for v in body[3].split()[:m]])
    except (IndexError, ValueError) as exc:
        raise SdpError(f"malformed SDPA header: {exc}") from exc
    if sense == "max":
        c = -c
    data = [dict() for _ in sizes]
    for lineno, line in enumerate(body[4:], start=5):
        parts = line.split()
        try:
            r, bi, i, j = (int(v) for v in parts[:4])
            v = float(parts[4])
        except (IndexError, ValueError) as exc:
            raise SdpError(f"malformed entry on data line {lineno}: {line!r}") from exc
        if r == 0:
            v = -v
        n = sizes[bi - 1]
        data[bi - 1][(r, (i - 1) * n + (j - 1))] = v
        data[bi - 1][(r, (j - 1) * n + (i - 1))] = v
    F = []
    for d, n in zip(data, sizes):
        rows = [k[0] for k in d]
        cols = [k[1] for k in d]
        F.append(sp.csr_matrix((list(d.values()), (rows, cols)), shape=(m + 1, n * n)))
    return SdpInstance(c, tuple(F), tuple(sizes), sense)


# ---------------------------------------------------------------- serialisation

def solution_to_json(s: SdpSolution) -> dict:
    return {
        "x": [float(v) for v in s.x],
        "primal_objective": s.primal_objective,
        "dual_objective": s.dual_objective,
        "Y": [Y.tolist() for Y in s.Y],
        "S": [S.tolist() for S in s.S],
        "gap": s.gap,
        "status": s.status,
        "iterations": s.iterations,
        "weak_duality_violations": s.weak_duality_violations,
    }


def solution_from_json(d: dict) -> SdpSolution:
    return SdpSolution(
        x=np.array(d["x"], dtype=float),
        primal_objective=d["primal_objective"],
        dual_objective=d["dual_objective"],
        Y=[np.array(Y, dtype=float) for Y in d["Y"]],
        S=[np.array(S, dtype=float) for S in d["S"]],
        gap=d["gap"],
        status=d["status"],
        iterations=d["iterations"],
        weak_duality_violations=d.get("weak_duality_violations", 0),
    )


def certificate_hash(p: SdpInstance, s: SdpSolution) -> str:
    payload = json.dumps({"instance": p.digest(), "x": [round(float(v), 12) for v in s.x],
                          "bound": round(s.dual_objective, 12)}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
