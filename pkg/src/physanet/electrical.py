"""Weighted Laplacians and per-commodity minimum-energy electrical flows.

For capacities ``x > 0`` the conductance of edge ``e`` is ``x_e / c_e`` and
``L(x) = A X C^-1 A^T``.  Each demand column ``b`` induces node potentials
``L(x) p = b`` (unique after grounding), normalized drops
``lambda = C^-1 A^T p`` and the minimum-energy flow ``q = x * lambda``.
Capacities may sit at a tiny positive floor; all formulas below only ever
multiply by ``x`` (the ``0^2/0 = 0`` convention), never divide by it.
"""

from __future__ import annotations

from dataclasses import dataclass
from weakref import WeakKeyDictionary

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ScenarioError, SolverError
from .model import Instance

DEFAULT_SOLVE_TOL = 1e-10

# Direct factorizations stay accurate when capacities span ten orders of
# magnitude (edges parked at the floor), which stalls iterative solvers;
# dense Cholesky for small systems, sparse LU for large incidence systems,
# Jacobi-preconditioned CG as the iterative option.
DENSE_SOLVER_MAX_N = 200


@dataclass(frozen=True)
class GroundingPlan:
    """Node indices whose potential is pinned to zero.

    One node per connected component for incidence matrices; for a general
    matrix, a row set that makes a kernel basis of ``A^T`` nonsingular.
    """

    nodes: tuple[int, ...]


@dataclass(frozen=True)
class FlowSolution:
    """Potentials, flows and normalized drops for all commodities at one x."""

    P: np.ndarray        # (n, k) node potentials
    Q: np.ndarray        # (m, k) minimum-energy flows
    Lambda: np.ndarray   # (m, k) potential drops per unit cost
    energy_per_commodity: np.ndarray  # (k,) values b_i^T p_i
    residuals: np.ndarray             # (k,) relative residuals of the solves


class _Context:
    """Per-instance precomputation shared by repeated solves."""

    def __init__(self, instance: Instance):
        self.instance = instance
        # Below this size plain BLAS on the dense matrix beats sparse ops.
        self.use_dense = instance.n * instance.m <= 50_000
        if instance.is_incidence:
            n = instance.n
            tails, heads = instance.edge_endpoints()
            self.tails, self.heads = tails, heads
            # Flat positions for one-shot bincount assembly of dense L(x).
            self.flat_idx = np.concatenate([tails * n + heads, heads * n + tails,
                                            tails * (n + 1), heads * (n + 1)])
        else:
            self.tails = self.heads = None
            self.flat_idx = None
        if instance.is_incidence and not self.use_dense:
            m = instance.m
            rows = np.concatenate([self.tails, self.heads])
            cols = np.concatenate([np.arange(m), np.arange(m)])
            data = np.concatenate([np.ones(m), -np.ones(m)])
            self.A_csr = sp.csr_matrix((data, (rows, cols)),
                                       shape=(instance.n, m))
            self.A_csc_T = self.A_csr.T.tocsr()
        else:
            self.A_csr = None
            self.A_csc_T = None
        self._keep_cache: dict[tuple[int, ...], np.ndarray] = {}

    def keep_indices(self, grounding: GroundingPlan) -> np.ndarray:
        keep = self._keep_cache.get(grounding.nodes)
        if keep is None:
            grounded = np.array(grounding.nodes, dtype=np.intp)
            keep = np.setdiff1d(np.arange(self.instance.n), grounded)
            self._keep_cache[grounding.nodes] = keep
        return keep

    def kernel_basis(self) -> np.ndarray:
        """Basis of Ker(A^T), which equals Ker(L(x)) for every x > 0."""
        inst = self.instance
        if inst.is_incidence:
            labels = inst.components()
            ncomp = labels.max() + 1
            K = np.zeros((inst.n, ncomp))
            K[np.arange(inst.n), labels] = 1.0
            return K
        return scipy.linalg.null_space(inst.A.T)


_contexts: WeakKeyDictionary[Instance, _Context] = WeakKeyDictionary()


def _context(instance: Instance) -> _Context:
    ctx = _contexts.get(instance)
    if ctx is None:
        ctx = _Context(instance)
        _contexts[instance] = ctx
    return ctx


def assemble_laplacian(instance: Instance, x: np.ndarray, *,
                       sparse: bool = False):
    """Weighted Laplacian ``A X C^-1 A^T`` (symmetric PSD, n x n)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ScenarioError("capacities must be nonnegative")
    w = x / instance.c
    ctx = _context(instance)
    if sparse:
        if ctx.A_csr is not None:
            return ((ctx.A_csr.multiply(w)) @ ctx.A_csr.T).tocsr()
        return sp.csr_matrix(_assemble_dense(instance, ctx, w))
    return _assemble_dense(instance, ctx, w)


def _assemble_dense(instance: Instance, ctx: _Context, w: np.ndarray) -> np.ndarray:
    n = instance.n
    if ctx.flat_idx is not None:
        vals = np.concatenate([-w, -w, w, w])
        return np.bincount(ctx.flat_idx, weights=vals,
                           minlength=n * n).reshape(n, n)
    return (instance.A * w) @ instance.A.T


def default_grounding(instance: Instance, variant: int = 0) -> GroundingPlan:
    """A grounding set that makes potentials unique.

    ``variant`` selects among valid plans (useful for checking that solved
    quantities do not depend on the particular grounding).
    """
    ctx = _context(instance)
    if instance.is_incidence:
        labels = instance.components()
        nodes = []
        for comp in range(labels.max() + 1):
            members = np.nonzero(labels == comp)[0]
            nodes.append(int(members[0] if variant == 0 else members[-1]))
        return GroundingPlan(nodes=tuple(sorted(nodes)))
    K = ctx.kernel_basis()
    if K.shape[1] == 0:
        return GroundingPlan(nodes=())
    order = np.arange(instance.n) if variant == 0 else np.arange(instance.n)[::-1]
    # Column-pivoted QR on K^T picks rows that keep the basis nonsingular.
    _, _, piv = scipy.linalg.qr(K[order].T, pivoting=True)
    nodes = sorted(int(order[j]) for j in piv[: K.shape[1]])
    sub = K[nodes, :]
    if abs(np.linalg.det(sub)) < 1e-12:
        raise SolverError("failed to find a nonsingular grounding set")
    return GroundingPlan(nodes=tuple(nodes))


def _drops_and_residual(instance: Instance, ctx: _Context, w: np.ndarray,
                        P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Potential drops A^T P per edge, and L(x) P for the residual check."""
    if ctx.A_csr is not None:
        drops = ctx.A_csc_T @ P
        LP = ctx.A_csr @ (w[:, None] * drops)
    else:
        drops = instance.A.T @ P
        LP = instance.A @ (w[:, None] * drops)
    return drops, LP


def _solve_dense(L: np.ndarray, keep: np.ndarray, B: np.ndarray,
                 solve_tol: float) -> np.ndarray:
    Lr = L[np.ix_(keep, keep)]
    Br = B[keep]
    try:
        factor = scipy.linalg.cho_factor(Lr, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SolverError(f"grounded Laplacian is not positive definite: {exc}") from exc
    Pr = scipy.linalg.cho_solve(factor, Br, check_finite=False)
    # One round of iterative refinement guards against ill-conditioned states
    # (capacities spread over many orders of magnitude near the floor).
    for _ in range(2):
        R = Br - Lr @ Pr
        scale = np.maximum(np.linalg.norm(Br, axis=0), 1e-300)
        if np.all(np.linalg.norm(R, axis=0) <= 0.1 * solve_tol * scale):
            break
        Pr += scipy.linalg.cho_solve(factor, R, check_finite=False)
    return Pr


def _solve_splu(Lr: sp.csc_matrix, Br: np.ndarray, solve_tol: float) -> np.ndarray:
    try:
        lu = spla.splu(Lr)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    Pr = lu.solve(Br)
    for _ in range(2):
        R = Br - Lr @ Pr
        scale = np.maximum(np.linalg.norm(Br, axis=0), 1e-300)
        if np.all(np.linalg.norm(R, axis=0) <= 0.1 * solve_tol * scale):
            break
        Pr += lu.solve(R)
    return Pr


def _solve_cg(Lr: sp.csr_matrix, Br: np.ndarray, X0: np.ndarray,
              rtol: float, max_iter: int) -> np.ndarray:
    diag = Lr.diagonal()
    minv = 1.0 / np.where(diag > 0, diag, 1.0)
    X = X0.copy()
    R = Br - Lr @ X
    target = np.maximum(rtol * np.linalg.norm(Br, axis=0), 1e-300)
    Z = minv[:, None] * R
    Pd = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    for _ in range(max_iter):
        active = np.linalg.norm(R, axis=0) > target
        if not active.any():
            break
        Ap = Lr @ Pd
        pAp = np.einsum("ij,ij->j", Pd, Ap)
        safe = np.where(pAp != 0, pAp, 1.0)
        alpha = np.where(active, rz / safe, 0.0)
        X += alpha * Pd
        R -= alpha * Ap
        Z = minv[:, None] * R
        rz_new = np.einsum("ij,ij->j", R, Z)
        beta = np.where(active & (rz != 0), rz_new / np.where(rz != 0, rz, 1.0), 0.0)
        Pd = Z + beta * Pd
        rz = rz_new
    return X


def solve_commodities(instance: Instance, x: np.ndarray,
                      grounding: GroundingPlan | None = None,
                      solve_tol: float = DEFAULT_SOLVE_TOL,
                      solver: str = "auto",
                      warm_start: np.ndarray | None = None) -> FlowSolution:
    """Solve ``L(x) p_i = b_i`` for all commodities and derive flows.

    The returned quantities ``b^T p``, ``p^T L p`` and ``Q`` are independent
    of the grounding plan.  Raises :class:`SolverError` when the relative
    residual of any commodity exceeds ``solve_tol``.
    """
    x = np.asarray(x, dtype=float)
    inst = instance
    ctx = _context(inst)
    if grounding is None:
        grounding = default_grounding(inst)
    keep = ctx.keep_indices(grounding)
    if solver == "auto":
        if inst.n <= DENSE_SOLVER_MAX_N or not inst.is_incidence:
            solver = "dense"
        else:
            solver = "splu"

    B = inst.B
    w = x / inst.c
    P = np.zeros((inst.n, B.shape[1]))
    if B.shape[1] == 0:
        empty = np.zeros((inst.m, 0))
        return FlowSolution(P=P, Q=empty, Lambda=empty,
                            energy_per_commodity=np.zeros(0),
                            residuals=np.zeros(0))
    if solver == "dense":
        L = assemble_laplacian(inst, x)
        P[keep] = _solve_dense(L, keep, B, solve_tol)
    elif solver == "splu":
        L = assemble_laplacian(inst, x, sparse=True)
        Lr = L[keep][:, keep].tocsc()
        P[keep] = _solve_splu(Lr, B[keep], solve_tol)
    elif solver == "cg":
        L = assemble_laplacian(inst, x, sparse=True)
        Lr = L[keep][:, keep].tocsr()
        X0 = np.zeros((len(keep), B.shape[1]))
        if warm_start is not None:
            X0 = np.asarray(warm_start, dtype=float)[keep].copy()
        max_iter = max(10 * inst.n, 50)
        P[keep] = _solve_cg(Lr, B[keep], X0, solve_tol, max_iter)
    else:
        raise ScenarioError(f"unknown solver {solver!r}")

    drops, LP = _drops_and_residual(inst, ctx, w, P)
    scale = np.maximum(np.linalg.norm(B, axis=0), 1e-300)
    residuals = np.linalg.norm(LP - B, axis=0) / scale
    if np.any(residuals > solve_tol):
        worst = int(np.argmax(residuals))
        raise SolverError(
            f"linear solve did not converge (commodity {worst}, "
            f"relative residual {residuals[worst]:.3e} > {solve_tol:.1e})",
            residual=float(residuals[worst]), commodity=worst)

    Lam = drops / inst.c[:, None]
    Q = x[:, None] * Lam
    energy = np.einsum("nk,nk->k", B, P)
    return FlowSolution(P=P, Q=Q, Lambda=Lam,
                        energy_per_commodity=energy, residuals=residuals)


def energy_dissipation(instance: Instance, x: np.ndarray,
                       solution: FlowSolution) -> float:
    """Total energy ``sum_i b_i^T p_i`` = ``Tr(P^T L(x) P)`` (nonnegative)."""
    return float(solution.energy_per_commodity.sum())


def network_cost(instance: Instance, x: np.ndarray) -> float:
    """Cost ``c^T x`` of a capacity vector."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ScenarioError("capacities must be nonnegative")
    return float(instance.c @ x)
