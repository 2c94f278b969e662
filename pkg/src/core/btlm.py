#!/usr/bin/env python3
"""
Block-Tridiagonal Levenberg-Marquardt Module

This module provides the sparse Gauss-Newton machinery for residual systems
whose residual groups couple at most two adjacent variable blocks: assembly
of the block-tridiagonal normal equations, their linear-time block Cholesky
solve, a damped LM step, and a dense reference solver used as a test oracle.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky, solve_triangular
from tqdm import tqdm

from src.core.settings import LMConfig
from src.utils.errors import ContractViolationError, NumericalError

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("btlm")


@dataclass
class ResidualBlockSystem:
    """
    Residual groups rho_t with Jacobians A_t = d rho_t / d x_t and B_t = d rho_t / d x_{t+1}.

    Attributes:
        residuals (List[np.ndarray]): rho_t, one vector per group.
        A (List[np.ndarray]): Jacobian blocks against the group's own variable block.
        B (List[Optional[np.ndarray]]): Jacobian blocks against the next variable block (None for the last group).
    """

    residuals: List[np.ndarray]
    A: List[np.ndarray]
    B: List[Optional[np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if not self.B:
            self.B = [None] * len(self.A)
        self.validate()

    @property
    def num_blocks(self) -> int:
        return len(self.A)

    @property
    def block_sizes(self) -> List[int]:
        return [a.shape[1] for a in self.A]

    def validate(self) -> None:
        """
        Check block shapes.

        Raises:
            ContractViolationError: On any shape mismatch.
        """
        T = len(self.A)
        if T == 0 or len(self.residuals) != T or len(self.B) != T:
            raise ContractViolationError(
                f"need equally many residual groups and A/B blocks, got "
                f"{len(self.residuals)}, {len(self.A)}, {len(self.B)}"
            )
        if self.B[-1] is not None:
            raise ContractViolationError("the last residual group cannot couple to a following block")
        for t in range(T):
            rows = np.shape(self.residuals[t])[0]
            if np.ndim(self.A[t]) != 2 or self.A[t].shape[0] != rows:
                raise ContractViolationError(f"A[{t}] has shape {np.shape(self.A[t])}, expected ({rows}, b)")
            if self.B[t] is not None and self.B[t].shape != (rows, self.A[t + 1].shape[1]):
                raise ContractViolationError(
                    f"B[{t}] has shape {self.B[t].shape}, expected ({rows}, {self.A[t + 1].shape[1]})"
                )

    def residual_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(r, dtype=float) for r in self.residuals])

    def sum_of_squares(self) -> float:
        return float(sum(np.dot(r, r) for r in self.residuals))

    def gradient(self) -> np.ndarray:
        """J^T rho, stacked over variable blocks."""
        g = [self.A[t].T @ self.residuals[t] for t in range(self.num_blocks)]
        for t in range(self.num_blocks - 1):
            if self.B[t] is not None:
                g[t + 1] = g[t + 1] + self.B[t].T @ self.residuals[t]
        return np.concatenate(g)

    def stacked_jacobian(self) -> np.ndarray:
        """Dense Jacobian of the stacked residual vector."""
        offsets = np.concatenate([[0], np.cumsum(self.block_sizes)])
        rows = [len(r) for r in self.residuals]
        J = np.zeros((sum(rows), offsets[-1]))
        row = 0
        for t in range(self.num_blocks):
            J[row:row + rows[t], offsets[t]:offsets[t + 1]] = self.A[t]
            if self.B[t] is not None:
                J[row:row + rows[t], offsets[t + 1]:offsets[t + 2]] = self.B[t]
            row += rows[t]
        return J


@dataclass
class BlockTridiag:
    """
    Symmetric block-tridiagonal matrix.

    Attributes:
        diagonal (List[np.ndarray]): Diagonal blocks D_t.
        lower (List[np.ndarray]): Sub-diagonal blocks E_t, the (t+1, t) block.
    """

    diagonal: List[np.ndarray]
    lower: List[np.ndarray]

    def to_dense(self) -> np.ndarray:
        sizes = [d.shape[0] for d in self.diagonal]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        M = np.zeros((offsets[-1], offsets[-1]))
        for t, d in enumerate(self.diagonal):
            M[offsets[t]:offsets[t + 1], offsets[t]:offsets[t + 1]] = d
        for t, e in enumerate(self.lower):
            M[offsets[t + 1]:offsets[t + 2], offsets[t]:offsets[t + 1]] = e
            M[offsets[t]:offsets[t + 1], offsets[t + 1]:offsets[t + 2]] = e.T
        return M


def assemble(system: ResidualBlockSystem) -> Tuple[BlockTridiag, np.ndarray]:
    """
    Assemble the normal equations J^T J and the gradient J^T rho.

    Args:
        system (ResidualBlockSystem): The residual system.

    Returns:
        Tuple[BlockTridiag, np.ndarray]: The matrix and the stacked vector g.
    """
    system.validate()
    T = system.num_blocks
    diagonal = [system.A[t].T @ system.A[t] for t in range(T)]
    lower = []
    for t in range(T - 1):
        B = system.B[t]
        if B is None:
            lower.append(np.zeros((system.A[t + 1].shape[1], system.A[t].shape[1])))
            continue
        diagonal[t + 1] = diagonal[t + 1] + B.T @ B
        lower.append(B.T @ system.A[t])
    # Exact symmetry of the diagonal blocks.
    diagonal = [0.5 * (d + d.T) for d in diagonal]
    return BlockTridiag(diagonal, lower), system.gradient()


def _split(vector: np.ndarray, sizes: Sequence[int]) -> List[np.ndarray]:
    return np.split(np.asarray(vector, dtype=float), np.cumsum(sizes)[:-1])


def solve_block_tridiag(M: BlockTridiag, damping: float, g: np.ndarray) -> np.ndarray:
    """
    Solve (M + damping I) x = g by block Cholesky forward elimination and back substitution.

    Args:
        M (BlockTridiag): Symmetric block-tridiagonal matrix.
        damping (float): Diagonal damping.
        g (np.ndarray): Right-hand side, stacked over blocks.

    Returns:
        np.ndarray: The solution x.

    Raises:
        NumericalError: If a diagonal block is not positive definite after elimination.
    """
    sizes = [d.shape[0] for d in M.diagonal]
    if sum(sizes) != len(g):
        raise ContractViolationError(f"right-hand side has length {len(g)}, expected {sum(sizes)}")
    rhs = _split(g, sizes)
    T = len(sizes)
    L: List[np.ndarray] = []
    C: List[Optional[np.ndarray]] = [None]
    y: List[np.ndarray] = []
    for t in range(T):
        S = M.diagonal[t] + damping * np.eye(sizes[t])
        b = rhs[t]
        if t > 0:
            # C_t = E_{t-1} L_{t-1}^{-T}
            Ct = solve_triangular(L[t - 1], M.lower[t - 1].T, lower=True).T
            C.append(Ct)
            S = S - Ct @ Ct.T
            b = b - Ct @ y[t - 1]
        try:
            Lt = cholesky(S, lower=True)
        except LinAlgError:
            raise NumericalError(f"block Cholesky failed at block {t}", block_index=t)
        L.append(Lt)
        y.append(solve_triangular(Lt, b, lower=True))
    x: List[np.ndarray] = [None] * T
    for t in reversed(range(T)):
        b = y[t]
        if t < T - 1:
            b = b - C[t + 1].T @ x[t + 1]
        x[t] = solve_triangular(L[t], b, lower=True, trans="T")
    return np.concatenate(x)


def dense_reference_solve(system: ResidualBlockSystem, damping: float = 0.0) -> np.ndarray:
    """
    Solve the same damped normal equations through an explicit dense J^T J.

    Raises:
        NumericalError: If the dense factorization fails.
    """
    J = system.stacked_jacobian()
    M = J.T @ J + damping * np.eye(J.shape[1])
    try:
        factor = cho_factor(M, lower=True)
    except LinAlgError as e:
        raise NumericalError(f"dense Cholesky failed: {e}")
    return cho_solve(factor, J.T @ system.residual_vector())


def lm_step(variables: np.ndarray, build: Callable[[np.ndarray], ResidualBlockSystem],
            cfg: LMConfig) -> Tuple[np.ndarray, float]:
    """
    One fixed-damping Levenberg-Marquardt step.

    Args:
        variables (np.ndarray): Stacked variable blocks.
        build (Callable): Produces the residual system at given variables.
        cfg (LMConfig): Damping settings.

    Returns:
        Tuple[np.ndarray, float]: Updated variables and the sum of squared residuals before the step.

    Raises:
        NumericalError: On non-finite residuals or a failed factorization.
    """
    system = build(variables)
    rho = system.residual_vector()
    if not np.all(np.isfinite(rho)):
        raise NumericalError("residuals contain non-finite values")
    M, g = assemble(system)
    step = solve_block_tridiag(M, cfg.damping, g)
    return variables - step, float(np.dot(rho, rho))


def random_block_system(T: int, b: int, rng: np.random.Generator, rows: Optional[int] = None,
                        condition: float = 1.0) -> ResidualBlockSystem:
    """
    Random pairwise-chained residual system.

    Args:
        T (int): Number of blocks.
        b (int): Block size.
        rng (np.random.Generator): Random source.
        rows (Optional[int]): Residual rows per group, default b + 2.
        condition (float): Column scale spread; values > 1 make the system ill-conditioned.
    """
    rows = b + 2 if rows is None else rows
    scale = np.logspace(0.0, np.log10(condition), b) if condition > 1.0 else np.ones(b)
    A = [rng.standard_normal((rows, b)) * scale for _ in range(T)]
    B = [rng.standard_normal((rows, b)) * scale for _ in range(T - 1)] + [None]
    residuals = [rng.standard_normal(rows) for _ in range(T)]
    return ResidualBlockSystem(residuals, A, B)


def solver_benchmark(horizons: Sequence[int], block_size: int = 12, repeats: int = 3,
                     seed: int = 0, damping: float = 1e-3, include_dense: bool = True,
                     verbose: bool = False) -> List[Dict[str, object]]:
    """
    Time the block and dense solvers on deterministic workloads.

    Args:
        horizons (Sequence[int]): Block counts T to sweep.
        block_size (int): Block size b.
        repeats (int): Timings per point; the minimum is reported.
        seed (int): Workload seed.
        damping (float): LM damping.
        include_dense (bool): Also time the dense reference path.
        verbose (bool): Show a progress bar.

    Returns:
        List[Dict[str, object]]: Rows with keys T, block_size, solver, wall_ms.
    """
    rows: List[Dict[str, object]] = []
    for T in tqdm(list(horizons), desc="Benchmarking solvers", disable=not verbose):
        system = random_block_system(T, block_size, np.random.default_rng(seed + T))
        M, g = assemble(system)
        dense = M.to_dense() + damping * np.eye(len(g))
        timings = {"block": [], "dense": []}
        for _ in range(repeats):
            start = time.perf_counter()
            solve_block_tridiag(M, damping, g)
            timings["block"].append(time.perf_counter() - start)
            if include_dense:
                start = time.perf_counter()
                cho_solve(cho_factor(dense, lower=True), g)
                timings["dense"].append(time.perf_counter() - start)
        for solver, values in timings.items():
            if values:
                rows.append({"T": T, "block_size": block_size, "solver": solver,
                             "wall_ms": 1000.0 * min(values)})
        logger.debug(f"T={T}: block {1000 * min(timings['block']):.3f} ms")
    return rows


def scaling_ratios(rows: Sequence[Dict[str, object]]) -> Dict[str, float]:
    """Ratio time(max T) / time(min T) per solver."""
    ratios = {}
    for solver in sorted({r["solver"] for r in rows}):
        points = sorted((r["T"], r["wall_ms"]) for r in rows if r["solver"] == solver)
        if len(points) >= 2 and points[0][1] > 0:
            ratios[solver] = points[-1][1] / points[0][1]
    return ratios
