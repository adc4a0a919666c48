"""Closed-form mean and mean-square analysis under Gaussian noise.

Evaluates, for the diffusion update with a fixed combination matrix:
the expected gradient Jacobians (Hessians of the per-link utilities) at
the true weights, the gradient covariances there, the mean error
recursion and its spectral radius, per-node step-size bounds, and the
steady-state network MSD.

All blocks are the exact expectations of the gradient estimators the
simulator runs, so predicted and simulated dynamics share one step-size
convention. Cross links are assumed to run the total-correntropy path
(positive input-channel variance); the analysis assumes purely Gaussian
noise throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InstabilityError,
    InvalidArgumentError,
    NumericalFailureError,
)
from .topology import validate_combination_matrix

MSD_FIXED_POINT_TOL = 1e-12
MSD_FIXED_POINT_CAP = 100_000
POWER_ITER_TOL = 1e-10
POWER_ITER_CAP = 100_000
DENSE_EIG_MAX = 64


@dataclass(frozen=True)
class TheoryInputs:
    """Scenario parameters for the closed-form analysis.

    Per-link arrays are (N, N) with entry [l, k] for the directed link
    l -> k; entries off the neighborhood are ignored.
    """

    h: np.ndarray
    R: np.ndarray          # (N, L, L) input covariance per node
    A: np.ndarray          # adaptation weights
    C: np.ndarray          # combination weights
    mu: np.ndarray         # (N,) step sizes
    obs_var: np.ndarray    # (N,) observation noise variances
    sigma_x2: np.ndarray   # (N, N) input-channel variances
    sigma_y2: np.ndarray   # (N, N) output-channel variances
    sigma_phi2: np.ndarray  # (N, N) weight-channel variances
    gamma: np.ndarray      # (N, N) TLS ratios per link
    zeta2: np.ndarray      # (N, N) kernel parameters per link
    graph: object = None

    def __post_init__(self):
        for name in ("h", "R", "A", "C", "mu", "obs_var", "sigma_x2",
                     "sigma_y2", "sigma_phi2", "gamma", "zeta2"):
            v = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, v)
        if (self.obs_var < 0).any() or (self.sigma_x2 < 0).any() \
                or (self.sigma_y2 < 0).any() or (self.sigma_phi2 < 0).any():
            raise InvalidArgumentError("variances must be nonnegative")

    @property
    def n_nodes(self):
        return self.A.shape[0]

    @property
    def dim(self):
        return self.h.size

    def in_neighborhood(self, l, k):
        if self.graph is not None:
            return l == k or l in self.graph.neighbors(k)
        return self.A[l, k] != 0 or self.C[l, k] != 0 or l == k


@dataclass(frozen=True)
class MsdPrediction:
    """Steady-state MSD with the fixed-point solve diagnostics."""

    msd_linear: float
    msd_db: float
    converged: bool
    iterations_used: int


@dataclass(frozen=True)
class TradeoffReport:
    """Trace decomposition of the steady-state noise drivers."""

    total: float
    per_node: np.ndarray
    combination_part: float   # Tr(V): weight-exchange noise
    gradient_part: float      # Tr(R_script): gradient noise through adaptation


def hessian_at_optimum(inputs, l, k):
    """Expected gradient Jacobian H_lk at the true weights.

    Self link: -R_l. Cross link: the total-correntropy utility curvature
    -(1 / (zeta2 (|h|^2 + gamma))) * (zeta2/(sigma_x2 + zeta2))^{3/2} R_l.
    """
    if not inputs.in_neighborhood(l, k):
        raise InvalidArgumentError(f"link {l}->{k} is not in the neighborhood")
    R_l = inputs.R[l]
    if l == k:
        return -R_l
    u = float(inputs.h @ inputs.h) + inputs.gamma[l, k]
    z2 = inputs.zeta2[l, k]
    sx2 = inputs.sigma_x2[l, k]
    factor = (z2 / (sx2 + z2)) ** 1.5 / (z2 * u)
    return -factor * R_l


def gradient_covariance(inputs, l, k):
    """Covariance Q_lk of the instantaneous gradient at the true weights.

    Self link: obs_var_l * R_l. Cross link:
    sigma_x2 / (zeta2^2 (|h|^2+gamma))^2 * (zeta2/(2 sigma_x2+zeta2))^{3/2}
      * [(|h|^2+gamma)(R_l + sigma_x2 I) - sigma_x2 h h^T].
    """
    if not inputs.in_neighborhood(l, k):
        raise InvalidArgumentError(f"link {l}->{k} is not in the neighborhood")
    R_l = inputs.R[l]
    h = inputs.h
    if l == k:
        return inputs.obs_var[l] * R_l
    u = float(h @ h) + inputs.gamma[l, k]
    z2 = inputs.zeta2[l, k]
    sx2 = inputs.sigma_x2[l, k]
    if sx2 == 0.0:
        return np.zeros_like(R_l)
    pref = sx2 / (z2 * z2 * u * u) * (z2 / (2.0 * sx2 + z2)) ** 1.5
    core = u * (R_l + sx2 * np.eye(inputs.dim)) - sx2 * np.outer(h, h)
    return pref * core


def _summed_hessian(inputs, k):
    """sum_l alpha_lk H_lk(h) over the neighborhood of k."""
    n, L = inputs.n_nodes, inputs.dim
    out = np.zeros((L, L))
    for l in range(n):
        a = inputs.A[l, k]
        if a != 0.0 and inputs.in_neighborhood(l, k):
            out += a * hessian_at_optimum(inputs, l, k)
    return out

def _block_diag_hessian(inputs):
    n, L = inputs.n_nodes, inputs.dim
    H = np.zeros((n * L, n * L))
    for k in range(n):
        H[k * L:(k + 1) * L, k * L:(k + 1) * L] = _summed_hessian(inputs, k)
    return H


def _script_matrices(inputs):
    """Return (A_script, M_script, H_script) block matrices."""
    n, L = inputs.n_nodes, inputs.dim
    A_script = np.kron(inputs.A, np.eye(L))
    M_script = np.kron(np.diag(inputs.mu), np.eye(L))
    return A_script, M_script, _block_diag_hessian(inputs)


def spectral_radius(m, tol=POWER_ITER_TOL, cap=POWER_ITER_CAP):
    """Spectral radius by power iteration, dense eigensolver for small matrices.

    Power iteration tracks the growth factor of the iterated vector; on
    stall (complex-dominant or degenerate spectra) it falls back to the
    dense solver.
    """
    m = np.asarray(m, dtype=float)
    if m.shape[0] <= DENSE_EIG_MAX:
        return float(np.abs(np.linalg.eigvals(m)).max())
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(m.shape[0])
    v /= np.linalg.norm(v)
    prev = np.inf
    streak = 0
    for _ in range(cap):
        w = m @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
        if abs(lam - prev) <= tol * max(lam, 1e-300):
            streak += 1
            if streak >= 3:
                return lam
        else:
            streak = 0
        prev = lam
    return float(np.abs(np.linalg.eigvals(m)).max())


def mean_recursion_matrix(inputs):
    """Mean error recursion matrix B = A_script^T (I + M_script H_script) and rho(B)."""
    A_script, M_script, H_script = _script_matrices(inputs)
    eye = np.eye(A_script.shape[0])
    B = A_script.T @ (eye + M_script @ H_script)
    return B, spectral_radius(B)


def stepsize_upper_bound(inputs, k):
    """Largest stable step size for node k: 2 / rho(sum_l alpha_lk H_lk(h))."""
    S = _summed_hessian(inputs, k)
    rho = float(np.abs(np.linalg.eigvals(S)).max())
    if rho == 0.0:
        raise InvalidArgumentError(
            f"summed Hessian at node {k} is zero; step-size bound is infinite"
        )
    return 2.0 / rho


def _noise_driver_matrices(inputs):
    """V_script (weight-exchange noise) and R_script (gradient noise)."""
    n, L = inputs.n_nodes, inputs.dim
    A_script, M_script, _ = _script_matrices(inputs)
    C_blocks = np.zeros((n * L, n * L))
    V = np.zeros((n * L, n * L))
    for p in range(n):
        blk = np.zeros((L, L))
        vcoef = 0.0
        for l in range(n):
            if inputs.in_neighborhood(l, p):
                a = inputs.A[l, p]
                if a != 0.0:
                    blk += a * a * gradient_covariance(inputs, l, p)
                b = inputs.C[l, p]
                if b != 0.0 and l != p:
                    vcoef += b * b * inputs.sigma_phi2[l, p]
        C_blocks[p * L:(p + 1) * L, p * L:(p + 1) * L] = blk
        V[p * L:(p + 1) * L, p * L:(p + 1) * L] = vcoef * np.eye(L)
    R_script = A_script.T @ M_script @ C_blocks @ M_script.T @ A_script
    return V, R_script


def steady_state_msd(inputs, tol=MSD_FIXED_POINT_TOL, cap=MSD_FIXED_POINT_CAP):
    """Steady-state network MSD via the Kronecker-free fixed point.

    MSD = (1/N) vec{V + R}^T (I - F)^{-1} vec{I} with
    F = (B_hat kron B_hat), B_hat = (I + M H) A_script. The inverse's
    action is realized as T <- (V + R) + B_hat^T T B_hat, whose limit
    satisfies Tr(T) = N * MSD.
    """
    A_script, M_script, H_script = _script_matrices(inputs)
    eye = np.eye(A_script.shape[0])
    B_hat = (eye + M_script @ H_script) @ A_script
    rho = spectral_radius(A_script.T @ (eye + M_script @ H_script))
    if rho >= 1.0:
        raise InstabilityError(
            f"mean recursion is unstable (rho = {rho:.6g} >= 1)"
        )
    V, R_script = _noise_driver_matrices(inputs)
    M0 = V + R_script
    T = M0.copy()
    Bt = B_hat.T
    for it in range(1, cap + 1):
        T_new = M0 + Bt @ T @ B_hat
        delta = float(np.linalg.norm(T_new - T))
        T = T_new
        if delta < tol:
            msd = float(np.trace(T)) / inputs.n_nodes
            return MsdPrediction(
                msd,
                10.0 * np.log10(msd) if msd > 0 else -np.inf,
                True,
                it,
            )
    raise NumericalFailureError(
        f"MSD fixed point did not converge in {cap} iterations "
        f"(last delta {delta:.3g})"
    )


def steady_state_msd_bruteforce(inputs):
    """Direct (I - F)^{-1} solve with F materialized; tiny instances only."""
    A_script, M_script, H_script = _script_matrices(inputs)
    nl = A_script.shape[0]
    if nl > 8:
        raise InvalidArgumentError("brute-force MSD limited to N*L <= 8")
    eye = np.eye(nl)
    B_hat = (eye + M_script @ H_script) @ A_script
    F = np.kron(B_hat, B_hat)
    V, R_script = _noise_driver_matrices(inputs)
    vec_eye = eye.reshape(-1, order="F")
    x = np.linalg.solve(np.eye(nl * nl) - F, vec_eye)
    msd = float((V + R_script).reshape(-1, order="F") @ x) / inputs.n_nodes
    return MsdPrediction(
        msd, 10.0 * np.log10(msd) if msd > 0 else -np.inf, True, 0
    )


def combination_noise_tradeoff(inputs):
    """Tr(V + R) total and per node; compares combination strategies."""
    V, R_script = _noise_driver_matrices(inputs)
    L = inputs.dim
    diag = np.diag(V + R_script)
    per_node = diag.reshape(inputs.n_nodes, L).sum(axis=1)
    return TradeoffReport(
        total=float(diag.sum()),
        per_node=per_node,
        combination_part=float(np.trace(V)),
        gradient_part=float(np.trace(R_script)),
    )


def validate_inputs(inputs, graph):
    """Check the combination matrices against the graph (helper for the CLI)."""
    from .topology import CombinationMatrix

    for role, m in (("adaptation", inputs.A), ("combination", inputs.C)):
        report = validate_combination_matrix(
            CombinationMatrix(m, role=role), graph
        )
        if not report.ok:
            raise InvalidArgumentError(
                f"{role} matrix violates {report.constraint} at {report.indices}"
            )
