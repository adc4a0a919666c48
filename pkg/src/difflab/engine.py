"""Per-iteration adapt/combine dynamics for the diffusion algorithms.

This module holds the single-node math: gradient estimators (LMS, MCC,
GD-TLS, MTC), the two-step adapt/combine update, and the adaptive
combination rule. The scalar/vector functions here are the reference
semantics; `simulate.py` runs the same update vectorized across Monte
Carlo runs and links.

Gradients are ascent directions of their utility functions, exactly as
used in the weight update phi = w + mu * sum_l alpha_lk * g_lk(w).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

DELTA2_FLOOR = 1e-12
BETA_SUM_TOL = 1e-9

ESTIMATORS = ("lms", "mcc", "mtc", "gdtls")


@dataclass(frozen=True)
class SharedSample:
    """One (regressor, output) pair as received over a link."""

    x: np.ndarray
    y: float
    source: int = 0
    self_link: bool = False


@dataclass(frozen=True)
class KernelSchedule:
    """Piecewise-constant kernel value: `initial` for i < switch, `final` after."""

    initial: float
    final: float
    switch_iteration: int = 100

    def __post_init__(self):
        if self.initial <= 0 or self.final <= 0:
            raise InvalidArgumentError("kernel values must be positive")

    def value(self, iteration):
        return self.initial if iteration < self.switch_iteration else self.final


@dataclass(frozen=True)
class AlgorithmSpec:
    """Configuration of one algorithm variant.

    estimator selects the cross-link gradient; the self link always uses
    the LMS gradient. share_data=False models A=I, share_weights=False
    models C=I. adaptive_combination replaces the fixed C row with the
    inverse-deviation rule.
    """

    name: str
    estimator: str = "lms"
    share_data: bool = True
    share_weights: bool = True
    adaptive_combination: bool = False
    step_size: float = 0.05
    zeta2: KernelSchedule | None = None
    mcc_kernel2: KernelSchedule | None = None
    chi: float = 0.05
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise InvalidArgumentError(f"unknown estimator {self.estimator!r}")
        if np.any(np.asarray(self.step_size) <= 0):
            raise InvalidArgumentError("step sizes must be positive")
        if not 0.0 < self.chi <= 1.0:
            raise InvalidArgumentError("chi must be in (0, 1]")
        if self.epsilon <= 0:
            raise InvalidArgumentError("epsilon must be positive")
        if self.estimator == "mtc" and self.zeta2 is None:
            raise InvalidArgumentError("mtc estimator needs a zeta2 schedule")
        if self.estimator == "mcc" and self.mcc_kernel2 is None:
            raise InvalidArgumentError("mcc estimator needs a kernel schedule")

    @property
    def shares_phi(self):
        """True when intermediate weight vectors cross links."""
        return self.share_weights or self.adaptive_combination

    def step_sizes(self, n_nodes):
        return np.broadcast_to(np.asarray(self.step_size, dtype=float),
                               (n_nodes,)).copy()


@dataclass
class NodeState:
    """Per-node filter state across one iteration."""

    w: np.ndarray
    phi: np.ndarray = None
    delta2: dict = field(default_factory=dict)
    beta_row: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.phi is None:
            self.phi = self.w.copy()


def _residual(w, sample):
    return sample.y - float(w @ sample.x)


def lms_gradient(w, sample):
    """LMS ascent direction e * x with e = y - w'x."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(sample.x, dtype=float)
    if w.shape != x.shape:
        raise InvalidArgumentError("weight/regressor dimension mismatch")
    return _residual(w, sample) * x


def mcc_gradient(w, sample, kernel2):
    """Correntropy-weighted LMS direction: exp(-e^2/(2k^2)) * e * x."""
    if kernel2 <= 0:
        raise InvalidArgumentError("kernel2 must be positive")
    e = _residual(np.asarray(w, dtype=float), sample)
    return np.exp(-e * e / (2.0 * kernel2)) * e * np.asarray(sample.x, dtype=float)


def mtc_cost(w, sample, zeta2, gamma):
    """Instantaneous total-correntropy utility exp(-e^2 / (2 zeta2 (|w|^2+gamma)))."""
    if zeta2 <= 0:
        raise InvalidArgumentError("zeta2 must be positive")
    w = np.asarray(w, dtype=float)
    u = float(w @ w) + gamma
    if u <= 0:
        raise InvalidArgumentError("|w|^2 + gamma must be positive")
    e = _residual(w, sample)
    return float(np.exp(-e * e / (2.0 * zeta2 * u)))


def mtc_gradient(w, sample, zeta2, gamma):
    """Exact gradient of mtc_cost with respect to w.

    G * [(|w|^2+gamma) e x + e^2 w] / (zeta2 (|w|^2+gamma)^2).
    """
    if zeta2 <= 0:
        raise InvalidArgumentError("zeta2 must be positive")
    w = np.asarray(w, dtype=float)
    x = np.asarray(sample.x, dtype=float)
    u = float(w @ w) + gamma
    if u <= 0:
        raise InvalidArgumentError("|w|^2 + gamma must be positive")
    e = _residual(w, sample)
    g_factor = np.exp(-e * e / (2.0 * zeta2 * u))
    return g_factor * (u * e * x + e * e * w) / (zeta2 * u * u)


def gdtls_gradient(w, sample, gamma):
    """Gradient-descent TLS direction: the MTC gradient with the kernel removed.

    Equals -1/2 the gradient of the normalized squared residual
    e^2 / (|w|^2 + gamma).
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(sample.x, dtype=float)
    u = float(w @ w) + gamma
    if u <= 0:
        raise InvalidArgumentError("|w|^2 + gamma must be positive")
    e = _residual(w, sample)
    return (u * e * x + e * e * w) / (u * u)


@dataclass(frozen=True)
class ReceivedSample:
    """A shared sample with its adaptation weight and per-link parameters."""

    sample: SharedSample
    alpha: float
    gamma: float = 0.0
    zeta2: float = 1.0
    kernel2: float = 1.0


def cross_gradient(w, received, estimator):
    """Gradient estimate for one received sample; self links always use LMS."""
    s = received.sample
    if s.self_link or estimator == "lms":
        return lms_gradient(w, s)
    if estimator == "mcc":
        return mcc_gradient(w, s, received.kernel2)
    if estimator == "mtc":
        return mtc_gradient(w, s, received.zeta2, received.gamma)
    if estimator == "gdtls":
        return gdtls_gradient(w, s, received.gamma)
    raise InvalidArgumentError(f"unknown estimator {estimator!r}")


def adapt_step(w, received, estimator, mu):
    """Adaptation step: phi = w + mu * sum_l alpha_lk g_lk(w).

    received must include the self sample; the alphas must sum to one.
    """
    alphas = sum(r.alpha for r in received)
    if abs(alphas - 1.0) > BETA_SUM_TOL:
        raise InvalidArgumentError(f"adaptation weights sum to {alphas}, not 1")
    w = np.asarray(w, dtype=float)
    acc = np.zeros_like(w)
    for r in received:
        if r.alpha != 0.0:
            acc += r.alpha * cross_gradient(w, r, estimator)
    return w + mu * acc


def combine_step(received_phis):
    """Combination step: convex combination of received intermediates."""
    total = sum(b for _, b in received_phis)
    if abs(total - 1.0) > BETA_SUM_TOL or any(b < 0 for _, b in received_phis):
        raise InvalidArgumentError("combination weights must be a convex combination")
    out = None
    for phi, b in received_phis:
        term = b * np.asarray(phi, dtype=float)
        out = term if out is None else out + term
    return out


def local_one_step(w, self_sample, mu, epsilon):
    """Normalized one-step LMS prediction used by the adaptive rule.

    The gradient is scaled by its norm so the probe step has magnitude
    close to mu regardless of the instantaneous error. Normalizing by
    the squared norm instead would make the step magnitude mu/|g|,
    which is unbounded near convergence and floods the deviation
    statistics of every link equally, so the combination weights would
    never concentrate and never reject outliers.
    """
    if epsilon <= 0:
        raise InvalidArgumentError("epsilon must be positive")
    w = np.asarray(w, dtype=float)
    g = lms_gradient(w, self_sample)
    return w + mu * g / (float(np.linalg.norm(g)) + epsilon)


def adaptive_beta_update(prev_delta2, received_phis, w_hat, chi):
    """Smoothed inverse-deviation combination weights.

    delta2_lk <- (1-chi) delta2_lk + chi |phi_lk - w_hat|^2, floored to
    avoid division by zero; beta_lk proportional to 1/delta2_lk over the
    neighborhood.
    """
    if not 0.0 < chi <= 1.0:
        raise InvalidArgumentError("chi must be in (0, 1]")
    w_hat = np.asarray(w_hat, dtype=float)
    new_delta2 = {}
    for l, phi in received_phis:
        dev = phi - w_hat
        new_delta2[l] = (1.0 - chi) * prev_delta2[l] + chi * float(dev @ dev)
    inv = {l: 1.0 / max(d2, DELTA2_FLOOR) for l, d2 in new_delta2.items()}
    total = sum(inv.values())
    beta_row = {l: v / total for l, v in inv.items()}
    return new_delta2, beta_row
