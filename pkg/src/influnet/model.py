"""Projection latent-space model for influence networks.

Edge log-odds: ``eta[i, j] = O[i] + (u_i . u_j) / |u_i|``, equivalently
``O[i] + tau[i, j] * I[j]`` with ``I[j] = |u_j|`` and ``tau`` the cosine
similarity of the latent positions. A zero latent vector contributes a zero
projection term.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import DirectedNetwork


@dataclass
class LatentState:
    O: np.ndarray
    U: np.ndarray
    omega2: float = 1.0
    sigma2: float = 1.0

    def __post_init__(self):
        self.O = np.asarray(self.O, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        if self.U.ndim == 1:
            self.U = self.U[:, None]
        if self.O.ndim != 1 or self.U.shape[0] != self.O.shape[0]:
            raise ValueError("O must be length n and U must be n x p")
        if self.U.shape[1] < 1:
            raise ValueError("latent dimension p must be >= 1")
        if not (self.omega2 > 0 and self.sigma2 > 0):
            raise ValueError("omega2 and sigma2 must be positive")

    @property
    def n(self) -> int:
        return self.O.shape[0]

    @property
    def p(self) -> int:
        return self.U.shape[1]

    def copy(self) -> "LatentState":
        return LatentState(self.O.copy(), self.U.copy(), self.omega2, self.sigma2)

    def rotated(self, Q) -> "LatentState":
        return LatentState(self.O.copy(), self.U @ np.asarray(Q), self.omega2, self.sigma2)


@dataclass(frozen=True)
class Hyperparams:
    a_omega: float = 1.0
    b_omega: float = 1.0
    a_sigma: float = 1.0
    b_sigma: float = 1.0

    def __post_init__(self):
        for name in ("a_omega", "b_omega", "a_sigma", "b_sigma"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive real, got {v!r}")


@dataclass(frozen=True)
class ReparamView:
    I: np.ndarray
    tau: np.ndarray
    theta: np.ndarray
    zero_norm: np.ndarray  # rows of U with |u_i| == 0


def expit(x):
    """Logistic function, evaluated on the branch that cannot overflow."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)


def log_expit(x):
    """log expit(x) = -log(1 + e^-x)."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def bernoulli_loglik(y, eta):
    """Elementwise ``y*log p + (1-y)*log(1-p)`` with ``p = expit(eta)``."""
    eta = np.asarray(eta, dtype=np.float64)
    return np.where(y, eta, 0.0) - np.logaddexp(0.0, eta)


def _safe_norms(U: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", U, U))


def projection_matrix(U: np.ndarray) -> np.ndarray:
    """``P[i, j] = u_i . u_j / |u_i|`` with zero rows where ``|u_i| = 0``."""
    norms = _safe_norms(U)
    G = U @ U.T
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return G * inv[:, None]


def logit_matrix(state: LatentState) -> np.ndarray:
    """All edge log-odds; the diagonal is meaningless and left as computed."""
    return state.O[:, None] + projection_matrix(state.U)


def edge_logit(state: LatentState, i: int, j: int) -> float:
    if i == j:
        raise ValueError("edge_logit undefined for i == j")
    ui, uj = state.U[i], state.U[j]
    norm = math.sqrt(float(ui @ ui))
    proj = float(ui @ uj) / norm if norm > 0 else 0.0
    return float(state.O[i]) + proj


def log_likelihood(net: DirectedNetwork, state: LatentState, y: np.ndarray | None = None) -> float:
    """Bernoulli log-likelihood over all ordered pairs i != j.

    ``y`` may pass a precomputed dense adjacency to avoid rebuilding it.
    """
    if state.n != net.n:
        raise ValueError(f"state has n={state.n} but network has n={net.n}")
    if y is None:
        y = net.adjacency()
    ll = bernoulli_loglik(y, logit_matrix(state))
    np.fill_diagonal(ll, 0.0)
    # row sums first, then a fixed-order total: deterministic reduction
    return float(np.sum(ll.sum(axis=1)))


def reparameterize(state: LatentState) -> ReparamView:
    U = state.U
    norms = _safe_norms(U)
    zero = norms == 0
    theta = np.divide(U, norms[:, None], out=np.zeros_like(U), where=~zero[:, None])
    tau = np.clip(theta @ theta.T, -1.0, 1.0)
    return ReparamView(I=norms, tau=tau, theta=theta, zero_norm=zero)


def posterior_correlation_OI(samples) -> np.ndarray:
    """Per-draw Pearson correlation between capacities O and susceptibilities
    I = |u|. Draws where either vector is constant give NaN."""
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least 2 draws")
    out = np.empty(len(samples))
    for b, s in enumerate(samples):
        if s.n < 2:
            raise ValueError("need n >= 2")
        o = s.O - s.O.mean()
        ii = _safe_norms(s.U)
        ii = ii - ii.mean()
        den = math.sqrt(float(o @ o)) * math.sqrt(float(ii @ ii))
        out[b] = float(o @ ii) / den if den > 0 else np.nan
    return out


def expected_influence_time(O_i: float, tau_ij: float, I_j: float) -> float:
    """Mean time for i to change j by influence: ``exp(-(O_i + tau_ij I_j))``.

    This equals ``exp(-logit Pr(y_ij = 1))`` under the edge model.
    """
    return math.exp(-(O_i + tau_ij * I_j))


# ---------------------------------------------------------------------------
# serialisation: CSV (id, O, u_1..u_p) plus JSON sidecar


def save_state(state: LatentState, csv_path, ids=None) -> Path:
    csv_path = Path(csv_path)
    ids = list(ids) if ids is not None else list(range(state.n))
    header = ["id", "O"] + [f"u_{k + 1}" for k in range(state.p)]
    lines = [",".join(header)]
    for r in range(state.n):
        vals = [repr(float(state.O[r]))] + [repr(float(x)) for x in state.U[r]]
        lines.append(",".join([str(ids[r])] + vals))
    csv_path.write_text("\n".join(lines) + "\n")
    side = csv_path.with_suffix(".json")
    side.write_text(json.dumps({"schema": "latent-state/1", "omega2": state.omega2,
                                "sigma2": state.sigma2, "p": state.p}, indent=2) + "\n")
    return side


def load_state(csv_path) -> tuple[LatentState, list[str]]:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    rows = [ln.split(",") for ln in csv_path.read_text().splitlines() if ln.strip()]
    header, body = rows[0], rows[1:]
    p = int(meta["p"])
    expected = ["id", "O"] + [f"u_{k + 1}" for k in range(p)]
    if header != expected:
        raise ValueError(f"state CSV header {header} does not match {expected}")
    ids = [r[0] for r in body]
    vals = np.array([[float(x) for x in r[1:]] for r in body]).reshape(-1, p + 1)
    return LatentState(vals[:, 0], vals[:, 1:], float(meta["omega2"]), float(meta["sigma2"])), ids
