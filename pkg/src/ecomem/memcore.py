"""Model mathematics: lag weights, filtered covariates, likelihoods, priors, gradient."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import gammaln

from .dataset import LagPanel, MemorySpec
from .formula import Formula
from .splinebasis import SplineDesign, build_design, generalized_inverse_logdet

FAMILY_LINK = {"gaussian": "identity", "poisson": "log", "binomial": "logit"}
LOG_2PI = float(np.log(2 * np.pi))
# exp() overflows just above this
_MAX_LOG = 709.0


class NonFiniteLikelihood(FloatingPointError):
    pass


@dataclass(frozen=True)
class Priors:
    coef_sd: float = 100.0
    ridge: float = 1e-2
    tau_df: float = 3.0
    tau_scale: float = 1.0
    sigma_df: float = 3.0
    # None: 5 * sd(response)
    sigma_scale: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ModelConfig:
    family: str
    formula: Formula
    spec: MemorySpec
    priors: Priors = field(default_factory=Priors)

    def __post_init__(self):
        if self.family not in FAMILY_LINK:
            raise ValueError(f"unknown family {self.family!r}")

    @property
    def link(self) -> str:
        return FAMILY_LINK[self.family]


@dataclass
class ModelState:
    mu: float
    beta: np.ndarray
    eta: dict[str, np.ndarray]
    tau: dict[str, float]
    sigma2: float | None = None

    def copy(self) -> "ModelState":
        return ModelState(
            float(self.mu),
            np.array(self.beta, dtype=float),
            {v: np.array(e, dtype=float) for v, e in self.eta.items()},
            dict(self.tau),
            self.sigma2,
        )


# ---------------------------------------------------------------------------
# elementary pieces


def compute_weights(eta: np.ndarray, design: SplineDesign | np.ndarray) -> np.ndarray:
    """Softmax of the spline log-weights ``H @ eta`` (max-shifted)."""
    H = design.H if isinstance(design, SplineDesign) else np.asarray(design)
    z = H @ eta
    z = np.exp(z - z.max())
    return z / z.sum()


def filter_covariate(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    return X @ w


def center_eta(eta: np.ndarray, design: SplineDesign) -> np.ndarray:
    """Shift ``eta`` along the constant direction so ``mean(H @ eta) == 0``.

    B-spline rows sum to one, so this only translates the log-weights and
    leaves the weights unchanged.
    """
    return eta - np.mean(design.H @ eta)


def slice_basis(design: SplineDesign) -> np.ndarray:
    """Orthonormal basis (k x k-1) of coefficient vectors with ``mean(H eta) == 0``."""
    h = design.H.mean(axis=0)
    u, _, _ = np.linalg.svd(h[:, None], full_matrices=True)
    return u[:, 1:]


def term_matrix(terms, cols: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    """One column per formula term; an interaction is the product of its mains."""
    Z = np.empty((n, len(terms)))
    for i, term in enumerate(terms):
        col = cols[term[0]]
        for v in term[1:]:
            col = col * cols[v]
        Z[:, i] = col
    return Z


def inv_link(family: str, pred: np.ndarray) -> np.ndarray:
    if family == "gaussian":
        return pred
    if family == "poisson":
        return np.exp(pred)
    return 0.5 * (1.0 + np.tanh(0.5 * pred))


def family_loglik(
    family: str,
    y: np.ndarray,
    pred: np.ndarray,
    sigma2: float | None = None,
    trials: np.ndarray | None = None,
) -> float:
    if family == "gaussian":
        r = y - pred
        out = -0.5 * len(y) * (LOG_2PI + np.log(sigma2)) - 0.5 * float(r @ r) / sigma2
    elif family == "poisson":
        if pred.size and pred.max() > _MAX_LOG:
            raise NonFiniteLikelihood("Poisson rate overflow")
        out = float(y @ pred - np.exp(pred).sum() - gammaln(y + 1).sum())
    elif family == "binomial":
        out = float(
            (gammaln(trials + 1) - gammaln(y + 1) - gammaln(trials - y + 1)).sum()
            + y @ pred
            - trials @ np.logaddexp(0.0, pred)
        )
    else:
        raise ValueError(family)
    if not np.isfinite(out):
        raise NonFiniteLikelihood(f"{family} log-likelihood is {out}")
    return float(out)


def family_score(family, y, pred, sigma2=None, trials=None) -> np.ndarray:
    """Derivative of the log-likelihood with respect to the linear predictor."""
    if family == "gaussian":
        return (y - pred) / sigma2
    if family == "poisson":
        return y - np.exp(pred)
    return y - trials * inv_link("binomial", pred)


def log_folded_t(x: float, df: float, scale: float) -> float:
    """Density of ``|T|`` with ``T ~ scale * t_df``; -inf outside ``x > 0``."""
    if not x > 0:
        return -np.inf
    z = x / scale
    return float(
        np.log(2.0)
        + gammaln((df + 1) / 2)
        - gammaln(df / 2)
        - 0.5 * np.log(df * np.pi)
        - np.log(scale)
        - (df + 1) / 2 * np.log1p(z * z / df)
    )


def _dlog_folded_t(x: float, df: float, scale: float) -> float:
    return -(df + 1) * x / (df * scale * scale + x * x)


# ---------------------------------------------------------------------------
# model


class MemoryModel:
    """Posterior for one panel, spline designs and configuration.

    Parameters are ``mu``, ``beta`` (one per formula term), spline
    coefficients ``eta[v]`` and regulators ``tau[v]`` for each memory
    covariate with ``L > 0``, and ``sigma2`` for the Gaussian family.
    """

    def __init__(
        self,
        panel: LagPanel,
        designs: Mapping[str, SplineDesign],
        config: ModelConfig,
    ):
        self.panel = panel
        self.config = config
        self.family = config.family
        self.terms = list(config.formula.terms)
        self.term_names = config.formula.term_names
        self.mem = [v for v in config.spec.mem_vars if config.spec.has_memory(v)]
        for v in self.mem:
            if v not in designs:
                raise ValueError(f"no spline design for memory covariate {v!r}")
            if v not in panel.lagged:
                raise ValueError(f"panel has no lag matrix for {v!r}")
            if designs[v].L != config.spec.L[v]:
                raise ValueError(f"design for {v!r} built for L={designs[v].L}")
        self.designs = {v: designs[v] for v in self.mem}
        for v in config.formula.variables:
            if v not in panel.plain and v not in panel.lagged:
                raise ValueError(f"formula variable {v!r} not in panel")
        if self.family == "binomial" and panel.trials is None:
            raise ValueError("binomial family needs trials")
        self.y = panel.y
        self.trials = panel.trials
        self.n = panel.n
        pr = config.priors
        self.priors = pr
        self.precision = {
            v: self.designs[v].S + pr.ridge * np.eye(self.designs[v].k) for v in self.mem
        }
        self.prec_logdet, self.prec_rank = {}, {}
        for v in self.mem:
            Q = slice_basis(self.designs[v])
            self.prec_logdet[v], self.prec_rank[v] = generalized_inverse_logdet(
                Q.T @ self.precision[v] @ Q
            )
        sd_y = float(np.std(self.y, ddof=1)) if self.n > 1 else 1.0
        self.sigma_scale = pr.sigma_scale if pr.sigma_scale is not None else 5.0 * sd_y
        if not self.sigma_scale > 0:
            self.sigma_scale = 1.0

    # -- dimensions / packing -------------------------------------------------

    @property
    def p(self) -> int:
        return len(self.terms)

    @property
    def has_sigma(self) -> bool:
        return self.family == "gaussian"

    @property
    def dim(self) -> int:
        return 1 + self.p + sum(self.designs[v].k + 1 for v in self.mem) + int(self.has_sigma)

    def param_names(self) -> list[str]:
        names = ["mu"] + [f"beta.{t}" for t in self.term_names]
        for v in self.mem:
            names += [f"eta.{v}.{i}" for i in range(self.designs[v].k)]
        names += [f"tau.{v}" for v in self.mem]
        if self.has_sigma:
            names.append("sigma2")
        return names

    def pack(self, state: ModelState) -> np.ndarray:
        """Unconstrained vector: mu, beta, eta blocks, log tau, log sigma2."""
        parts = [[state.mu], state.beta]
        parts += [state.eta[v] for v in self.mem]
        parts.append([np.log(state.tau[v]) for v in self.mem])
        if self.has_sigma:
            parts.append([np.log(state.sigma2)])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def unpack(self, theta: np.ndarray) -> ModelState:
        theta = np.asarray(theta, dtype=float)
        i = 0
        mu = float(theta[i])
        i += 1
        beta = theta[i : i + self.p].copy()
        i += self.p
        eta = {}
        for v in self.mem:
            k = self.designs[v].k
            eta[v] = theta[i : i + k].copy()
            i += k
        tau = {}
        for v in self.mem:
            tau[v] = float(np.exp(theta[i]))
            i += 1
        sigma2 = float(np.exp(theta[i])) if self.has_sigma else None
        return ModelState(mu, beta, eta, tau, sigma2)

    # -- forward model --------------------------------------------------------

    def weights(self, state: ModelState) -> dict[str, np.ndarray]:
        return {v: compute_weights(state.eta[v], self.designs[v]) for v in self.mem}

    def main_columns(self, state: ModelState, weights=None) -> dict[str, np.ndarray]:
        if weights is None:
            weights = self.weights(state)
        cols = dict(self.panel.plain)
        for v in self.mem:
            cols[v] = filter_covariate(self.panel.lagged[v], weights[v])
        return cols

    def design_from_columns(self, cols: Mapping[str, np.ndarray]) -> np.ndarray:
        return term_matrix(self.terms, cols, self.n)

    def design_matrix(self, state: ModelState) -> np.ndarray:
        """Term columns; interactions multiply already-filtered main columns."""
        return self.design_from_columns(self.main_columns(state))

    def linear_predictor(self, state: ModelState) -> np.ndarray:
        return state.mu + self.design_matrix(state) @ state.beta

    def mean(self, state: ModelState) -> np.ndarray:
        return inv_link(self.family, self.linear_predictor(state))

    # -- densities ------------------------------------------------------------

    def loglik_from_predictor(self, pred: np.ndarray, sigma2: float | None) -> float:
        return family_loglik(self.family, self.y, pred, sigma2, self.trials)

    def log_likelihood(self, state: ModelState) -> float:
        return self.loglik_from_predictor(self.linear_predictor(state), state.sigma2)

    def log_prior_coef(self, mu: float, beta: np.ndarray) -> float:
        s2 = self.priors.coef_sd**2
        m = 1 + len(beta)
        return float(-0.5 * m * (LOG_2PI + np.log(s2)) - 0.5 * (mu * mu + beta @ beta) / s2)

    def log_prior_eta(self, v: str, eta: np.ndarray, tau: float) -> float:
        """Normal with precision ``(S + ridge I) / tau^2`` on the centred slice.

        ``eta`` is only identified up to the constant direction, so the density
        is normalized over the ``k - 1`` dimensional slice ``mean(H eta) = 0``
        that :func:`center_eta` projects onto.
        """
        tau2 = tau * tau
        if not (tau > 0 and tau2 > 0):
            return -np.inf
        r = self.prec_rank[v]
        q = float(eta @ self.precision[v] @ eta)
        return float(-0.5 * r * LOG_2PI + 0.5 * self.prec_logdet[v] - r * np.log(tau) - 0.5 * q / tau2)

    def log_prior_tau(self, tau: float) -> float:
        return log_folded_t(tau, self.priors.tau_df, self.priors.tau_scale)

    def log_prior_sigma2(self, sigma2: float) -> float:
        """Half-t on ``sigma``, expressed as a density on ``sigma2``."""
        if not sigma2 > 0:
            return -np.inf
        sigma = np.sqrt(sigma2)
        return log_folded_t(sigma, self.priors.sigma_df, self.sigma_scale) - np.log(2 * sigma)

    def log_prior(self, state: ModelState) -> float:
        lp = self.log_prior_coef(state.mu, np.asarray(state.beta))
        for v in self.mem:
            lp += self.log_prior_eta(v, state.eta[v], state.tau[v])
            lp += self.log_prior_tau(state.tau[v])
        if self.has_sigma:
            lp += self.log_prior_sigma2(state.sigma2)
        return float(lp)

    def log_posterior(self, state: ModelState) -> float:
        lp = self.log_prior(state)
        if not np.isfinite(lp):
            return -np.inf
        try:
            return lp + self.log_likelihood(state)
        except NonFiniteLikelihood:
            return -np.inf

    def log_density(self, theta: np.ndarray) -> float:
        """Log posterior in unconstrained coordinates, log-Jacobian included."""
        state = self.unpack(theta)
        jac = sum(np.log(state.tau[v]) for v in self.mem)
        if self.has_sigma:
            jac += np.log(state.sigma2)
        return self.log_posterior(state) + jac

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        """Analytic gradient of :meth:`log_density`."""
        state = self.unpack(theta)
        weights = self.weights(state)
        cols = self.main_columns(state, weights)
        Z = self.design_from_columns(cols)
        pred = state.mu + Z @ state.beta
        r = family_score(self.family, self.y, pred, state.sigma2, self.trials)
        s2 = self.priors.coef_sd**2

        g_mu = r.sum() - state.mu / s2
        g_beta = Z.T @ r - state.beta / s2
        g_eta, g_logtau = [], []
        for v in self.mem:
            # d pred / d xtilde_v, product rule over terms containing v
            dx = np.zeros(self.n)
            for b, term in zip(state.beta, self.terms):
                if v in term:
                    other = np.ones(self.n)
                    for u in term:
                        if u != v:
                            other = other * cols[u]
                    dx += b * other
            a = self.panel.lagged[v].T @ (r * dx)
            w = weights[v]
            dz = w * (a - w @ a)
            tau = state.tau[v]
            P = self.precision[v]
            eta = state.eta[v]
            g_eta.append(self.designs[v].H.T @ dz - P @ eta / tau**2)
            q = float(eta @ P @ eta)
            g_logtau.append(
                -self.prec_rank[v] + q / tau**2
                + tau * _dlog_folded_t(tau, self.priors.tau_df, self.priors.tau_scale)
                + 1.0
            )
        parts = [[g_mu], g_beta, *g_eta, g_logtau]
        if self.has_sigma:
            sigma2 = state.sigma2
            rss = float((self.y - pred) @ (self.y - pred))
            sigma = np.sqrt(sigma2)
            g_ls = -0.5 * self.n + 0.5 * rss / sigma2
            # prior on sigma plus change of variables: log p_sigma(sigma) + log(sigma) - log 2
            g_ls += 0.5 * sigma * _dlog_folded_t(sigma, self.priors.sigma_df, self.sigma_scale)
            g_ls += 0.5
            parts.append([g_ls])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    # -- starting point -------------------------------------------------------

    def initial_state(self) -> ModelState:
        """Link of the mean response, zero slopes, uniform weights, unit regulators."""
        y = self.y
        if self.family == "gaussian":
            mu = float(np.mean(y))
        elif self.family == "poisson":
            mu = float(np.log(max(np.mean(y), 1e-3)))
        else:
            p = float(np.clip(np.sum(y) / np.sum(self.trials), 1e-3, 1 - 1e-3))
            mu = float(np.log(p / (1 - p)))
        sigma2 = None
        if self.has_sigma:
            sigma2 = float(np.var(y, ddof=1)) if self.n > 1 else 1.0
            if not sigma2 > 0:
                sigma2 = 1.0
        return ModelState(
            mu=mu,
            beta=np.zeros(self.p),
            eta={v: np.zeros(self.designs[v].k) for v in self.mem},
            tau={v: 1.0 for v in self.mem},
            sigma2=sigma2,
        )


def build_designs(spec: MemorySpec, order: int = 4) -> dict[str, SplineDesign]:
    return {
        v: build_design(spec.L[v], spec.k[v], order=order)
        for v in spec.mem_vars
        if spec.has_memory(v)
    }


# ---------------------------------------------------------------------------
# functional front-ends


def linear_predictor(state, panel, designs, config) -> np.ndarray:
    return MemoryModel(panel, designs, config).linear_predictor(state)


def log_likelihood(state, panel, designs, config) -> float:
    return MemoryModel(panel, designs, config).log_likelihood(state)


def log_prior(state, panel, designs, config) -> float:
    return MemoryModel(panel, designs, config).log_prior(state)


def log_posterior(state, panel, designs, config) -> float:
    return MemoryModel(panel, designs, config).log_posterior(state)


def log_posterior_gradient(state, panel, designs, config) -> np.ndarray:
    m = MemoryModel(panel, designs, config)
    return m.gradient(m.pack(state))
