"""Metropolis-within-Gibbs sampler with burn-in-only adaptive random-walk blocks.

Per iteration the blocks are visited in a fixed order:

1. ``(mu, beta)``: exact multivariate-normal draw for the Gaussian family,
   joint adaptive random walk otherwise;
2. ``log sigma2`` (Gaussian only), scalar random walk;
3. for every memory covariate: ``eta`` (multivariate random walk, then
   re-centred along the constant direction), then ``log tau``.

Chain ``c`` draws from ``numpy.random.default_rng(base_seed + c)``.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .memcore import (
    MemoryModel,
    ModelState,
    NonFiniteLikelihood,
    center_eta,
    compute_weights,
)

log = logging.getLogger(__name__)

BLOCKS = ("coef", "sigma2", "eta", "tau")


class SamplerError(RuntimeError):
    pass


class AllProposalsRejected(SamplerError):
    def __init__(self, block: str):
        super().__init__(f"block {block!r} rejected every proposal; check data scaling")
        self.block = block


class NonFiniteStart(SamplerError):
    pass


class SingularGram(SamplerError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 3
    n_iter: int = 10000
    burn_in: int = 5000
    thin: int = 5
    base_seed: int = 0
    adapt_window: int = 50
    target_accept: float = 0.3
    # random-walk updates of each eta block per iteration
    eta_steps: int = 5
    # test hook: blocks held at their initial values ("coef", "sigma2", "eta", "tau")
    fixed: frozenset = frozenset()
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_chains < 1 or self.thin < 1:
            raise ValueError("n_chains and thin must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        unknown = set(self.fixed) - set(BLOCKS)
        if unknown:
            raise ValueError(f"unknown blocks {sorted(unknown)}")

    @property
    def n_draws(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fixed"] = sorted(self.fixed)
        return d


@dataclass
class ChainSet:
    """Retained draws, shape ``(n_chains, n_draws, n_params)``, plus metadata."""

    names: list[str]
    draws: np.ndarray
    acceptance: list[dict[str, float]]
    seeds: list[int]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.draws.shape[-1] != len(self.names):
            raise ValueError("name manifest does not match draw width")

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def param(self, name: str) -> np.ndarray:
        """Draws of one parameter, shape ``(n_chains, n_draws)``."""
        return self.draws[:, :, self.index(name)]

    def pooled(self, name: str) -> np.ndarray:
        return self.param(name).reshape(-1)

    def weight_names(self, var: str) -> list[str]:
        prefix = f"w.{var}."
        return [n for n in self.names if n.startswith(prefix)]

    def memory_vars(self) -> list[str]:
        return list(dict.fromkeys(n.split(".")[1] for n in self.names if n.startswith("w.")))

    def weights(self, var: str) -> np.ndarray:
        """Weight draws, shape ``(n_chains, n_draws, L+1)``."""
        idx = [self.index(n) for n in self.weight_names(var)]
        return self.draws[:, :, idx]


class AdaptiveProposal:
    """Gaussian random-walk proposal ``x + scale * chol(cov) z``.

    During burn-in the scale is nudged toward the target acceptance after
    every window and the covariance is re-estimated from the latter half of
    the block's history. Nothing changes once :meth:`freeze` is called.
    """

    def __init__(self, dim: int, init_sd: float | np.ndarray, target: float, window: int):
        self.dim = dim
        self.target = target
        self.window = window
        self.scale = 2.38 / np.sqrt(dim)
        sd = np.broadcast_to(np.asarray(init_sd, dtype=float), (dim,))
        self.cov = np.diag(sd**2)
        self.chol = np.linalg.cholesky(self.cov)
        self.history: list[np.ndarray] = []
        self.n_windows = 0
        self.window_accepts = 0
        self.window_tries = 0
        self.accepts = 0
        self.tries = 0
        self.frozen = False
        self._empirical = False

    def step(self, rng: np.random.Generator) -> np.ndarray:
        return self.scale * (self.chol @ rng.standard_normal(self.dim))

    def propose(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return x + self.step(rng)

    def record(self, accepted: bool, x: np.ndarray) -> None:
        self.tries += 1
        self.accepts += accepted
        if self.frozen:
            return
        self.window_tries += 1
        self.window_accepts += accepted
        self.history.append(np.array(x, dtype=float))
        if self.window_tries >= self.window:
            self._adapt()

    def _adapt(self) -> None:
        self.n_windows += 1
        rate = self.window_accepts / self.window_tries
        gain = min(1.0, 3.0 / np.sqrt(self.n_windows))
        self.scale *= np.exp(gain * (rate - self.target))
        self.window_accepts = self.window_tries = 0
        hist = self.history[len(self.history) // 2 :]
        if len(hist) >= max(20 * self.dim, 100):
            cov = np.atleast_2d(np.cov(np.asarray(hist), rowvar=False))
            cov = cov + 1e-8 * np.eye(self.dim)
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                return
            if not self._empirical:
                self._empirical = True
                self.scale = 2.38 / np.sqrt(self.dim)
            self.cov, self.chol = cov, chol

    def freeze(self) -> None:
        self.frozen = True
        self.history = []

    @property
    def rate(self) -> float:
        return self.accepts / self.tries if self.tries else float("nan")

    def snapshot(self) -> tuple[float, np.ndarray]:
        return float(self.scale), self.cov.copy()


def conjugate_coef_moments(X: np.ndarray, y: np.ndarray, sigma2: float, coef_sd: float):
    """Mean and covariance of ``(mu, beta)`` given filtered design ``X = [1, Z]``.

    Raises :class:`SingularGram` when ``X`` is column-rank deficient.
    """
    G = X.T @ X
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= 1e-10 * max(ev[-1], 1e-300):
        raise SingularGram("filtered design matrix is rank deficient")
    Q = G / sigma2 + np.eye(X.shape[1]) / coef_sd**2
    cov = np.linalg.inv(Q)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (X.T @ y) / sigma2
    return mean, cov


def eta_bases(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit linear-trend vector and orthonormal basis of the penalized subspace.

    Together with the constant vector these span coefficient space; the
    constant direction is handled by re-centering instead of proposals.
    """
    k = S.shape[0]
    lin = np.arange(k) - (k - 1) / 2.0
    lin = lin / np.linalg.norm(lin)
    ev, vec = np.linalg.eigh(S)
    Bp = vec[:, ev > 1e-10 * ev.max()]
    return lin, Bp


class Chain:
    """One Markov chain; owns its state, caches and RNG."""

    def __init__(
        self,
        model: MemoryModel,
        sconfig: SamplerConfig,
        seed: int,
        state: ModelState | None = None,
    ):
        self.model = model
        self.sconfig = sconfig
        self.rng = np.random.default_rng(seed)
        self.state = (state or model.initial_state()).copy()
        for v in model.mem:
            self.state.eta[v] = center_eta(self.state.eta[v], model.designs[v])
        if not np.isfinite(model.log_posterior(self.state)):
            raise NonFiniteStart("initial state has -inf log posterior")
        self._refresh()
        m, sc = model, sconfig
        tgt, win = sc.target_accept, sc.adapt_window
        self.proposals: dict[str, AdaptiveProposal] = {}
        if m.family != "gaussian":
            self.proposals["coef"] = AdaptiveProposal(1 + m.p, 0.05, tgt, win)
        else:
            self.proposals["sigma2"] = AdaptiveProposal(1, 0.3, tgt, win)
        for v in m.mem:
            self.proposals[f"eta.{v}"] = AdaptiveProposal(m.designs[v].k - 1, 0.3, tgt, win)
            self.proposals[f"tau.{v}"] = AdaptiveProposal(1, 0.5, tgt, win)
        self.bases = {v: eta_bases(m.designs[v].S) for v in m.mem}

    def _refresh(self) -> None:
        m, s = self.model, self.state
        self.w = m.weights(s)
        self.cols = m.main_columns(s, self.w)
        self.Z = m.design_from_columns(self.cols)
        self.pred = s.mu + self.Z @ s.beta
        self.ll = m.loglik_from_predictor(self.pred, s.sigma2)

    def _try_ll(self, pred: np.ndarray, sigma2) -> float:
        try:
            return self.model.loglik_from_predictor(pred, sigma2)
        except NonFiniteLikelihood:
            return -np.inf

    def _accept(self, log_ratio: float) -> bool:
        return bool(np.isfinite(log_ratio) and np.log(self.rng.uniform()) < log_ratio)

    # -- blocks ---------------------------------------------------------------

    def update_gaussian_conjugate(self) -> None:
        m, s = self.model, self.state
        X = np.column_stack([np.ones(m.n), self.Z])
        mean, cov = conjugate_coef_moments(X, m.y, s.sigma2, m.priors.coef_sd)
        L = np.linalg.cholesky(cov)
        draw = mean + L @ self.rng.standard_normal(len(mean))
        s.mu, s.beta = float(draw[0]), draw[1:].copy()
        self.pred = s.mu + self.Z @ s.beta
        self.ll = m.loglik_from_predictor(self.pred, s.sigma2)

    def update_sigma2(self) -> bool:
        m, s = self.model, self.state
        prop = self.proposals["sigma2"]
        u = np.log(s.sigma2)
        u_new = float(prop.propose(np.array([u]), self.rng)[0])
        s2_new = float(np.exp(u_new))
        ll_new = self._try_ll(self.pred, s2_new)
        log_ratio = (
            ll_new - self.ll
            + m.log_prior_sigma2(s2_new) + u_new
            - m.log_prior_sigma2(s.sigma2) - u
        )
        acc = self._accept(log_ratio)
        if acc:
            s.sigma2, self.ll = s2_new, ll_new
        prop.record(acc, np.array([np.log(s.sigma2)]))
        return acc

    def update_glm_block(self) -> bool:
        m, s = self.model, self.state
        prop = self.proposals["coef"]
        x = np.concatenate([[s.mu], s.beta])
        x_new = prop.propose(x, self.rng)
        pred_new = x_new[0] + self.Z @ x_new[1:]
        ll_new = self._try_ll(pred_new, s.sigma2)
        log_ratio = (
            ll_new - self.ll
            + m.log_prior_coef(x_new[0], x_new[1:])
            - m.log_prior_coef(s.mu, s.beta)
        )
        acc = self._accept(log_ratio)
        if acc:
            s.mu, s.beta = float(x_new[0]), x_new[1:].copy()
            self.pred, self.ll = pred_new, ll_new
        prop.record(acc, np.concatenate([[s.mu], s.beta]))
        return acc

    def eta_coords(self, v: str) -> np.ndarray:
        """Proposal coordinates: linear null direction, penalized part over tau."""
        lin, Bp = self.bases[v]
        eta = self.state.eta[v]
        return np.concatenate([[lin @ eta], Bp.T @ eta / self.state.tau[v]])

    def eta_log_ratio(self, v: str, eta_new: np.ndarray) -> tuple[float, tuple]:
        """Metropolis log ratio for moving ``eta[v]`` to ``eta_new`` (symmetric proposal).

        Also returns the quantities needed to commit the move.
        """
        m, s = self.model, self.state
        w_new = compute_weights(eta_new, m.designs[v])
        cols = dict(self.cols)
        cols[v] = m.panel.lagged[v] @ w_new
        Z_new = m.design_from_columns(cols)
        pred_new = s.mu + Z_new @ s.beta
        ll_new = self._try_ll(pred_new, s.sigma2)
        tau = s.tau[v]
        log_ratio = (
            ll_new - self.ll
            + m.log_prior_eta(v, eta_new, tau)
            - m.log_prior_eta(v, s.eta[v], tau)
        )
        return log_ratio, (w_new, cols, Z_new, pred_new, ll_new)

    def update_eta_block(self, v: str, eta_new: np.ndarray | None = None) -> bool:
        """Random-walk step on ``eta[v]``; ``eta_new`` overrides the proposal.

        Steps are drawn in :meth:`eta_coords`, i.e. the penalized directions
        move on the scale of the current ``tau``. ``tau`` is fixed during the
        step, so the proposal stays symmetric in ``eta``.
        """
        m, s = self.model, self.state
        prop = self.proposals[f"eta.{v}"]
        eta = s.eta[v]
        if eta_new is None:
            lin, Bp = self.bases[v]
            d = prop.step(self.rng)
            eta_new = eta + lin * d[0] + s.tau[v] * (Bp @ d[1:])
        log_ratio, (w_new, cols, Z_new, pred_new, ll_new) = self.eta_log_ratio(v, eta_new)
        acc = self._accept(log_ratio)
        if acc:
            s.eta[v] = center_eta(eta_new, m.designs[v])
            self.w[v], self.cols, self.Z = w_new, cols, Z_new
            self.pred, self.ll = pred_new, ll_new
        prop.record(acc, self.eta_coords(v))
        return acc

    def update_tau(self, v: str, rescale: bool = True) -> bool:
        """Random walk on ``log tau[v]``.

        With ``rescale`` the penalized part of ``eta[v]`` is multiplied by the
        same factor as ``tau`` (a deterministic map with Jacobian
        ``exp(rank * delta)``), which keeps the pair out of the small-``tau``
        funnel. Without it this is the plain conditional update of ``tau``.
        """
        m, s = self.model, self.state
        prop = self.proposals[f"tau.{v}"]
        u = np.log(s.tau[v])
        delta = float(prop.step(self.rng)[0])
        u_new = u + delta
        t_new = float(np.exp(u_new))
        eta = s.eta[v]
        log_ratio = (
            m.log_prior_tau(t_new) + u_new - m.log_prior_tau(s.tau[v]) - u
            - m.log_prior_eta(v, eta, s.tau[v])
        )
        if rescale:
            _, Bp = self.bases[v]
            eta_new = eta + np.expm1(delta) * (Bp @ (Bp.T @ eta))
            w_new = compute_weights(eta_new, m.designs[v])
            cols = dict(self.cols)
            cols[v] = m.panel.lagged[v] @ w_new
            Z_new = m.design_from_columns(cols)
            pred_new = s.mu + Z_new @ s.beta
            ll_new = self._try_ll(pred_new, s.sigma2)
            log_ratio += ll_new - self.ll + m.log_prior_eta(v, eta_new, t_new)
            log_ratio += Bp.shape[1] * delta
        else:
            log_ratio += m.log_prior_eta(v, eta, t_new)
        acc = self._accept(log_ratio)
        if acc:
            s.tau[v] = t_new
            if rescale:
                s.eta[v] = center_eta(eta_new, m.designs[v])
                self.w[v], self.cols, self.Z = w_new, cols, Z_new
                self.pred, self.ll = pred_new, ll_new
        prop.record(acc, np.array([np.log(s.tau[v])]))
        return acc

    def step(self) -> None:
        fixed = self.sconfig.fixed
        m = self.model
        if "coef" not in fixed:
            if m.family == "gaussian":
                self.update_gaussian_conjugate()
            else:
                self.update_glm_block()
        if m.has_sigma and "sigma2" not in fixed:
            self.update_sigma2()
        for v in m.mem:
            if "eta" not in fixed:
                for _ in range(self.sconfig.eta_steps):
                    self.update_eta_block(v)
            if "tau" not in fixed:
                self.update_tau(v, rescale="eta" not in fixed)

    def freeze(self) -> None:
        for p in self.proposals.values():
            p.freeze()

    def current_vector(self) -> np.ndarray:
        """Natural-scale parameters followed by derived weights."""
        m, s = self.model, self.state
        parts = [[s.mu], s.beta]
        parts += [s.eta[v] for v in m.mem]
        parts.append([s.tau[v] for v in m.mem])
        if m.has_sigma:
            parts.append([s.sigma2])
        parts += [self.w[v] for v in m.mem]
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def acceptance(self) -> dict[str, float]:
        return {name: p.rate for name, p in self.proposals.items() if p.tries}


def draw_names(model: MemoryModel) -> list[str]:
    names = model.param_names()
    for v in model.mem:
        names += [f"w.{v}.{lag}" for lag in range(model.designs[v].L + 1)]
    return names


def _run_one(model: MemoryModel, sconfig: SamplerConfig, chain: int, state) -> tuple:
    seed = sconfig.base_seed + chain
    ch = Chain(model, sconfig, seed, state)
    out = np.empty((sconfig.n_draws, len(draw_names(model))))
    t0 = time.perf_counter()
    j = 0
    for it in range(sconfig.n_iter):
        if it == sconfig.burn_in:
            ch.freeze()
        ch.step()
        if it >= sconfig.burn_in and (it - sconfig.burn_in + 1) % sconfig.thin == 0:
            if j < len(out):
                out[j] = ch.current_vector()
                j += 1
    log.debug("chain %d done in %.1fs", chain, time.perf_counter() - t0)
    acc = ch.acceptance()
    for name, p in ch.proposals.items():
        if p.tries and p.accepts == 0:
            raise AllProposalsRejected(name)
    return out, acc, seed


def run_chains(
    model: MemoryModel,
    sconfig: SamplerConfig,
    initial_state: ModelState | None = None,
) -> ChainSet:
    """Run ``sconfig.n_chains`` independent chains and collect retained draws."""
    if model.n == 0:
        raise ValueError("empty panel")
    args = [(model, sconfig, c, initial_state) for c in range(sconfig.n_chains)]
    if sconfig.n_jobs > 1 and sconfig.n_chains > 1:
        with ProcessPoolExecutor(max_workers=sconfig.n_jobs) as ex:
            results = list(ex.map(_run_one, *zip(*args)))
    else:
        results = [_run_one(*a) for a in args]
    draws = np.stack([r[0] for r in results])
    return ChainSet(
        names=draw_names(model),
        draws=draws,
        acceptance=[r[1] for r in results],
        seeds=[r[2] for r in results],
        config=sconfig.to_dict(),
    )
