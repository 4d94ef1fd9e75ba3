"""Sparse two-output Gaussian process with a linear model of coregionalization.

Outputs (cadence, stride) are ``W @ g(x)`` for independent latent GPs ``g_q``
with kernel ``k_q = SE_q + const_q`` over the scalar input x (the cue given at
the previous step, 0 meaning no cue). Inference uses inducing inputs ``Z``
shared by all latents and the collapsed variational free-energy bound::

    F = log N(y | 0, Q_ff + Lambda) - 1/2 tr(Lambda^-1 (K_ff - Q_ff))

evaluated in the whitened parameterization u_q = L_q v_q. For fixed
hyperparameters the optimal q(v) is Gaussian with precision
``A = I + Phi Phi^T`` and mean ``A^-1 Phi y~`` (Phi holds the whitened
projections scaled by the noise), which is what the model stores as its
variational state. Hyperparameters are fitted by maximizing F with L-BFGS-B
using analytic gradients.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .errors import UninitializedModelError
from .imu import FORMAT_TAG

log = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
_LOG_2PI = math.log(2.0 * math.pi)

# log-space boxes for the hyperparameters
_BOUNDS = {
    "se_var": (1e-4, 1e2),
    "lengthscale": (0.1, 20.0),
    "const_var": (1e-4, 1e3),
    "noise_var": (1e-6, 10.0),
    "w": (-10.0, 10.0),
}


@dataclass(frozen=True)
class MogpConfig:
    n_outputs: int = 2
    n_latent: int = 2
    input_dim: int = 1
    n_inducing: int = 20
    max_iter_init: int = 200
    max_iter_update: int = 20
    rel_tol: float = 1e-6
    buffer_cap: int = 500
    freeze_hyperparameters: bool = False
    zero_inducing: bool = True
    jitter: float = 1e-6
    noise_floor: float = 1e-4

    def __post_init__(self) -> None:
        if (self.n_outputs, self.n_latent, self.input_dim) != (2, 2, 1):
            raise ValueError("only P = Q = 2, D = 1 is supported")
        if self.n_inducing < 2:
            raise ValueError("need at least two inducing points")
        if self.buffer_cap < 1:
            raise ValueError("buffer_cap must be >= 1")


@dataclass(frozen=True, slots=True)
class StepObservation:
    n: int
    cue_prev: float
    cadence: float
    stride: float

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.cue_prev, self.cadence, self.stride))


@dataclass(frozen=True, slots=True)
class Prediction:
    f_hat: float
    l_hat: float
    var_f: float
    var_l: float


@dataclass(frozen=True)
class KernelParams:
    se_var: np.ndarray
    lengthscale: np.ndarray
    const_var: np.ndarray

    def gram(self, q: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d2 = (a[:, None] - b[None, :]) ** 2
        return self.se_var[q] * np.exp(-0.5 * d2 / self.lengthscale[q] ** 2) + self.const_var[q]

    def diag(self, q: int, n: int) -> np.ndarray:
        return np.full(n, self.se_var[q] + self.const_var[q])


@dataclass
class _Data:
    x: np.ndarray  # (N,)
    y: np.ndarray  # (N, P)


def _pack(kern: KernelParams, w: np.ndarray, noise_var: np.ndarray) -> np.ndarray:
    per_latent = np.stack([np.log(kern.se_var), np.log(kern.lengthscale), np.log(kern.const_var)], axis=1)
    return np.concatenate([per_latent.ravel(), w.ravel(), np.log(noise_var)])


def _unpack(theta: np.ndarray, p: int, q: int) -> tuple[KernelParams, np.ndarray, np.ndarray]:
    k = theta[: 3 * q].reshape(q, 3)
    kern = KernelParams(np.exp(k[:, 0]), np.exp(k[:, 1]), np.exp(k[:, 2]))
    w = theta[3 * q : 3 * q + p * q].reshape(p, q)
    noise_var = np.exp(theta[3 * q + p * q :])
    return kern, w, noise_var


def _theta_bounds(p: int, q: int) -> list[tuple[float, float]]:
    lb = [tuple(math.log(v) for v in _BOUNDS[name]) for name in ("se_var", "lengthscale", "const_var")]
    return lb * q + [_BOUNDS["w"]] * (p * q) + [tuple(math.log(v) for v in _BOUNDS["noise_var"])] * p


def _zz_factors(kern: KernelParams, z: np.ndarray, jitter: float) -> list[np.ndarray]:
    out = []
    m = len(z)
    for q in range(len(kern.se_var)):
        kzz = kern.gram(q, z, z) + jitter * (kern.se_var[q] + kern.const_var[q]) * np.eye(m)
        out.append(cholesky(kzz, lower=True))
    return out


def free_energy(
    theta: np.ndarray,
    data: _Data,
    z: np.ndarray,
    jitter: float,
    grad: bool = True,
) -> tuple[float, np.ndarray | None, tuple[np.ndarray, np.ndarray]]:
    """Collapsed bound, its gradient w.r.t. ``theta`` and the optimal whitened q(v).

    Returns ``(F, dF/dtheta, (mean, cov))`` where ``mean`` is (Q*M,) and
    ``cov`` is (Q*M, Q*M), latent-major.
    """
    x, y = data.x, data.y
    n, p = y.shape
    qn = (len(theta) - p) // (3 + p)
    kern, w, noise_var = _unpack(theta, p, qn)
    m = len(z)
    s = 1.0 / np.sqrt(noise_var)  # (P,)

    chols = _zz_factors(kern, z, jitter)
    kzx = [kern.gram(q, z, x) for q in range(qn)]
    cs = [solve_triangular(chols[q], kzx[q], lower=True) for q in range(qn)]
    c_sq = [np.sum(c * c, axis=0) for c in cs]  # (N,) per latent
    resid_diag = [kern.se_var[q] + kern.const_var[q] - c_sq[q] for q in range(qn)]
    resid_sum = np.array([r.sum() for r in resid_diag])  # (Q,)

    phi = np.empty((qn * m, p * n))
    for q in range(qn):
        for j in range(p):
            phi[q * m : (q + 1) * m, j * n : (j + 1) * n] = (w[j, q] * s[j]) * cs[q]
    y_t = (y * s[None, :]).T.ravel()  # (P*N,), output-major

    a = phi @ phi.T
    a[np.diag_indices_from(a)] += 1.0
    la = cholesky(a, lower=True)
    r = phi @ y_t
    beta = cho_solve((la, True), r)
    t_p = (w**2) @ resid_sum  # (P,)

    f = (
        -0.5 * p * n * _LOG_2PI
        - n * float(np.sum(np.log(noise_var))) * 0.5
        - 0.5 * float(y_t @ y_t)
        + 0.5 * float(r @ beta)
        - float(np.sum(np.log(np.diag(la))))
        - 0.5 * float(np.sum(s**2 * t_p))
    )
    a_inv = cho_solve((la, True), np.eye(qn * m))
    a_inv = 0.5 * (a_inv + a_inv.T)
    if not grad:
        return f, None, (beta, a_inv)

    g_phi = -(a_inv + np.outer(beta, beta)) @ phi + np.outer(beta, y_t)
    g_yt = phi.T @ beta - y_t

    g_theta = np.zeros_like(theta)
    g_w = np.zeros((p, qn))
    g_s = np.zeros(p)
    for j in range(p):
        yj = y[:, j]
        g_s[j] += float(g_yt[j * n : (j + 1) * n] @ yj) + n / s[j] - s[j] * t_p[j]
    for q in range(qn):
        c = cs[q]
        g_c = np.zeros_like(c)
        for j in range(p):
            blk = g_phi[q * m : (q + 1) * m, j * n : (j + 1) * n]
            inner = float(np.sum(c * blk))
            g_w[j, q] = s[j] * inner - s[j] ** 2 * w[j, q] * resid_sum[q]
            g_s[j] += w[j, q] * inner
            g_c += (w[j, q] * s[j]) * blk + (s[j] ** 2 * w[j, q] ** 2) * c
        lq = chols[q]
        g_kzx = solve_triangular(lq, g_c, lower=True, trans="T")
        left = solve_triangular(lq, g_c @ c.T, lower=True, trans="T")
        g_kzz = -0.5 * solve_triangular(lq, left.T, lower=True, trans="T").T
        g_kzz = 0.5 * (g_kzz + g_kzz.T)
        g_kdiag = -0.5 * float(np.sum(s**2 * w[:, q] ** 2)) * n  # summed over all N points

        sv, ls, cv = kern.se_var[q], kern.lengthscale[q], kern.const_var[q]
        d2_zz = (z[:, None] - z[None, :]) ** 2
        d2_zx = (z[:, None] - x[None, :]) ** 2
        se_zz = sv * np.exp(-0.5 * d2_zz / ls**2)
        se_zx = sv * np.exp(-0.5 * d2_zx / ls**2)
        tr_g = float(np.trace(g_kzz))
        g_theta[3 * q + 0] = (
            float(np.sum(g_kzz * se_zz)) + jitter * sv * tr_g + float(np.sum(g_kzx * se_zx)) + sv * g_kdiag
        )
        g_theta[3 * q + 1] = float(np.sum(g_kzz * se_zz * d2_zz)) / ls**2 + float(
            np.sum(g_kzx * se_zx * d2_zx)
        ) / ls**2
        g_theta[3 * q + 2] = cv * (float(np.sum(g_kzz)) + jitter * tr_g + float(np.sum(g_kzx)) + g_kdiag)
    g_theta[3 * qn : 3 * qn + p * qn] = g_w.ravel()
    g_theta[3 * qn + p * qn :] = -0.5 * s * g_s
    return f, g_theta, (beta, a_inv)


@dataclass(frozen=True, eq=False)
class MogpModel:
    """Immutable model snapshot. ``update`` returns a new snapshot."""

    config: MogpConfig
    z: np.ndarray
    w: np.ndarray
    kernel: KernelParams
    noise_var: np.ndarray
    q_mu: np.ndarray  # (Q, M), whitened
    q_cov: np.ndarray  # (Q*M, Q*M), whitened, joint over latents
    buf_n: np.ndarray
    buf_x: np.ndarray
    buf_y: np.ndarray
    bound: float
    fit_trace: tuple[float, ...] = ()
    n_updates: int = 0
    _chols: list = field(default=None, repr=False, compare=False)
    _linv: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("z", "w", "noise_var", "q_mu", "q_cov", "buf_n", "buf_x", "buf_y"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        chols = _zz_factors(self.kernel, self.z, self.config.jitter)
        object.__setattr__(self, "_chols", chols)
        m = len(self.z)
        linv = np.stack([solve_triangular(lq, np.eye(m), lower=True) for lq in chols])
        object.__setattr__(self, "_linv", linv)

    # -- prediction ---------------------------------------------------------------
    def predict_many(self, cues: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means (K, P) and marginal latent-function variances (K, P)."""
        xs = np.atleast_1d(np.asarray(cues, dtype=float))
        qn, m = self.q_mu.shape
        kern = self.kernel
        d2 = (xs[:, None] - self.z[None, :]) ** 2  # (K, M)
        k = kern.se_var[:, None, None] * np.exp(-0.5 * d2[None] / kern.lengthscale[:, None, None] ** 2)
        k += kern.const_var[:, None, None]  # (Q, K, M)
        cs = np.einsum("qij,qkj->qki", self._linv, k)  # whitened projections, (Q, K, M)
        mean = np.einsum("qkm,qm->kq", cs, self.q_mu) @ self.w.T
        resid_g = (kern.se_var + kern.const_var)[:, None] - np.sum(cs * cs, axis=2)  # (Q, K)
        flat = cs.transpose(1, 0, 2)  # (K, Q, M)
        b = self.w[None, :, :, None] * flat[:, None, :, :]  # (K, P, Q, M)
        b = b.reshape(len(xs), self.w.shape[0], qn * m)
        quad = np.einsum("kpi,ij,kpj->kp", b, self.q_cov, b)
        var = quad + (resid_g.T @ (self.w**2).T)
        return mean, np.maximum(var, 0.0)

    def predict(self, cue: float) -> Prediction:
        if not math.isfinite(cue):
            raise ValueError(f"cue must be finite, got {cue!r}")
        mean, var = self.predict_many(np.array([cue]))
        return Prediction(float(mean[0, 0]), float(mean[0, 1]), float(var[0, 0]), float(var[0, 1]))

    # -- introspection -----------------------------------------------------------
    @property
    def observations(self) -> tuple[StepObservation, ...]:
        return tuple(
            StepObservation(int(n), float(x), float(y[0]), float(y[1]))
            for n, x, y in zip(self.buf_n, self.buf_x, self.buf_y)
        )

    def latent_cov(self, q: int) -> np.ndarray:
        m = self.q_mu.shape[1]
        return self.q_cov[q * m : (q + 1) * m, q * m : (q + 1) * m]

    def unwhitened(self) -> tuple[np.ndarray, np.ndarray]:
        """Variational mean (Q, M) and joint covariance of u = L v."""
        qn, m = self.q_mu.shape
        big_l = np.zeros((qn * m, qn * m))
        for q in range(qn):
            big_l[q * m : (q + 1) * m, q * m : (q + 1) * m] = self._chols[q]
        mu = np.stack([self._chols[q] @ self.q_mu[q] for q in range(qn)])
        return mu, big_l @ self.q_cov @ big_l.T

    def theta(self) -> np.ndarray:
        return _pack(self.kernel, self.w, self.noise_var)

    # -- persistence ---------------------------------------------------------------
    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "version": SNAPSHOT_VERSION,
            "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
            "Z": self.z.tolist(),
            "W": self.w.tolist(),
            "kernel_params": {
                "se_var": self.kernel.se_var.tolist(),
                "lengthscale": self.kernel.lengthscale.tolist(),
                "const_var": self.kernel.const_var.tolist(),
            },
            "noise_variance": self.noise_var.tolist(),
            "variational_mean": self.q_mu.tolist(),
            "variational_cov": self.q_cov.tolist(),
            "training_buffer": {
                "n": self.buf_n.tolist(),
                "cue_prev": self.buf_x.tolist(),
                "cadence": self.buf_y[:, 0].tolist(),
                "stride": self.buf_y[:, 1].tolist(),
            },
            "bound": self.bound,
            "n_updates": self.n_updates,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MogpModel":
        if d.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported model snapshot version {d.get('version')!r}")
        kp = d["kernel_params"]
        buf = d["training_buffer"]
        return cls(
            config=MogpConfig(**d["config"]),
            z=np.array(d["Z"], dtype=float),
            w=np.array(d["W"], dtype=float),
            kernel=KernelParams(
                np.array(kp["se_var"], dtype=float),
                np.array(kp["lengthscale"], dtype=float),
                np.array(kp["const_var"], dtype=float),
            ),
            noise_var=np.array(d["noise_variance"], dtype=float),
            q_mu=np.array(d["variational_mean"], dtype=float),
            q_cov=np.array(d["variational_cov"], dtype=float),
            buf_n=np.array(buf["n"], dtype=int),
            buf_x=np.array(buf["cue_prev"], dtype=float),
            buf_y=np.stack([np.array(buf["cadence"], dtype=float), np.array(buf["stride"], dtype=float)], axis=1),
            bound=float(d["bound"]),
            n_updates=int(d["n_updates"]),
        )

    def dumps(self) -> str:
        return FORMAT_TAG + "\n" + json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> "MogpModel":
        body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
        return cls.from_dict(json.loads(body))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "MogpModel":
        return cls.loads(Path(path).read_text())


def _fit(
    theta0: np.ndarray,
    data: _Data,
    z: np.ndarray,
    cfg: MogpConfig,
    max_iter: int,
) -> tuple[np.ndarray, float, tuple[float, ...]]:
    p = data.y.shape[1]
    qn = cfg.n_latent
    bounds = _theta_bounds(p, qn)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    theta0 = np.clip(theta0, lo, hi)
    f0, _, _ = free_energy(theta0, data, z, cfg.jitter, grad=False)
    trace = [f0]
    if max_iter <= 0:
        return theta0, f0, tuple(trace)

    def neg(th: np.ndarray) -> tuple[float, np.ndarray]:
        try:
            f, g, _ = free_energy(th, data, z, cfg.jitter)
        except np.linalg.LinAlgError:
            return 1e300, np.zeros_like(th)
        return -f, -g

    def record(intermediate_result) -> None:
        trace.append(-float(intermediate_result.fun))

    res = minimize(
        neg,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=record,
        options={"maxiter": max_iter, "ftol": cfg.rel_tol, "gtol": 1e-9, "maxfun": 3 * max_iter + 10},
    )
    theta, f = np.asarray(res.x), -float(res.fun)
    if not f >= f0:
        theta, f = theta0, f0
    return theta, f, tuple(trace)


def _build(
    cfg: MogpConfig,
    z: np.ndarray,
    theta: np.ndarray,
    data: _Data,
    buf_n: np.ndarray,
    fit_trace: tuple[float, ...],
    n_updates: int,
) -> MogpModel:
    p = data.y.shape[1]
    kern, w, noise_var = _unpack(theta, p, cfg.n_latent)
    # evaluate on the rounded natural-unit parameters so a reload reproduces the state bit-for-bit
    theta_r = _pack(kern, w, noise_var)
    bound, _, (mean, cov) = free_energy(theta_r, data, z, cfg.jitter, grad=False)
    return MogpModel(
        config=cfg,
        z=z,
        w=w,
        kernel=kern,
        noise_var=noise_var,
        q_mu=mean.reshape(cfg.n_latent, len(z)),
        q_cov=cov,
        buf_n=buf_n,
        buf_x=data.x,
        buf_y=data.y,
        bound=bound,
        fit_trace=fit_trace,
        n_updates=n_updates,
    )


def inducing_inputs(cfg: MogpConfig, c_min: float, c_max: float) -> np.ndarray:
    if not c_max > c_min:
        raise ValueError("need c_max > c_min")
    if cfg.zero_inducing:
        return np.concatenate([[0.0], np.linspace(c_min, c_max, cfg.n_inducing - 1)])
    return np.linspace(c_min, c_max, cfg.n_inducing)


def initial_theta(cfg: MogpConfig, y: np.ndarray, c_min: float, c_max: float) -> np.ndarray:
    var = np.maximum(np.var(y, axis=0), cfg.noise_floor)
    mean = np.mean(y, axis=0)
    kern = KernelParams(
        se_var=np.maximum(var, 1e-2),
        lengthscale=np.full(cfg.n_latent, 0.5 * (c_max - c_min)),
        const_var=np.maximum(mean**2, 1e-2),
    )
    return _pack(kern, np.eye(cfg.n_outputs, cfg.n_latent), var)


def _as_arrays(obs: Sequence[StepObservation]) -> tuple[np.ndarray, _Data]:
    n = np.array([o.n for o in obs], dtype=int)
    x = np.array([o.cue_prev for o in obs], dtype=float)
    y = np.array([[o.cadence, o.stride] for o in obs], dtype=float)
    return n, _Data(x, y)


def init_model(
    config: MogpConfig,
    seed_data: Sequence[StepObservation],
    cue_bounds: tuple[float, float] | None = None,
) -> MogpModel:
    """Place inducing inputs over the cue range and fit the model to ``seed_data``."""
    obs = [o for o in seed_data if o.is_finite()]
    if not obs:
        raise UninitializedModelError("seed data is empty")
    obs = obs[-config.buffer_cap :]
    buf_n, data = _as_arrays(obs)
    if cue_bounds is None:
        cued = data.x[data.x > 0]
        if cued.size == 0 or cued.min() == cued.max():
            raise UninitializedModelError("cannot infer cue bounds from seed data; pass cue_bounds")
        cue_bounds = (float(cued.min()), float(cued.max()))
    z = inducing_inputs(config, *cue_bounds)
    theta0 = initial_theta(config, data.y, *cue_bounds)
    iters = 0 if config.freeze_hyperparameters else config.max_iter_init
    theta, _, trace = _fit(theta0, data, z, config, iters)
    return _build(config, z, theta, data, buf_n, trace, 0)


def build_model(
    config: MogpConfig,
    z: np.ndarray,
    kernel: KernelParams,
    w: np.ndarray,
    noise_var: np.ndarray,
    data: Sequence[StepObservation],
) -> MogpModel:
    """Model with fixed hyperparameters and the optimal variational state for ``data``."""
    buf_n, arrays = _as_arrays(list(data))
    theta = _pack(kernel, np.asarray(w, dtype=float), np.asarray(noise_var, dtype=float))
    return _build(config, np.asarray(z, dtype=float), theta, arrays, buf_n, (), 0)


def update(model: MogpModel, obs: StepObservation, max_iter: int | None = None) -> MogpModel:
    """Append ``obs`` and re-fit from the current hyperparameters within the per-update budget.

    Non-finite observations are rejected and the input snapshot is returned.
    """
    if model is None:
        raise UninitializedModelError("update called before init_model")
    if not obs.is_finite():
        log.warning("rejecting non-finite observation %s", obs)
        return model
    cfg = model.config
    cap = cfg.buffer_cap
    buf_n = np.append(model.buf_n, obs.n)[-cap:]
    x = np.append(model.buf_x, obs.cue_prev)[-cap:]
    y = np.vstack([model.buf_y, [[obs.cadence, obs.stride]]])[-cap:]
    data = _Data(x, y)
    if max_iter is None:
        max_iter = 0 if cfg.freeze_hyperparameters else cfg.max_iter_update
    theta, _, trace = _fit(model.theta(), data, model.z, cfg, max_iter)
    return _build(cfg, model.z, theta, data, buf_n, trace, model.n_updates + 1)


def predict(model: MogpModel, cue: float) -> Prediction:
    return model.predict(cue)


def observations_from_rows(rows: Iterable[tuple[int, float, float, float]]) -> list[StepObservation]:
    return [StepObservation(int(n), float(c), float(f), float(l)) for n, c, f, l in rows]
