"""Dense-network substrate: ReLU MLPs with exact reverse-mode gradients,
bias-corrected Adam, and the squashed-Gaussian policy head.

Weight matrices map an input augmented with a trailing 1 to the next layer,
so each has shape (..., out, in + 1). A leading axis batches whole networks
(used for twin critics); all arithmetic is float64.

Hot-path calls accept a workspace dict: buffers are then reused across calls
keyed by call-site tag, which removes almost all allocation cost. A given tag
may hold at most one live forward cache at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_SIGMA_MIN = -20.0
LOG_SIGMA_MAX = 2.0
_SQUASH_EPS = 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))


def init_mlp(layer_sizes: list[int], rng: np.random.Generator,
             stack: int | None = None) -> list[np.ndarray]:
    """Weights uniform in +-1/sqrt(fan_in); optional leading stack axis."""
    weights = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        shape = (n_out, n_in + 1) if stack is None else (stack, n_out, n_in + 1)
        weights.append(rng.uniform(-bound, bound, size=shape))
    return weights


def _buf(ws: dict | None, key, shape: tuple, ones: bool = False) -> np.ndarray:
    if ws is None:
        return np.ones(shape) if ones else np.empty(shape)
    buf = ws.get(key)
    if buf is None or buf.shape != shape:
        buf = np.ones(shape) if ones else np.empty(shape)
        ws[key] = buf
    return buf


def _augment(x: np.ndarray, ws: dict | None, key) -> np.ndarray:
    out = _buf(ws, key, x.shape[:-1] + (x.shape[-1] + 1,), ones=True)
    out[..., :-1] = x
    return out


def mlp_forward(weights: list[np.ndarray], x: np.ndarray,
                ws: dict | None = None, tag: str = "") -> tuple[np.ndarray, list]:
    """Forward pass; ReLU on hidden layers, linear output. Returns the output
    and the cache needed for the backward pass."""
    if x.shape[-1] != weights[0].shape[-1] - 1:
        raise ValueError(
            f"input width {x.shape[-1]} does not match first layer "
            f"{weights[0].shape[-1] - 1}")
    h = x
    aug_inputs, preacts = [], []
    last = len(weights) - 1
    for k, w in enumerate(weights):
        ha = _augment(h, ws, (tag, "aug", k))
        aug_inputs.append(ha)
        z = _buf(ws, (tag, "z", k),
                 np.broadcast_shapes(ha.shape[:-1] + (w.shape[-2],),
                                     w.shape[:-2] + (1, 1)))
        np.matmul(ha, np.swapaxes(w, -1, -2), out=z)
        preacts.append(z)
        if k == last:
            h = z
        else:
            h = _buf(ws, (tag, "h", k), z.shape)
            np.maximum(z, 0.0, out=h)
    return h, [aug_inputs, preacts]


def mlp_backward(weights: list[np.ndarray], cache: list,
                 grad_out: np.ndarray, ws: dict | None = None,
                 tag: str = "") -> tuple[list[np.ndarray], np.ndarray]:
    """Exact gradients of sum(grad_out * output) w.r.t. weights and input.

    Parameter gradients are summed over the batch axis; the caller applies
    any 1/|B| normalisation. ReLU subgradient at 0 is 0.
    """
    aug_inputs, preacts = cache
    g = grad_out
    grads: list[np.ndarray] = [None] * len(weights)
    for k in range(len(weights) - 1, -1, -1):
        gw = _buf(ws, (tag, "gw", k), weights[k].shape)
        np.matmul(np.swapaxes(g, -1, -2), aug_inputs[k], out=gw)
        grads[k] = gw
        gh = _buf(ws, (tag, "gh", k),
                  g.shape[:-1] + (weights[k].shape[-1] - 1,))
        np.matmul(g, weights[k][..., :-1], out=gh)
        g = gh
        if k > 0:
            g *= preacts[k - 1] > 0.0
    return grads, g


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    scratch: list[np.ndarray] = field(default_factory=list)

    @staticmethod
    def for_params(params: list[np.ndarray], lr: float) -> "AdamState":
        return AdamState(lr=lr,
                         m=[np.zeros_like(p) for p in params],
                         v=[np.zeros_like(p) for p in params],
                         scratch=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> None:
    """In-place bias-corrected Adam update."""
    state.step += 1
    b1, b2, t = state.beta1, state.beta2, state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    if not state.scratch:
        state.scratch = [np.zeros_like(p) for p in params]
    for p, g, m, v, s in zip(params, grads, state.m, state.v, state.scratch):
        m *= b1
        np.multiply(g, 1.0 - b1, out=s)
        m += s
        v *= b2
        np.multiply(g, g, out=s)
        s *= 1.0 - b2
        v += s
        np.divide(v, c2, out=s)
        np.sqrt(s, out=s)
        s += state.eps
        np.divide(m, s, out=s)
        s *= state.lr / c1
        p -= s


def clamp_log_sigma(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamp to the stability range; the mask zeroes gradients where active."""
    clamped = np.clip(raw, LOG_SIGMA_MIN, LOG_SIGMA_MAX)
    mask = (raw > LOG_SIGMA_MIN) & (raw < LOG_SIGMA_MAX)
    return clamped, mask


def sample_action(mean: np.ndarray, log_sigma: np.ndarray,
                  noise: np.ndarray,
                  tau_max: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
    """tanh-squashed Gaussian sample with change-of-variables log-density.

    Returns the physical action, the per-sample log-probability, and the
    intermediates needed for gradient assembly.
    """
    sigma = np.exp(log_sigma)
    pre = mean + sigma * noise
    th = np.tanh(pre)
    action = tau_max * th
    jac = tau_max * (1.0 - th ** 2) + _SQUASH_EPS
    base = -0.5 * noise ** 2 - log_sigma - 0.5 * _LOG_2PI
    log_prob = np.sum(base - np.log(jac), axis=-1)
    aux = {"sigma": sigma, "pre": pre, "tanh": th, "jac": jac}
    return action, log_prob, aux


def squash_gradients(aux: dict, tau_max: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """d log_prob / d pre and d action / d pre for sampled actions."""
    th, jac = aux["tanh"], aux["jac"]
    dact_dpre = tau_max * (1.0 - th ** 2)
    dlogp_dpre = 2.0 * th * dact_dpre / jac
    return dlogp_dpre, dact_dpre


def deterministic_action(mean: np.ndarray, tau_max: np.ndarray) -> np.ndarray:
    """Exploration-free policy output (the converged deterministic law)."""
    return tau_max * np.tanh(mean)
