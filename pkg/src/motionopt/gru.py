"""GRU sequence-to-sequence dynamics model with residual outputs and offset injection.

One GRU cell is unrolled over the observed frames (encoder, no outputs) and then
autoregressively over the prediction horizon (decoder).  At decoder step ``k``
with input ``x_k`` (``x_1`` is the last observed state)::

    h_k = cell(x_k, h_{k-1})
    y_k = x_k + W_out h_k + b_out + delta_k
    x_{k+1} = y_k

Everything here is batched over a leading axis and runs in float64.  Gradients
are exact reverse-mode (BPTT) and are checked against finite differences in the
test-suite.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.special import expit


@dataclass(frozen=True, eq=False)
class GruParams:
    """Gate-stacked GRU weights (order: update, reset, candidate) plus the output map.

    ``w_in``: (3, hidden, state_dim), ``w_rec``: (3, hidden, hidden), ``b``: (3, hidden),
    ``w_out``: (state_dim, hidden), ``b_out``: (state_dim,).
    """

    w_in: np.ndarray
    w_rec: np.ndarray
    b: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        arrays = {f.name: np.asarray(getattr(self, f.name), dtype=np.float64) for f in fields(self)}
        _, H, D = arrays["w_in"].shape
        expected = {"w_in": (3, H, D), "w_rec": (3, H, H), "b": (3, H), "w_out": (D, H), "b_out": (D,)}
        for name, arr in arrays.items():
            if arr.shape != expected[name]:
                raise ValueError(f"{name} has shape {arr.shape}, expected {expected[name]}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if H < 1:
            raise ValueError("hidden size must be >= 1")

    @property
    def hidden_dim(self) -> int:
        return self.w_in.shape[1]

    @property
    def state_dim(self) -> int:
        return self.w_in.shape[2]

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def unflatten(self, vec) -> "GruParams":
        """New params of the same shapes filled from a flat vector."""
        vec = np.asarray(vec, dtype=np.float64)
        out, i = {}, 0
        for name, arr in self.arrays().items():
            out[name] = vec[i:i + arr.size].reshape(arr.shape)
            i += arr.size
        if i != vec.size:
            raise ValueError(f"expected {i} values, got {vec.size}")
        return GruParams(**out)

    @classmethod
    def zeros(cls, state_dim: int, hidden_dim: int) -> "GruParams":
        H, D = hidden_dim, state_dim
        return cls(np.zeros((3, H, D)), np.zeros((3, H, H)), np.zeros((3, H)), np.zeros((D, H)), np.zeros(D))


@dataclass(frozen=True)
class Seq2SeqModel:
    """GRU parameters plus input conditioning.

    With ``anchored`` the cell sees ``input_scale * (x - last observed state)``
    instead of ``x``; the residual output path always works on raw states.
    """

    params: GruParams
    model_fps: float = 24.0
    anchored: bool = False
    input_scale: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.input_scale) and self.input_scale > 0):
            raise ValueError(f"input_scale must be positive, got {self.input_scale}")

    @property
    def state_dim(self) -> int:
        return self.params.state_dim

    @property
    def hidden_dim(self) -> int:
        return self.params.hidden_dim

    def with_params(self, params: GruParams) -> "Seq2SeqModel":
        return replace(self, params=params)


def init_model(state_dim: int, hidden_dim: int = 128, seed=0, model_fps: float = 24.0,
               anchored: bool = False, input_scale: float = 1.0, zero_output: bool = False) -> Seq2SeqModel:
    """Weights uniform in ``+-1/sqrt(fan_in)``, biases zero.

    ``zero_output`` zeroes the output map so the untrained model is the
    zero-velocity predictor.
    """
    rng = np.random.default_rng(seed)
    H, D = hidden_dim, state_dim

    def uni(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    w_in, w_rec, w_out = uni((3, H, D), D), uni((3, H, H), H), uni((D, H), H)
    if zero_output:
        w_out = np.zeros((D, H))
    params = GruParams(w_in=w_in, w_rec=w_rec, b=np.zeros((3, H)), w_out=w_out, b_out=np.zeros(D))
    return Seq2SeqModel(params, model_fps, anchored, input_scale)


def gru_cell(params: GruParams, x, h) -> np.ndarray:
    """One GRU step for ``x`` (..., state_dim) and ``h`` (..., hidden)."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if x.shape[-1] != params.state_dim or h.shape[-1] != params.hidden_dim:
        raise ValueError(
            f"gru_cell expects x[..., {params.state_dim}] and h[..., {params.hidden_dim}], "
            f"got {x.shape} and {h.shape}"
        )
    return _cell_forward(params, x @ _wx(params).T, h)[0]


def _wx(params):
    return params.w_in.reshape(3 * params.hidden_dim, params.state_dim)


def _wh(params):
    return params.w_rec.reshape(3 * params.hidden_dim, params.hidden_dim)


def _cell_forward(params, ax, h):
    """``ax`` is the precomputed input projection ``x @ Wx.T`` of shape (B, 3H)."""
    H = params.hidden_dim
    ah = h @ _wh(params).T
    z = expit(ax[..., :H] + ah[..., :H] + params.b[0])
    r = expit(ax[..., H:2 * H] + ah[..., H:2 * H] + params.b[1])
    un = ah[..., 2 * H:]
    n = np.tanh(ax[..., 2 * H:] + r * un + params.b[2])
    h_new = (1.0 - z) * n + z * h
    return h_new, z, r, n, un


@dataclass(frozen=True, eq=False)
class RolloutCache:
    """Activations of every cell step (encoder steps first), batch axis second.

    ``x``: cell inputs (S, B, D); ``h_prev``: (S, B, H); ``h``: (S, B, H);
    ``z``, ``r``, ``n``, ``un``: gate values and the recurrent candidate term.
    """

    params: GruParams
    encoder_steps: int
    x: np.ndarray
    h_prev: np.ndarray
    h: np.ndarray
    z: np.ndarray
    r: np.ndarray
    n: np.ndarray
    un: np.ndarray
    outputs: np.ndarray

    @property
    def horizon(self) -> int:
        return self.outputs.shape[1]


def rollout_batch(model: Seq2SeqModel, observed, horizon: int, delta=None):
    """Batched rollout; ``observed`` is (B, T, D), ``delta`` (B, K, D) or None.

    Returns predictions (B, K, D) and the cache.
    """
    params = model.params
    obs = np.asarray(observed, dtype=np.float64)
    if obs.ndim != 3 or obs.shape[1] < 1:
        raise ValueError(f"observed must be (batch, frames >= 1, dim), got shape {obs.shape}")
    B, T, D = obs.shape
    if D != params.state_dim:
        raise ValueError(f"observed state dim {D} does not match model state dim {params.state_dim}")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if delta is None:
        delta = np.zeros((B, horizon, D))
    else:
        delta = np.asarray(delta, dtype=np.float64)
        if delta.shape != (B, horizon, D):
            raise ValueError(f"delta has shape {delta.shape}, expected {(B, horizon, D)}")
    return _rollout(model, obs, horizon, delta)


def _rollout(model, obs, horizon, delta):
    params = model.params
    B, T, D = obs.shape
    anchor = obs[:, -1] if model.anchored else np.zeros((B, D))
    c = model.input_scale
    H = params.hidden_dim
    S = T - 1 + horizon
    xs = np.empty((S, B, D))
    hp = np.empty((S, B, H))
    hs = np.empty((S, B, H))
    zs, rs, ns, uns = (np.empty((S, B, H)) for _ in range(4))
    outputs = np.empty((B, horizon, D))

    wx = _wx(params)
    h = np.zeros((B, H))
    if T > 1:
        xs[:T - 1] = c * (obs[:, :-1] - anchor[:, None]).transpose(1, 0, 2)
        ax_enc = xs[:T - 1] @ wx.T
    for s in range(T - 1):
        hp[s] = h
        h, zs[s], rs[s], ns[s], uns[s] = _cell_forward(params, ax_enc[s], h)
        hs[s] = h
    x = obs[:, -1]
    for k in range(horizon):
        s = T - 1 + k
        xs[s] = c * (x - anchor)
        hp[s] = h
        h, zs[s], rs[s], ns[s], uns[s] = _cell_forward(params, xs[s] @ wx.T, h)
        hs[s] = h
        x = x + (h @ params.w_out.T + params.b_out) + delta[:, k]
        outputs[:, k] = x
    cache = RolloutCache(params, T - 1, xs, hp, hs, zs, rs, ns, uns, outputs)
    return outputs, cache


def rollout(model: Seq2SeqModel, observed, horizon: int, delta=None):
    """Predict ``horizon`` frames after ``observed`` (a Trajectory or (T, D) array).

    ``delta`` is an optional (horizon, D) offset schedule; None means all zeros.
    Returns ``(Trajectory, RolloutCache)``; the trajectory's dt is that of the
    observed trajectory, or ``1/model_fps`` for a bare array.
    """
    from .statespace import Trajectory

    if isinstance(observed, Trajectory):
        states, dt = observed.states, observed.dt
    else:
        states, dt = np.asarray(observed, dtype=np.float64), 1.0 / model.model_fps
    if states.ndim != 2 or states.shape[0] < 1:
        raise ValueError("observed trajectory must contain at least one frame")
    d = None if delta is None else np.asarray(delta, dtype=np.float64)[None]
    preds, cache = rollout_batch(model, states[None], horizon, d)
    return Trajectory(preds[0], dt), cache


def _check_cache(model, cache):
    if cache.params is not model.params:
        raise ValueError("rollout cache was produced by different model parameters")


def backprop(model: Seq2SeqModel, cache: RolloutCache, output_grads, want_params: bool = True):
    """Reverse pass for cotangents on every emitted state.

    ``output_grads`` has the shape of the predictions, (K, D) or (B, K, D).
    Returns ``(param_grads or None, delta_grads)`` with ``delta_grads`` shaped like
    ``output_grads``.
    """
    _check_cache(model, cache)
    params = model.params
    g = np.asarray(output_grads, dtype=np.float64)
    squeeze = g.ndim == 2
    if squeeze:
        g = g[None]
    if g.shape != cache.outputs.shape:
        raise ValueError(f"output gradients have shape {g.shape}, expected {cache.outputs.shape}")
    B, K, D = g.shape
    H = params.hidden_dim
    E = cache.encoder_steps
    S = E + K
    wx, wh = _wx(params), _wh(params)

    dax_all = np.zeros((S, B, 3 * H)) if want_params else None
    dah_all = np.zeros((S, B, 3 * H)) if want_params else None
    dout_all = np.empty((K, B, D)) if want_params else None
    ddelta = np.empty((B, K, D))

    dh = np.zeros((B, H))
    dx_next = np.zeros((B, D))
    for k in range(K - 1, -1, -1):
        s = E + k
        gy = g[:, k] + dx_next
        ddelta[:, k] = gy
        if want_params:
            dout_all[k] = gy
        dh = dh + gy @ params.w_out
        dax, dah, dh = _cell_backward(cache, s, dh, wh)
        if want_params:
            dax_all[s], dah_all[s] = dax, dah
        dx_next = gy + model.input_scale * (dax @ wx)
    if not want_params:
        return None, (ddelta[0] if squeeze else ddelta)

    for s in range(E - 1, -1, -1):
        dax_all[s], dah_all[s], dh = _cell_backward(cache, s, dh, wh)

    x2 = cache.x.reshape(S * B, D)
    hp2 = cache.h_prev.reshape(S * B, H)
    dax2 = dax_all.reshape(S * B, 3 * H)
    dah2 = dah_all.reshape(S * B, 3 * H)
    hdec = cache.h[E:].reshape(K * B, H)
    dout2 = dout_all.reshape(K * B, D)
    db = dax2.sum(axis=0).reshape(3, H)
    grads = GruParams(
        w_in=(dax2.T @ x2).reshape(3, H, D),
        w_rec=(dah2.T @ hp2).reshape(3, H, H),
        b=db,
        w_out=dout2.T @ hdec,
        b_out=dout2.sum(axis=0),
    )
    return grads, (ddelta[0] if squeeze else ddelta)


def _cell_backward(cache, s, dh, wh):
    H = dh.shape[1]
    z, r, n, un, hprev = cache.z[s], cache.r[s], cache.n[s], cache.un[s], cache.h_prev[s]
    dz = dh * (hprev - n)
    dn = dh * (1.0 - z)
    dan = dn * (1.0 - n * n)
    daz = dz * z * (1.0 - z)
    dar = dan * un * r * (1.0 - r)
    dax = np.concatenate([daz, dar, dan], axis=1)
    dah = np.concatenate([daz, dar, dan * r], axis=1)
    dh_prev = dh * z + dah @ wh
    return dax, dah, dh_prev


def backprop_params(model: Seq2SeqModel, cache: RolloutCache, loss_grad_per_output) -> GruParams:
    """Exact parameter gradients given d(loss)/d(emitted state) for every step."""
    return backprop(model, cache, loss_grad_per_output, want_params=True)[0]


def vjp_delta(model: Seq2SeqModel, cache: RolloutCache, u) -> np.ndarray:
    """Pull a cotangent ``u`` on the final emitted state back to every offset ``delta_k``.

    Returns a (horizon, D) array (or (B, horizon, D) for a batched cache with
    ``u`` of shape (B, D)).
    """
    _check_cache(model, cache)
    u = np.asarray(u, dtype=np.float64)
    g = np.zeros_like(cache.outputs)
    if u.ndim == 1:
        if cache.outputs.shape[0] != 1:
            raise ValueError("a single cotangent needs a single-sample cache")
        g[0, -1] = u
        return backprop(model, cache, g[0], want_params=False)[1]
    g[:, -1] = u
    return backprop(model, cache, g, want_params=False)[1]
