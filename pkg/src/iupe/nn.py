"""Small double-precision network engine with hand-written reverse mode.

A network is a flat list of layers: ``Dense`` (affine map plus optional tanh)
and ``Attention`` (residual, gamma-gated single-head self-attention over a
fixed number of tokens carved out of the hidden vector).  Everything works on
row batches of shape ``(batch, features)``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, NumericalError

CHECKPOINT_FORMAT = "iupe-params"
CHECKPOINT_VERSION = 1


@dataclass
class Dense:
    W: np.ndarray
    b: np.ndarray
    activation: str = "tanh"

    kind = "dense"
    names = ("W", "b")

    @property
    def in_dim(self):
        return self.W.shape[0]

    @property
    def out_dim(self):
        return self.W.shape[1]


@dataclass
class Attention:
    """Residual self-attention: ``x + gamma * softmax(Q K^T / sqrt(d)) V``.

    The incoming vector of width ``n_tokens * d`` is viewed as ``n_tokens``
    positions of dimension ``d``.
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    gamma: np.ndarray
    n_tokens: int

    kind = "attention"
    names = ("wq", "wk", "wv", "gamma")

    @property
    def token_dim(self):
        return self.wq.shape[0]

    @property
    def in_dim(self):
        return self.n_tokens * self.token_dim

    out_dim = in_dim


@dataclass
class ParamSet:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.layers:
            raise ConfigError("a network needs at least one layer")
        for k in range(1, len(self.layers)):
            prev, cur = self.layers[k - 1], self.layers[k]
            if prev.out_dim != cur.in_dim:
                raise ConfigError(
                    f"layer {k} expects {cur.in_dim} inputs but layer {k - 1} "
                    f"produces {prev.out_dim}"
                )
        for k, layer in enumerate(self.layers):
            if isinstance(layer, Attention):
                if layer.wq.shape != layer.wk.shape or layer.wv.shape[0] != layer.token_dim:
                    raise ConfigError(f"attention layer {k} has inconsistent projections")
                if not np.isfinite(layer.gamma):
                    raise ConfigError(f"attention layer {k} has non-finite gamma")

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    @property
    def has_attention(self):
        return any(isinstance(layer, Attention) for layer in self.layers)

    def arrays(self):
        """Yield ``(layer_index, name, array)`` for every trainable array."""
        for k, layer in enumerate(self.layers):
            for name in layer.names:
                yield k, name, getattr(layer, name)

    def map(self, fn):
        """New ParamSet of the same structure with ``fn`` applied per array."""
        layers = []
        for layer in self.layers:
            if isinstance(layer, Dense):
                layers.append(Dense(fn(layer.W), fn(layer.b), layer.activation))
            else:
                layers.append(
                    Attention(fn(layer.wq), fn(layer.wk), fn(layer.wv), fn(layer.gamma), layer.n_tokens)
                )
        return ParamSet(layers)

    def copy(self):
        return self.map(np.copy)

    def zeros_like(self):
        return self.map(np.zeros_like)

    def without_attention(self):
        """The same network with every attention block dropped (shares arrays)."""
        return ParamSet([layer for layer in self.layers if not isinstance(layer, Attention)])

    def n_params(self):
        return sum(a.size for _, _, a in self.arrays())


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def make_network(in_dim, n_actions, hidden=(64, 64), attention=True, n_tokens=4, rng=None):
    """Build an MLP with tanh hidden layers and optional attention after each.

    Gamma starts at zero, so the attention blocks are an exact identity at
    initialization.
    """
    rng = np.random.default_rng(rng)
    layers = []
    width = in_dim
    for h in hidden:
        layers.append(Dense(glorot(rng, width, h), np.zeros(h), "tanh"))
        if attention:
            if h % n_tokens:
                raise ConfigError(f"hidden width {h} is not divisible into {n_tokens} tokens")
            d = h // n_tokens
            layers.append(
                Attention(glorot(rng, d, d), glorot(rng, d, d), glorot(rng, d, d), np.zeros(()), n_tokens)
            )
        width = h
    layers.append(Dense(glorot(rng, width, n_actions), np.zeros(n_actions), "linear"))
    return ParamSet(layers)


# -- forward / backward -----------------------------------------------------


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _attention_forward(layer, h):
    B = h.shape[0]
    x = h.reshape(B, layer.n_tokens, layer.token_dim)
    q = x @ layer.wq
    k = x @ layer.wk
    v = x @ layer.wv
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(layer.wq.shape[1])
    a = softmax(scores)
    mixed = a @ v
    out = x + layer.gamma * mixed
    return out.reshape(B, -1), (x, q, k, v, a, mixed)


def self_attention(layer, tokens):
    """Apply one attention block to a single ``(n, d)`` token matrix."""
    tokens = np.asarray(tokens, dtype=np.float64)
    n, d = tokens.shape
    if n != layer.n_tokens or d != layer.token_dim:
        raise ConfigError(
            f"attention block expects {layer.n_tokens}x{layer.token_dim} tokens, got {n}x{d}"
        )
    out, _ = _attention_forward(layer, tokens.reshape(1, -1))
    return out.reshape(n, d)


def _forward(params, x, keep):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.input_dim:
        raise ConfigError(f"network expects input width {params.input_dim}, got {x.shape[1]}")
    caches = []
    h = x
    for k, layer in enumerate(params.layers):
        if isinstance(layer, Dense):
            pre = h @ layer.W + layer.b
            out = np.tanh(pre) if layer.activation == "tanh" else pre
            cache = (h, out)
        else:
            out, cache = _attention_forward(layer, h)
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"non-finite activations at layer {k}")
        if keep:
            caches.append(cache)
        h = out
    return h, caches


def forward(params, x):
    """Logits for a batch of inputs (a single vector is promoted to a batch of one)."""
    logits, _ = _forward(params, x, keep=False)
    return logits


def backward(params, caches, dout):
    """Gradients of a scalar w.r.t. every parameter given ``d scalar / d logits``."""
    grads = []
    g = dout
    for layer, cache in zip(reversed(params.layers), reversed(caches)):
        if isinstance(layer, Dense):
            h_in, out = cache
            if layer.activation == "tanh":
                g = g * (1.0 - out * out)
            grads.append(Dense(h_in.T @ g, g.sum(axis=0), layer.activation))
            g = g @ layer.W.T
        else:
            x, q, k, v, a, mixed = cache
            B = x.shape[0]
            dy = g.reshape(B, layer.n_tokens, layer.token_dim)
            dgamma = np.array(np.sum(dy * mixed))
            dmixed = layer.gamma * dy
            da = dmixed @ v.transpose(0, 2, 1)
            dv = a.transpose(0, 2, 1) @ dmixed
            ds = a * (da - np.sum(da * a, axis=-1, keepdims=True))
            ds /= np.sqrt(layer.wq.shape[1])
            dq = ds @ k
            dk = ds.transpose(0, 2, 1) @ q
            xf = x.reshape(-1, layer.token_dim)
            dwq = xf.T @ dq.reshape(-1, dq.shape[-1])
            dwk = xf.T @ dk.reshape(-1, dk.shape[-1])
            dwv = xf.T @ dv.reshape(-1, dv.shape[-1])
            dx = dy + dq @ layer.wq.T + dk @ layer.wk.T + dv @ layer.wv.T
            grads.append(Attention(dwq, dwk, dwv, dgamma, layer.n_tokens))
            g = dx.reshape(B, -1)
    return ParamSet(grads[::-1])


def cross_entropy_grad(params, inputs, targets, weights=None):
    """Mean negative log-likelihood of ``targets`` and its gradient.

    Returns ``(loss, grads)`` where ``grads`` mirrors ``params``.
    """
    targets = np.asarray(targets)
    logits, caches = _forward(params, inputs, keep=True)
    n_actions = logits.shape[1]
    if targets.ndim != 1 or targets.shape[0] != logits.shape[0]:
        raise InputError("need exactly one target per input row")
    if targets.size and (targets.min() < 0 or targets.max() >= n_actions):
        raise InputError(f"target actions must lie in [0, {n_actions})")
    targets = targets.astype(np.int64)
    B = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    nll = log_norm - z[np.arange(B), targets]
    loss = float(nll.mean())
    probs = np.exp(z - log_norm[:, None])
    dlogits = probs
    dlogits[np.arange(B), targets] -= 1.0
    dlogits /= B
    return loss, backward(params, caches, dlogits)


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    m: ParamSet
    v: ParamSet
    t: int = 0

    @classmethod
    def init(cls, params):
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for (k, name, p), (_, _, g), (_, _, m), (_, _, v) in zip(
        params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()
    ):
        if p.shape != g.shape:
            raise ConfigError(f"gradient shape {g.shape} does not match {name} of layer {k}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


# -- sampling -----------------------------------------------------------------


def sample_categorical(probs, rng):
    """Draw one index from a probability vector using ``rng``."""
    probs = np.asarray(probs, dtype=np.float64)
    total = probs.sum()
    if probs.ndim != 1 or np.any(probs < 0) or not total > 0:
        raise InputError("cannot sample from a degenerate distribution")
    cdf = np.cumsum(probs / total)
    i = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(i, probs.size - 1)


def sample_rows(probs, rng):
    """Vectorized draw of one index per row of ``probs`` from a shared rng."""
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(probs.shape[0])
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


# -- checkpoints --------------------------------------------------------------


def params_to_bytes(params, meta=None):
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layers": [
            {"kind": layer.kind, **({"activation": layer.activation} if isinstance(layer, Dense) else {"n_tokens": layer.n_tokens})}
            for layer in params.layers
        ],
        "meta": meta or {},
    }
    arrays = {f"{k}.{name}": a for k, name, a in params.arrays()}
    buf = io.BytesIO()
    np.savez(buf, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return buf.getvalue()


def params_from_bytes(data):
    with np.load(io.BytesIO(data), allow_pickle=False) as f:
        header = json.loads(str(f["header"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise InputError("not a parameter checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise InputError(f"unsupported checkpoint version {header.get('version')}")
        layers = []
        for k, spec in enumerate(header["layers"]):
            if spec["kind"] == "dense":
                layers.append(Dense(f[f"{k}.W"], f[f"{k}.b"], spec["activation"]))
            elif spec["kind"] == "attention":
                layers.append(
                    Attention(f[f"{k}.wq"], f[f"{k}.wk"], f[f"{k}.wv"], f[f"{k}.gamma"], spec["n_tokens"])
                )
            else:
                raise InputError(f"unknown layer kind {spec['kind']!r}")
    return ParamSet(layers), header["meta"]


def save_params(path, params, meta=None):
    with open(path, "wb") as fh:
        fh.write(params_to_bytes(params, meta))


def load_params(path):
    with open(path, "rb") as fh:
        return params_from_bytes(fh.read())
