"""Stacked LSTM regressor in numpy with hand-written BPTT and Adam.

Each cell works on the concatenation ``z = [h_prev | x]`` (hidden state first)
and owns four ``(q + q_in, q)`` weight matrices and four bias vectors:

    c_tilde = tanh(z Wc + bc)
    gamma_u = sigmoid(z Wu + bu)
    gamma_f = sigmoid(z Wf + bf)
    gamma_o = sigmoid(z Wo + bo)
    c = gamma_u * c_tilde + gamma_f * c_prev
    h = gamma_o * tanh(c)

Three such layers are stacked and a dense head maps the top hidden state to a
single output per time step.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import NormStats, Windows, batches

__all__ = [
    "LstmLayer",
    "LstmModel",
    "TrainConfig",
    "AdamState",
    "ContractError",
    "TrainingDiverged",
    "init_model",
    "cell_forward",
    "cell_backward",
    "stack_forward",
    "loss_hmse",
    "backward",
    "adam_step",
    "train",
    "forecast",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

GATES = ("c", "u", "f", "o")


class ContractError(RuntimeError):
    """A forward cache was reused after the model changed or after backward ran."""


class TrainingDiverged(ArithmeticError):
    pass


def sigmoid(a, out=None):
    # tanh form never overflows
    out = np.tanh(0.5 * a, out=out)
    out += 1.0
    out *= 0.5
    return out


@dataclass
class LstmLayer:
    Wc: np.ndarray
    Wu: np.ndarray
    Wf: np.ndarray
    Wo: np.ndarray
    bc: np.ndarray
    bu: np.ndarray
    bf: np.ndarray
    bo: np.ndarray

    @property
    def hidden(self) -> int:
        return self.Wc.shape[1]

    @property
    def n_in(self) -> int:
        return self.Wc.shape[0] - self.Wc.shape[1]

    @classmethod
    def zeros(cls, n_in, q):
        return cls(*[np.zeros((q + n_in, q)) for _ in GATES], *[np.zeros(q) for _ in GATES])

    def stacked(self):
        W = np.concatenate([self.Wc, self.Wu, self.Wf, self.Wo], axis=1)
        b = np.concatenate([self.bc, self.bu, self.bf, self.bo])
        return W, b


@dataclass
class LstmModel:
    layers: list
    head_W: np.ndarray  # (q, 1)
    head_b: np.ndarray  # (1,)
    norm: NormStats | None = None
    version: int = 0

    @property
    def hidden(self) -> int:
        return self.layers[-1].hidden

    def params(self) -> dict:
        """Name -> array view of every trainable parameter, in a fixed order."""
        out = {}
        for k, layer in enumerate(self.layers):
            for g in GATES:
                out[f"layer{k}.W{g}"] = getattr(layer, f"W{g}")
            for g in GATES:
                out[f"layer{k}.b{g}"] = getattr(layer, f"b{g}")
        out["head.W"] = self.head_W
        out["head.b"] = self.head_b
        return out

    def touch(self):
        self.version += 1


def init_model(hidden=128, layers=3, n_in=1, seed=0) -> LstmModel:
    """Weights uniform in ``+-1/sqrt(fan_in)``, biases zero."""
    rng = np.random.default_rng(seed)
    stack = []
    q_in = n_in
    for _ in range(layers):
        lim = 1.0 / math.sqrt(hidden + q_in)
        Ws = [rng.uniform(-lim, lim, (hidden + q_in, hidden)) for _ in GATES]
        stack.append(LstmLayer(*Ws, *[np.zeros(hidden) for _ in GATES]))
        q_in = hidden
    lim = 1.0 / math.sqrt(hidden)
    return LstmModel(stack, rng.uniform(-lim, lim, (hidden, 1)), np.zeros(1))


def cell_forward(x, h_prev, c_prev, layer: LstmLayer):
    """Single cell step; returns ``(h, c, cache)``."""
    q = layer.hidden
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise ValueError(f"input width {x.shape} does not match layer n_in={layer.n_in}")
    if h_prev.shape != (x.shape[0], q) or c_prev.shape != h_prev.shape:
        raise ValueError("state shapes must be (batch, hidden)")
    W, b = layer.stacked()
    z = np.concatenate([h_prev, x], axis=1)
    a = z @ W + b
    ct = np.tanh(a[:, :q])
    s = sigmoid(a[:, q:])
    gu, gf, go = s[:, :q], s[:, q:2 * q], s[:, 2 * q:]
    c = gu * ct + gf * c_prev
    tc = np.tanh(c)
    h = go * tc
    cache = {"z": z, "ct": ct, "gu": gu, "gf": gf, "go": go, "c_prev": c_prev, "tc": tc}
    return h, c, cache


def _gate_grads(dh, dc_next, ct, gu, gf, go, c_prev, tc, out=None):
    """Pre-activation gradients (b, 4q) and the carry into c_prev."""
    q = ct.shape[1]
    da = np.empty((ct.shape[0], 4 * q)) if out is None else out
    dc = dc_next + dh * go * (1.0 - tc * tc)
    np.multiply(dc * gu, 1.0 - ct * ct, out=da[:, :q])
    np.multiply(dc * ct, gu * (1.0 - gu), out=da[:, q:2 * q])
    np.multiply(dc * c_prev, gf * (1.0 - gf), out=da[:, 2 * q:3 * q])
    np.multiply(dh * tc, go * (1.0 - go), out=da[:, 3 * q:])
    return da, dc * gf


def cell_backward(dh, dc, cache, layer: LstmLayer):
    """Gradients of one cell step given upstream ``dh`` and ``dc``.

    Returns ``(dx, dh_prev, dc_prev, grads)`` where ``grads`` maps
    ``W{g}``/``b{g}`` to arrays shaped like the layer's parameters.
    """
    q = layer.hidden
    W, _ = layer.stacked()
    da, dc_prev = _gate_grads(dh, dc, cache["ct"], cache["gu"], cache["gf"], cache["go"],
                              cache["c_prev"], cache["tc"])
    dW = cache["z"].T @ da
    db = da.sum(axis=0)
    dz = da @ W.T
    grads = {}
    for k, g in enumerate(GATES):
        grads[f"W{g}"] = dW[:, k * q:(k + 1) * q]
        grads[f"b{g}"] = db[k * q:(k + 1) * q]
    return dz[:, q:], dz[:, :q], dc_prev, grads


@dataclass
class ForwardCache:
    model: LstmModel
    version: int
    seq_shape: tuple
    layers: list = field(default_factory=list)
    top: np.ndarray = None
    used: bool = False


def _rng(seed):
    if seed is None or isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stack_forward(seq, model: LstmModel, mode: str = "eval", seed=None, dropout: float = 0.25):
    """Run a ``(T, b, n)`` sequence from zero state.

    In ``train`` mode every LSTM layer's output passes through inverted
    dropout with probability ``dropout``; masks come from ``seed`` (an int or
    a ``numpy.random.Generator``). Returns ``(outputs (T, b, 1), cache)``.
    """
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 3:
        raise ValueError("sequence must be shaped (T, batch, features)")
    T, b, _ = seq.shape
    train = mode == "train" and dropout > 0
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = _rng(seed) if train else None
    if train and rng is None:
        raise ValueError("train mode with dropout needs a seed")
    cache = ForwardCache(model, model.version, seq.shape)
    inp = seq
    keep = 1.0 - dropout
    for layer in model.layers:
        q = layer.hidden
        W, bias = layer.stacked()
        Z = np.empty((T, b, q + inp.shape[2]))
        G = np.empty((T, b, 4 * q))
        Cp = np.empty((T, b, q))
        TC = np.empty((T, b, q))
        out = np.empty((T, b, q))
        h = np.zeros((b, q))
        c = np.zeros((b, q))
        for t in range(T):
            z = Z[t]
            z[:, :q] = h
            z[:, q:] = inp[t]
            a = z @ W
            a += bias
            g = G[t]
            np.tanh(a[:, :q], out=g[:, :q])
            sigmoid(a[:, q:], out=g[:, q:])
            Cp[t] = c
            c = g[:, q:2 * q] * g[:, :q] + g[:, 2 * q:3 * q] * c
            tc = np.tanh(c)
            TC[t] = tc
            h = g[:, 3 * q:] * tc
            out[t] = h
        mask = None
        if train:
            mask = (rng.random((T, b, q)) < keep) / keep
            out = out * mask
        cache.layers.append({"Z": Z, "G": G, "Cp": Cp, "TC": TC, "mask": mask, "W": W})
        inp = out
    cache.top = inp
    y = inp @ model.head_W + model.head_b
    return y, cache


def loss_hmse(p, y) -> float:
    """Half mean squared error over every entry (batch, output and time)."""
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {y.shape}")
    r = p - y
    return float(np.sum(r * r) / (2.0 * r.size))


def backward(cache: ForwardCache, dy) -> dict:
    """BPTT for ``stack_forward``; ``dy`` is dLoss/dOutputs, shaped like the outputs.

    Returns gradients keyed like :meth:`LstmModel.params`.
    """
    model = cache.model
    if cache.used:
        raise ContractError("forward cache already consumed by a backward pass")
    if cache.version != model.version:
        raise ContractError("model parameters changed since this forward pass")
    cache.used = True
    T, b, _ = cache.seq_shape
    dy = np.asarray(dy, dtype=float)
    grads = {}
    top = cache.top
    q = top.shape[2]
    grads["head.W"] = top.reshape(-1, q).T @ dy.reshape(-1, dy.shape[2])
    grads["head.b"] = dy.sum(axis=(0, 1))
    d_out = dy @ model.head_W.T
    for k in range(len(model.layers) - 1, -1, -1):
        lc = cache.layers[k]
        q = model.layers[k].hidden
        if lc["mask"] is not None:
            d_out = d_out * lc["mask"]
        Z, G, Cp, TC, W = lc["Z"], lc["G"], lc["Cp"], lc["TC"], lc["W"]
        n_in = Z.shape[2] - q
        ct, gu, gf, go = G[..., :q], G[..., q:2 * q], G[..., 2 * q:3 * q], G[..., 3 * q:]
        # local derivative factors for every step, so the reverse sweep is a few ops
        P = np.empty((T, b, 3, q))
        P[:, :, 0] = gu * (1.0 - ct * ct)
        P[:, :, 1] = ct * gu * (1.0 - gu)
        P[:, :, 2] = Cp * gf * (1.0 - gf)
        K = go * (1.0 - TC * TC)
        Po = TC * go * (1.0 - go)
        dA4 = np.empty((T, b, 4, q))
        dA = dA4.reshape(T, b, 4 * q)
        d_in = np.empty((T, b, n_in))
        dh_next = np.zeros((b, q))
        dc = np.zeros((b, q))
        WT = W.T
        for t in range(T - 1, -1, -1):
            dh = d_out[t] + dh_next
            dc *= gf[t + 1] if t + 1 < T else 0.0
            dc += dh * K[t]
            np.multiply(P[t], dc[:, None, :], out=dA4[t, :, :3])
            np.multiply(dh, Po[t], out=dA4[t, :, 3])
            dz = dA[t] @ WT
            dh_next = dz[:, :q]
            d_in[t] = dz[:, q:]
        dW = Z.reshape(-1, Z.shape[2]).T @ dA.reshape(-1, 4 * q)
        db = dA.sum(axis=(0, 1))
        for j, g in enumerate(GATES):
            grads[f"layer{k}.W{g}"] = dW[:, j * q:(j + 1) * q]
            grads[f"layer{k}.b{g}"] = db[j * q:(j + 1) * q]
        d_out = d_in
    return grads


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


@dataclass
class TrainConfig:
    batch_size: int = 6
    epochs: int = 350
    lr: float = 0.008
    lr_drop: float = 0.99
    lr_drop_every: int = 12
    dropout: float = 0.25
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: int = 128
    layers: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1 or self.lr_drop_every < 1:
            raise ValueError("batch_size, epochs and lr_drop_every must be >= 1")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_drop ** (epoch // self.lr_drop_every)

    def to_dict(self):
        return asdict(self)


def train(windows: Windows, config: TrainConfig = TrainConfig(), model: LstmModel | None = None,
          progress=None):
    """Fit on teacher-forced windows; returns ``(model, per-epoch mean loss)``.

    Three independent streams are spawned from ``config.seed``: weight init,
    epoch shuffling and dropout masks.
    """
    if len(windows) == 0:
        raise ValueError("no training windows")
    init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(config.seed).spawn(3)
    if model is None:
        model = init_model(config.hidden, config.layers, 1, np.random.default_rng(init_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    state = AdamState()
    params = model.params()
    history = []
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        total, count = 0.0, 0
        for x, y in batches(windows, config.batch_size, shuffle_rng):
            out, cache = stack_forward(x, model, "train", drop_rng, config.dropout)
            loss = loss_hmse(out, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1} (lr={lr:.3g})")
            grads = backward(cache, (out - y) / out.size)
            adam_step(params, grads, state, lr, config.beta1, config.beta2, config.eps)
            model.touch()
            total += loss * x.shape[1]
            count += x.shape[1]
        history.append(total / count)
        if progress is not None:
            progress(epoch, history[-1])
    return model, np.array(history)


def _eval_run(model: LstmModel, seq, state=None):
    """Eval-mode pass that also returns the final per-layer ``(h, c)`` state."""
    T, b, _ = seq.shape
    if state is None:
        state = [(np.zeros((b, L.hidden)), np.zeros((b, L.hidden))) for L in model.layers]
    inp = seq
    new_state = []
    for layer, (h, c) in zip(model.layers, state):
        q = layer.hidden
        W, bias = layer.stacked()
        out = np.empty((T, b, q))
        for t in range(T):
            a = np.concatenate([h, inp[t]], axis=1) @ W + bias
            s = sigmoid(a[:, q:])
            c = s[:, :q] * np.tanh(a[:, :q]) + s[:, q:2 * q] * c
            h = s[:, 2 * q:] * np.tanh(c)
            out[t] = h
        new_state.append((h, c))
        inp = out
    return inp @ model.head_W + model.head_b, new_state


def forecast(model: LstmModel, history, steps: int = 16, nu: int | None = None, norm: NormStats | None = None):
    """Condition on the last ``nu`` ground-truth values, then predict ``steps`` values closed-loop.

    ``history`` is 1-D (one forecast) or ``(B, length)`` (B forecasts at
    once), in physical units when a normalization is available (``norm`` or
    ``model.norm``); outputs are returned in the same units.
    """
    norm = norm if norm is not None else model.norm
    hist = np.asarray(history, dtype=float)
    single = hist.ndim == 1
    hist = np.atleast_2d(hist)
    nu = hist.shape[1] if nu is None else nu
    if hist.shape[1] < nu or nu < 1:
        raise ValueError(f"history of length {hist.shape[1]} is shorter than nu={nu}")
    hist = hist[:, -nu:]
    if norm is not None:
        hist = norm.apply(hist)
    y, state = _eval_run(model, hist.T[:, :, None])
    preds = np.empty((hist.shape[0], steps))
    nxt = y[-1]
    for s in range(steps):
        preds[:, s] = nxt[:, 0]
        if s + 1 < steps:
            y, state = _eval_run(model, nxt[None, :, :], state)
            nxt = y[-1]
    if norm is not None:
        preds = norm.invert(preds)
    return preds[0] if single else preds


def save_model(model: LstmModel, path, extra: dict | None = None) -> Path:
    """Write ``manifest.json`` plus one little-endian float64 blob per parameter."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, arr in model.params().items():
        fname = f"{name}.bin"
        (path / fname).write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        entries.append({"name": name, "shape": list(arr.shape), "file": fname})
    manifest = {
        "format": "lpbf-lstm/1",
        "dtype": "<f8",
        "order": "C",
        "layers": len(model.layers),
        "hidden": model.hidden,
        "n_in": model.layers[0].n_in,
        "params": entries,
        "norm": model.norm.to_dict() if model.norm else None,
    }
    if extra:
        manifest.update(extra)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_model(path) -> LstmModel:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    n_layers, q, n_in = manifest["layers"], manifest["hidden"], manifest["n_in"]
    model = LstmModel([LstmLayer.zeros(n_in if k == 0 else q, q) for k in range(n_layers)],
                      np.zeros((q, 1)), np.zeros(1))
    params = model.params()
    for e in manifest["params"]:
        data = np.frombuffer((path / e["file"]).read_bytes(), dtype="<f8").reshape(e["shape"])
        params[e["name"]][...] = data
    if manifest.get("norm"):
        model.norm = NormStats(**manifest["norm"])
    return model
