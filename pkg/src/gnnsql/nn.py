"""Neural building blocks on top of the autodiff core.

Parameter initialization follows one fixed scheme: weight matrices are
uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases start at zero, and
embedding tables are normal(0, 1) scaled by 1/sqrt(dim).
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_VERSION = 1


class ParamError(Exception):
    pass


class ParamStore:
    """Named mapping from dot-separated paths to parameter tensors."""

    def __init__(self, rng: Optional[np.random.Generator] = None):
        self._params: dict[str, Tensor] = {}
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def add(self, name: str, data: np.ndarray, requires_grad: bool = True) -> Tensor:
        if name in self._params:
            raise ParamError(f"duplicate parameter name '{name}'")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)
        self._params[name] = t
        return t

    def matrix(self, name: str, out_dim: int, in_dim: int) -> Tensor:
        bound = 1.0 / np.sqrt(in_dim)
        return self.add(name, self.rng.uniform(-bound, bound, size=(out_dim, in_dim)))

    def bias(self, name: str, dim: int) -> Tensor:
        return self.add(name, np.zeros(dim))

    def embedding(self, name: str, count: int, dim: int) -> Tensor:
        return self.add(name, self.rng.standard_normal((count, dim)) / np.sqrt(dim))

    def vector(self, name: str, dim: int, fan_in: Optional[int] = None) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in if fan_in else dim)
        return self.add(name, self.rng.uniform(-bound, bound, size=(dim,)))

    def scalar(self, name: str, value: float) -> Tensor:
        return self.add(name, np.asarray(value, dtype=np.float64))

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise ParamError(f"unknown parameter '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def trainable(self) -> list[str]:
        return [n for n in self.names() if self._params[n].requires_grad]

    def zero_grad(self) -> None:
        for t in self._params.values():
            if t.requires_grad:
                t.zero_grad()

    def clone_data(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_data(self, arrays: dict[str, np.ndarray]) -> None:
        for name, arr in arrays.items():
            t = self[name]
            if t.data.shape != arr.shape:
                raise ParamError(
                    f"parameter '{name}': stored shape {arr.shape} vs model shape {t.data.shape}")
            t.data = np.asarray(arr, dtype=np.float64).copy()


# ---------------------------------------------------------------------------
# recurrent cells

def register_gru(store: ParamStore, prefix: str, dim: int) -> None:
    """Shared-dimension GRU: input, hidden and output all have size ``dim``."""
    store.matrix(f"{prefix}.w_ih", 3 * dim, dim)
    store.matrix(f"{prefix}.w_hh", 3 * dim, dim)
    store.bias(f"{prefix}.b_ih", 3 * dim)
    store.bias(f"{prefix}.b_hh", 3 * dim)


def gru_cell(h_prev: Tensor, a: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """One GRU update; accepts [d] vectors or [n, d] row batches.

    Gate order in the stacked weights is reset, update, candidate. With the
    update gate saturated at 1 the output equals ``h_prev``.
    """
    if h_prev.shape != a.shape:
        raise ad.ShapeError(f"gru_cell: state shape {h_prev.shape} vs input shape {a.shape}")
    d = h_prev.shape[-1]
    batched = h_prev.data.ndim == 2
    axis = 1 if batched else 0

    w_ih, w_hh = store[f"{prefix}.w_ih"], store[f"{prefix}.w_hh"]
    gi = ad.add(ad.matmul(a, ad.transpose(w_ih)), store[f"{prefix}.b_ih"])
    gh = ad.add(ad.matmul(h_prev, ad.transpose(w_hh)), store[f"{prefix}.b_hh"])

    i_r = ad.narrow(gi, axis, 0, d)
    i_z = ad.narrow(gi, axis, d, 2 * d)
    i_n = ad.narrow(gi, axis, 2 * d, 3 * d)
    h_r = ad.narrow(gh, axis, 0, d)
    h_z = ad.narrow(gh, axis, d, 2 * d)
    h_n = ad.narrow(gh, axis, 2 * d, 3 * d)

    r = ad.sigmoid(ad.add(i_r, h_r))
    z = ad.sigmoid(ad.add(i_z, h_z))
    n = ad.tanh(ad.add(i_n, ad.mul(r, h_n)))
    return ad.add(ad.mul(ad.sub(1.0, z), n), ad.mul(z, h_prev))


def register_lstm(store: ParamStore, prefix: str, in_dim: int, hidden: int) -> None:
    store.matrix(f"{prefix}.w_ih", 4 * hidden, in_dim)
    store.matrix(f"{prefix}.w_hh", 4 * hidden, hidden)
    store.bias(f"{prefix}.b", 4 * hidden)


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, store: ParamStore,
              prefix: str) -> tuple[Tensor, Tensor]:
    """Vanilla four-gate LSTM step on rank-1 vectors; returns (h, c)."""
    hidden = h_prev.shape[0]
    gates = ad.add(ad.add(ad.matmul(store[f"{prefix}.w_ih"], x),
                          ad.matmul(store[f"{prefix}.w_hh"], h_prev)),
                   store[f"{prefix}.b"])
    i = ad.sigmoid(ad.narrow(gates, 0, 0, hidden))
    f = ad.sigmoid(ad.narrow(gates, 0, hidden, 2 * hidden))
    g = ad.tanh(ad.narrow(gates, 0, 2 * hidden, 3 * hidden))
    o = ad.sigmoid(ad.narrow(gates, 0, 3 * hidden, 4 * hidden))
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(c))
    return h, c


def register_birnn(store: ParamStore, prefix: str, in_dim: int, hidden: int) -> None:
    register_lstm(store, f"{prefix}.fw", in_dim, hidden)
    register_lstm(store, f"{prefix}.bw", in_dim, hidden)


def birnn_encode(inputs: list[Tensor], store: ParamStore, prefix: str,
                 hidden: int) -> list[Tensor]:
    """Bidirectional LSTM; output i is [forward state i ; backward state i]."""
    if not inputs:
        raise ad.ShapeError("birnn_encode: empty input sequence")
    zeros = ad.constant(np.zeros(hidden))

    def run(xs, sub):
        h, c = zeros, zeros
        states = []
        for x in xs:
            h, c = lstm_cell(x, h, c, store, f"{prefix}.{sub}")
            states.append(h)
        return states

    fwd = run(inputs, "fw")
    bwd = run(list(reversed(inputs)), "bw")[::-1]
    return [ad.concat([f, b]) for f, b in zip(fwd, bwd)]


def register_feed_forward(store: ParamStore, prefix: str, in_dim: int, hidden: int,
                          out_dim: int) -> None:
    store.matrix(f"{prefix}.w1", hidden, in_dim)
    store.bias(f"{prefix}.b1", hidden)
    store.matrix(f"{prefix}.w2", out_dim, hidden)
    store.bias(f"{prefix}.b2", out_dim)


def feed_forward(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """One hidden tanh layer followed by a linear readout."""
    h = ad.tanh(ad.add(ad.matmul(store[f"{prefix}.w1"], x), store[f"{prefix}.b1"]))
    return ad.add(ad.matmul(store[f"{prefix}.w2"], h), store[f"{prefix}.b2"])


def linear(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """w @ x + b for rank-1 x, or x @ w.T + b row-wise for rank-2 x."""
    w, b = store[f"{prefix}.w"], store[f"{prefix}.b"]
    if x.data.ndim == 1:
        return ad.add(ad.matmul(w, x), b)
    return ad.add(ad.matmul(x, ad.transpose(w)), b)


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Adam with bias correction; clears gradients after each step."""

    def __init__(self, store: ParamStore, lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        self.t += 1
        for name in self.store.trainable():
            p = self.store[name]
            if p.grad is None:
                raise ParamError(f"parameter '{name}' has no gradient")
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad * p.grad
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.store.zero_grad()


# ---------------------------------------------------------------------------
# checkpoint format: one JSON manifest line, then raw little-endian float64
# blocks, one per parameter, in manifest order.

def save_checkpoint(path: str, store: ParamStore, seed: int, extra: Optional[dict] = None,
                    arrays: Optional[dict[str, np.ndarray]] = None) -> None:
    data = arrays if arrays is not None else {n: store[n].data for n in store.names()}
    names = sorted(data)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "seed": seed,
        "params": [{"name": n, "shape": list(data[n].shape)} for n in names],
    }
    if extra:
        manifest["extra"] = extra
    with open(path, "wb") as f:
        f.write(json.dumps(manifest, sort_keys=True).encode("utf-8") + b"\n")
        for n in names:
            f.write(np.ascontiguousarray(data[n], dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        header = f.readline()
        manifest = json.loads(header.decode("utf-8"))
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise ParamError(f"unsupported checkpoint version {manifest.get('version')}")
        arrays = {}
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise ParamError(f"checkpoint truncated at parameter '{entry['name']}'")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return arrays, manifest
