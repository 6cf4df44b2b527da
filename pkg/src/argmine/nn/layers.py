"""Forward/backward layer implementations.

Every layer follows the same contract: ``forward`` returns ``(output, cache)``
and ``backward(cache, d_output)`` returns the input gradient while adding the
parameter gradients into ``Parameter.grad``.
"""

from __future__ import annotations

import logging

import numpy as np

from .params import Parameter, uniform_init

logger = logging.getLogger(__name__)

CE_EPS = 1e-12


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, targets) -> float:
    """Mean negative log probability of the target classes.

    ``probs`` must already be a distribution along the last axis; zero target
    probabilities are clamped (and flagged) instead of producing inf.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    sums = probs.sum(axis=-1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        raise ValueError("probs rows must sum to 1 (+- 1e-6)")
    picked = probs[np.arange(len(targets)), targets]
    if np.any(picked < CE_EPS):
        logger.warning("cross_entropy: clamping %d zero target probabilities",
                       int(np.sum(picked < CE_EPS)))
        picked = np.maximum(picked, CE_EPS)
    return float(-np.log(picked).mean())


class EmbeddingTable:
    """Trainable lookup table, rows initialized N(0, 1)."""

    def __init__(self, name: str, num_embeddings: int, dim: int,
                 rng: np.random.Generator):
        self.table = Parameter(f"{name}.table",
                               rng.standard_normal((num_embeddings, dim)))

    def params(self) -> list[Parameter]:
        return [self.table]

    def forward(self, ids: np.ndarray):
        ids = np.asarray(ids, dtype=np.int64)
        return self.table.value[ids], ids

    def backward(self, cache, d_out: np.ndarray) -> None:
        ids = cache
        np.add.at(self.table.grad, ids, d_out)


class Linear:
    def __init__(self, name: str, d_in: int, d_out: int, rng: np.random.Generator):
        self.w = Parameter(f"{name}.w", uniform_init(rng, (d_out, d_in), d_in))
        self.b = Parameter(f"{name}.b", np.zeros(d_out))

    def params(self) -> list[Parameter]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray):
        y = x @ self.w.value.T + self.b.value
        return y, x

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        x = cache
        d2 = np.atleast_2d(d_out)
        x2 = np.atleast_2d(x)
        self.w.grad += d2.T @ x2
        self.b.grad += d2.sum(axis=0)
        return d_out @ self.w.value


class Dropout:
    """Inverted dropout: scales survivors by 1/(1-p) in training, identity in eval."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        self.p = p

    def forward(self, x: np.ndarray, train: bool, rng: np.random.Generator):
        if not train or self.p == 0.0:
            return x, None
        mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * mask, mask

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        if cache is None:
            return d_out
        return d_out * cache


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class LstmDirection:
    """Single-direction LSTM over a full sequence.

    Gate layout along the 4H axis: input, forget, cell, output.  The forget
    bias starts at 1.0, everything else uniform +-sqrt(1/fan_in).
    """

    def __init__(self, name: str, d_in: int, hidden: int,
                 rng: np.random.Generator, reverse: bool = False):
        self.d_in = d_in
        self.hidden = hidden
        self.reverse = reverse
        h = hidden
        self.w = Parameter(f"{name}.w", uniform_init(rng, (4 * h, d_in), d_in))
        self.u = Parameter(f"{name}.u", uniform_init(rng, (4 * h, h), h))
        bias = np.zeros(4 * h)
        bias[h:2 * h] = 1.0
        self.b = Parameter(f"{name}.b", bias)

    def params(self) -> list[Parameter]:
        return [self.w, self.u, self.b]

    def forward(self, x: np.ndarray):
        n = x.shape[0]
        h = self.hidden
        if n == 0:
            return np.zeros((0, h)), None
        xs = x[::-1] if self.reverse else x
        zx = xs @ self.w.value.T + self.b.value          # [n, 4H]
        gates = np.empty((n, 4 * h))
        hprev = np.zeros((n, h))
        cprev = np.zeros((n, h))
        cs = np.empty((n, h))
        tcs = np.empty((n, h))
        hs = np.empty((n, h))
        h_t = np.zeros(h)
        c_t = np.zeros(h)
        for t in range(n):
            hprev[t] = h_t
            cprev[t] = c_t
            z = zx[t] + self.u.value @ h_t
            i = _sigmoid(z[:h])
            f = _sigmoid(z[h:2 * h])
            g = np.tanh(z[2 * h:3 * h])
            o = _sigmoid(z[3 * h:])
            c_t = f * cprev[t] + i * g
            tc = np.tanh(c_t)
            h_t = o * tc
            gates[t, :h] = i
            gates[t, h:2 * h] = f
            gates[t, 2 * h:3 * h] = g
            gates[t, 3 * h:] = o
            cs[t] = c_t
            tcs[t] = tc
            hs[t] = h_t
        cache = (xs, gates, hprev, cprev, cs, tcs)
        out = hs[::-1] if self.reverse else hs
        return out, cache

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        if cache is None:
            return np.zeros((0, self.d_in))
        xs, gates, hprev, cprev, cs, tcs = cache
        n = xs.shape[0]
        h = self.hidden
        d_hs = d_out[::-1] if self.reverse else d_out
        dz_all = np.empty((n, 4 * h))
        dh_carry = np.zeros(h)
        dc_carry = np.zeros(h)
        ut = self.u.value.T
        for t in range(n - 1, -1, -1):
            i = gates[t, :h]
            f = gates[t, h:2 * h]
            g = gates[t, 2 * h:3 * h]
            o = gates[t, 3 * h:]
            tc = tcs[t]
            dh = d_hs[t] + dh_carry
            do = dh * tc
            dc = dc_carry + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * cprev[t]
            dg = dc * i
            dz = dz_all[t]
            dz[:h] = di * i * (1.0 - i)
            dz[h:2 * h] = df * f * (1.0 - f)
            dz[2 * h:3 * h] = dg * (1.0 - g * g)
            dz[3 * h:] = do * o * (1.0 - o)
            dh_carry = ut @ dz
            dc_carry = dc * f
        self.w.grad += dz_all.T @ xs
        self.u.grad += dz_all.T @ hprev
        self.b.grad += dz_all.sum(axis=0)
        dxs = dz_all @ self.w.value
        return dxs[::-1] if self.reverse else dxs


class BiLstm:
    """Stacked bidirectional LSTM; dropout between layers during training."""

    def __init__(self, name: str, d_in: int, hidden: int, layers: int,
                 rng: np.random.Generator, dropout: float = 0.0):
        self.hidden = hidden
        self.layers = []
        self.dropout = Dropout(dropout)
        d = d_in
        for l in range(layers):
            fwd = LstmDirection(f"{name}.l{l}.fwd", d, hidden, rng, reverse=False)
            bwd = LstmDirection(f"{name}.l{l}.bwd", d, hidden, rng, reverse=True)
            self.layers.append((fwd, bwd))
            d = 2 * hidden
        self.d_out = 2 * hidden

    def params(self) -> list[Parameter]:
        out = []
        for fwd, bwd in self.layers:
            out.extend(fwd.params())
            out.extend(bwd.params())
        return out

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None):
        caches = []
        for l, (fwd, bwd) in enumerate(self.layers):
            hf, cf = fwd.forward(x)
            hb, cb = bwd.forward(x)
            y = np.concatenate([hf, hb], axis=1)
            drop_cache = None
            if l + 1 < len(self.layers):
                y, drop_cache = self.dropout.forward(y, train, rng)
            caches.append((cf, cb, drop_cache))
            x = y
        return x, caches

    def backward(self, caches, d_out: np.ndarray) -> np.ndarray:
        h = self.hidden
        for l in range(len(self.layers) - 1, -1, -1):
            fwd, bwd = self.layers[l]
            cf, cb, drop_cache = caches[l]
            if l + 1 < len(self.layers):
                d_out = self.dropout.backward(drop_cache, d_out)
            dx = fwd.backward(cf, d_out[:, :h])
            dx = dx + bwd.backward(cb, d_out[:, h:])
            d_out = dx
        return d_out


class CnnMaxPool:
    """Per-ngram-size 1-D convolution + ReLU + max over time, concatenated.

    Inputs shorter than an ngram size are zero-padded at the end so every
    branch always has at least one window.
    """

    def __init__(self, name: str, d_in: int, ngram_sizes: tuple[int, ...],
                 filters: int, rng: np.random.Generator):
        self.d_in = d_in
        self.ngram_sizes = tuple(ngram_sizes)
        self.filters = filters
        self.weights = []
        self.biases = []
        for m in self.ngram_sizes:
            self.weights.append(Parameter(
                f"{name}.n{m}.w", uniform_init(rng, (filters, m * d_in), m * d_in)))
            self.biases.append(Parameter(f"{name}.n{m}.b", np.zeros(filters)))
        self.d_out = len(self.ngram_sizes) * filters

    def params(self) -> list[Parameter]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def forward(self, x: np.ndarray):
        n = x.shape[0]
        outs = []
        caches = []
        for m, w, b in zip(self.ngram_sizes, self.weights, self.biases):
            if n < m:
                xp = np.vstack([x, np.zeros((m - n, self.d_in))])
            else:
                xp = x
            t = xp.shape[0] - m + 1
            windows = np.empty((t, m * self.d_in))
            for j in range(t):
                windows[j] = xp[j:j + m].reshape(-1)
            pre = windows @ w.value.T + b.value          # [t, F]
            act = relu(pre)
            arg = act.argmax(axis=0)                      # first max on ties
            outs.append(act[arg, np.arange(self.filters)])
            caches.append((windows, pre, arg, xp.shape[0]))
        return np.concatenate(outs), (n, caches)

    def backward(self, cache, d_out: np.ndarray) -> np.ndarray:
        n, caches = cache
        dx = np.zeros((n, self.d_in))
        f = self.filters
        for k, (m, w, b) in enumerate(zip(self.ngram_sizes, self.weights,
                                          self.biases)):
            windows, pre, arg, n_padded = caches[k]
            dv = d_out[k * f:(k + 1) * f]
            t = windows.shape[0]
            d_act = np.zeros((t, f))
            d_act[arg, np.arange(f)] = dv
            d_pre = d_act * (pre > 0.0)
            w.grad += d_pre.T @ windows
            b.grad += d_pre.sum(axis=0)
            d_windows = d_pre @ w.value                   # [t, m*d]
            dxp = np.zeros((n_padded, self.d_in))
            for j in range(t):
                dxp[j:j + m] += d_windows[j].reshape(m, self.d_in)
            dx += dxp[:n]
        return dx


class SoftmaxCrossEntropy:
    """Fused softmax + cross-entropy on logits with the usual exact gradient."""

    def forward(self, logits: np.ndarray, targets):
        logits2 = np.atleast_2d(np.asarray(logits, dtype=np.float64))
        targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
        probs = softmax(logits2)
        picked = np.maximum(probs[np.arange(len(targets)), targets], CE_EPS)
        loss = float(-np.log(picked).mean())
        return loss, (logits.ndim, probs, targets)

    def backward(self, cache, d_loss: float = 1.0):
        ndim, probs, targets = cache
        d = probs.copy()
        d[np.arange(len(targets)), targets] -= 1.0
        d *= d_loss / len(targets)
        return d[0] if ndim == 1 else d
