"""A single LSTM layer: cell step, unrolled forward pass and backpropagation through time.

Gate pre-activations are stacked in the order remember (r), save (s),
focus (f), candidate (l):

    r = sigmoid(W_r x + U_r h + b_r)        s = sigmoid(W_s x + U_s h + b_s)
    f = sigmoid(W_f x + U_f h + b_f)        l = tanh(W_l x + U_l h + b_l)
    c' = c * r + s * l                      h' = f * tanh(c')
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import ValidationError

GATES = ("r", "s", "f", "l")
sigmoid = expit


@dataclass
class LstmLayerParams:
    """Stacked gate parameters: ``W`` is (4H, D), ``U`` is (4H, H), ``b`` is (4H,)."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        h4, _ = self.W.shape
        if h4 % 4 or self.U.shape != (h4, h4 // 4) or self.b.shape != (h4,):
            raise ValidationError(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str):
        """(W_g, U_g, b_g) views for gate ``name`` in ``GATES``."""
        k = GATES.index(name)
        h = self.hidden_dim
        sl = slice(k * h, (k + 1) * h)
        return self.W[sl], self.U[sl], self.b[sl]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int):
        return cls(np.zeros((4 * hidden_dim, input_dim)), np.zeros((4 * hidden_dim, hidden_dim)),
                   np.zeros(4 * hidden_dim))

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, gen: np.random.Generator, remember_bias: float = 1.0):
        k = 1.0 / np.sqrt(hidden_dim)
        W = gen.uniform(-k, k, (4 * hidden_dim, input_dim))
        U = gen.uniform(-k, k, (4 * hidden_dim, hidden_dim))
        b = gen.uniform(-k, k, 4 * hidden_dim)
        b[:hidden_dim] = remember_bias
        return cls(W, U, b)

    def arrays(self):
        return {"W": self.W, "U": self.U, "b": self.b}


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray


def _split(z, h):
    return z[..., :h], z[..., h:2 * h], z[..., 2 * h:3 * h], z[..., 3 * h:]


def lstm_cell_forward(x, prev: LstmState, p: LstmLayerParams) -> LstmState:
    """One cell step; ``x`` may be (D,) or batched (B, D)."""
    x = np.asarray(x, dtype=float)
    hd = p.hidden_dim
    if x.shape[-1] != p.input_dim or prev.h.shape[-1] != hd or prev.c.shape[-1] != hd:
        raise ValidationError(
            f"cell dims: x {x.shape}, h {prev.h.shape}, c {prev.c.shape} vs params D={p.input_dim}, H={hd}")
    z = x @ p.W.T + prev.h @ p.U.T + p.b
    zr, zs, zf, zl = _split(z, hd)
    r, s, f = sigmoid(zr), sigmoid(zs), sigmoid(zf)
    cand = np.tanh(zl)
    c = prev.c * r + s * cand
    return LstmState(f * np.tanh(c), c)


def layer_forward(p: LstmLayerParams, X: np.ndarray):
    """Unroll over ``X`` of shape (T, B, D) from a zero state; returns (H, cache)."""
    T, B, D = X.shape
    if D != p.input_dim:
        raise ValidationError(f"layer expects input dim {p.input_dim}, got {D}")
    hd = p.hidden_dim
    XW = X @ p.W.T + p.b
    UT = p.U.T
    gates = np.empty((T, B, 4 * hd))
    C = np.empty((T, B, hd))
    TC = np.empty((T, B, hd))
    Hs = np.empty((T, B, hd))
    h = np.zeros((B, hd))
    c = np.zeros((B, hd))
    for t in range(T):
        z = XW[t] + h @ UT
        g = gates[t]
        g[:, :3 * hd] = sigmoid(z[:, :3 * hd])
        g[:, 3 * hd:] = np.tanh(z[:, 3 * hd:])
        c = c * g[:, :hd] + g[:, hd:2 * hd] * g[:, 3 * hd:]
        C[t] = c
        tc = np.tanh(c)
        TC[t] = tc
        h = g[:, 2 * hd:3 * hd] * tc
        Hs[t] = h
    return Hs, (X, gates, C, TC, Hs)


def layer_backward(p: LstmLayerParams, cache, dH: np.ndarray):
    """Backpropagation through time. ``dH`` is dLoss/dh_t for every step, shape (T, B, H).

    Returns (dX, {"W": dW, "U": dU, "b": db}).
    """
    X, gates, C, TC, Hs = cache
    T, B, _ = X.shape
    hd = p.hidden_dim
    dZ = np.empty((T, B, 4 * hd))
    dh_next = np.zeros((B, hd))
    dc_next = np.zeros((B, hd))
    zeros = np.zeros((B, hd))
    U = p.U
    for t in range(T - 1, -1, -1):
        r, s, f, cand = _split(gates[t], hd)
        tc = TC[t]
        c_prev = C[t - 1] if t > 0 else zeros
        dh = dH[t] + dh_next
        dc = dh * f * (1.0 - tc * tc) + dc_next
        dz = dZ[t]
        dz[:, :hd] = dc * c_prev * r * (1.0 - r)
        dz[:, hd:2 * hd] = dc * cand * s * (1.0 - s)
        dz[:, 2 * hd:3 * hd] = dh * tc * f * (1.0 - f)
        dz[:, 3 * hd:] = dc * s * (1.0 - cand * cand)
        dc_next = dc * r
        dh_next = dz @ U
    H_prev = np.concatenate([np.zeros((1, B, hd)), Hs[:-1]], axis=0)
    dZ2 = dZ.reshape(T * B, 4 * hd)
    grads = {
        "W": dZ2.T @ X.reshape(T * B, -1),
        "U": dZ2.T @ H_prev.reshape(T * B, hd),
        "b": dZ2.sum(axis=0),
    }
    return dZ @ p.W, grads
