"""Shared oracles for the test suite."""
import math

import numpy as np

from bubblelab.nnet import LstmModel, backward_batch

REL_FLOOR = 1e-6


def scalar_cell(x, h, c, W, U, b):
    """Element-by-element LSTM step written with Python floats only."""
    H = len(h)

    def pre(row):
        return (sum(W[row][j] * x[j] for j in range(len(x))) + sum(U[row][j] * h[j] for j in range(H))
                + b[row])

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    h_new, c_new = [], []
    for i in range(H):
        r = sig(pre(i))
        s = sig(pre(H + i))
        f = sig(pre(2 * H + i))
        cand = math.tanh(pre(3 * H + i))
        ci = c[i] * r + s * cand
        c_new.append(ci)
        h_new.append(f * math.tanh(ci))
    return h_new, c_new


def random_model(gen, input_dim, hidden):
    model = LstmModel.init(input_dim, hidden, gen)
    # perturb so that biases and head are not at their special init values
    for v in model.parameters().values():
        v += gen.normal(0, 0.3, v.shape)
    return model


def gradient_check(model, X, Y, eps=1e-5):
    """Max relative error between analytic and central-difference gradients over all coordinates."""
    _, grads, _ = backward_batch(model, X, Y)
    worst = 0.0
    for name, p in model.parameters().items():
        g = grads[name]
        flat = p.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = backward_batch(model, X, Y)[0]
            flat[i] = old - eps
            lm = backward_batch(model, X, Y)[0]
            flat[i] = old
            num = (lp - lm) / (2 * eps)
            ana = g.reshape(-1)[i]
            worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), REL_FLOOR))
    return worst


def random_gradcheck_case(seed):
    gen = np.random.default_rng(seed)
    hidden = int(gen.integers(1, 5))
    T = int(gen.integers(1, 9))
    B = int(gen.integers(1, 3))
    D = int(gen.integers(1, 4))
    model = random_model(gen, D, hidden)
    X = gen.normal(size=(T, B, D))
    Y = gen.integers(0, 2, size=(T, B))
    return model, X, Y
