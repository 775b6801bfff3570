"""Dense feed-forward networks with hand-written gradients and Adam.

Networks are small (two hidden layers on a 2-dim observation), so the
throughput limit is numpy call overhead, not FLOPs. Parameters therefore
live in one flat buffer per network (optimizer and soft-update steps are
single-array operations), forward/backward workspaces are preallocated per
batch size, and the twin critics evaluate as one stacked batched matmul.

A cache returned by ``forward`` stays valid until the next ``forward`` of
the same module at the same batch size.
"""

from __future__ import annotations

import numpy as np


def relu(z):
    return np.maximum(z, 0.0)


class _FlatParams:
    """Flat parameter/gradient storage with shaped views."""

    def _allocate(self, shapes):
        total = sum(int(np.prod(s)) for s in shapes)
        self.theta = np.zeros(total)
        self.grad = np.zeros(total)
        views, gviews = [], []
        off = 0
        for s in shapes:
            n = int(np.prod(s))
            views.append(self.theta[off:off + n].reshape(s))
            gviews.append(self.grad[off:off + n].reshape(s))
            off += n
        return views, gviews

    def soft_update_from(self, source, tau):
        if tau == 0.0:
            return
        self.theta *= 1.0 - tau
        self.theta += tau * source.theta


class Mlp(_FlatParams):
    """ReLU MLP with a linear or tanh output head."""

    def __init__(self, sizes, out_activation="linear", rng=None, final_scale=3e-3):
        self.sizes = tuple(int(s) for s in sizes)
        self.out_activation = out_activation
        pairs = list(zip(self.sizes[:-1], self.sizes[1:]))
        shapes = [(i, o) for i, o in pairs] + [(o,) for _, o in pairs]
        views, gviews = self._allocate(shapes)
        n = len(pairs)
        self.W, self.b = views[:n], views[n:]
        self.gW, self.gb = gviews[:n], gviews[n:]
        self._ws = {}
        if rng is None:
            rng = np.random.default_rng(0)
        for i, (n_in, _) in enumerate(pairs):
            bound = final_scale if i == n - 1 else 1.0 / np.sqrt(n_in)
            self.W[i][...] = rng.uniform(-bound, bound, self.W[i].shape)
            self.b[i][...] = rng.uniform(-bound, bound, self.b[i].shape)

    def parameters(self):
        return self.W + self.b

    def _workspace(self, batch):
        ws = self._ws.get(batch)
        if ws is None:
            zs = [np.empty((batch, s)) for s in self.sizes[1:]]
            hs = [np.empty((batch, s)) for s in self.sizes[1:-1]]
            dzs = [np.empty((batch, s)) for s in self.sizes[1:]]
            dx = np.empty((batch, self.sizes[0]))
            ws = (zs, hs, dzs, dx)
            self._ws[batch] = ws
        return ws

    def forward(self, x):
        """Returns (output, cache) for a (batch, n_in) input."""
        zs, hs, _, _ = self._workspace(x.shape[0])
        h = x
        inputs = [x]
        n = len(self.W)
        for i in range(n):
            np.matmul(h, self.W[i], out=zs[i])
            zs[i] += self.b[i]
            if i < n - 1:
                np.maximum(zs[i], 0.0, out=hs[i])
                h = hs[i]
                inputs.append(h)
        out = zs[-1]
        if self.out_activation == "tanh":
            out = np.tanh(out)
        return out, (inputs, zs, out)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, dout, input_grad=True, dout_pre=None):
        """Gradients of sum(dout * output) w.r.t. parameters and the input.

        Parameter gradients land in the flat ``grad`` buffer (also returned
        as shaped views, weights first then biases). ``dout_pre`` adds a
        gradient term on the output pre-activation (for regularizers on the
        un-squashed head).
        """
        inputs, zs, out = cache
        batch = dout.shape[0]
        _, _, dzs, dx_buf = self._workspace(batch)
        n = len(self.W)
        if self.out_activation == "tanh":
            np.multiply(dout, 1.0 - out * out, out=dzs[-1])
        else:
            dzs[-1][...] = dout
        if dout_pre is not None:
            dzs[-1] += dout_pre
        dz = dzs[-1]
        for i in range(n - 1, -1, -1):
            np.matmul(inputs[i].T, dz, out=self.gW[i])
            np.sum(dz, axis=0, out=self.gb[i])
            if i > 0:
                np.matmul(dz, self.W[i].T, out=dzs[i - 1])
                dzs[i - 1] *= zs[i - 1] > 0.0
                dz = dzs[i - 1]
            elif input_grad:
                np.matmul(dz, self.W[0].T, out=dx_buf)
        return self.gW + self.gb, (dx_buf if input_grad else None)

    def backward_input_only(self, cache, dout):
        """Input gradient without touching the parameter gradient buffer."""
        inputs, zs, out = cache
        if self.out_activation == "tanh":
            dz = dout * (1.0 - out * out)
        else:
            dz = dout
        for i in range(len(self.W) - 1, 0, -1):
            dz = (dz @ self.W[i].T) * (zs[i - 1] > 0.0)
        return dz @ self.W[0].T

    def copy_from(self, other):
        self.theta[...] = other.theta

    def clone(self):
        twin = Mlp(self.sizes, self.out_activation)
        twin.copy_from(self)
        return twin

    def state_list(self):
        return [w.tolist() for w in self.W] + [b.tolist() for b in self.b]

    def load_state_list(self, data):
        n = len(self.W)
        for i in range(n):
            self.W[i][...] = np.asarray(data[i])
            self.b[i][...] = np.asarray(data[n + i])


class TwinMlp(_FlatParams):
    """Two same-architecture linear-head MLPs evaluated as stacked tensors.

    Weight arrays carry a leading twin axis of 2, so both critics' layers
    run in one batched matmul each.
    """

    def __init__(self, sizes, rng=None, final_scale=3e-3):
        self.sizes = tuple(int(s) for s in sizes)
        pairs = list(zip(self.sizes[:-1], self.sizes[1:]))
        shapes = [(2, i, o) for i, o in pairs] + [(2, 1, o) for _, o in pairs]
        views, gviews = self._allocate(shapes)
        n = len(pairs)
        self.W, self.b = views[:n], views[n:]
        self.gW, self.gb = gviews[:n], gviews[n:]
        self._ws = {}
        if rng is None:
            rng = np.random.default_rng(0)
        for i, (n_in, _) in enumerate(pairs):
            bound = final_scale if i == n - 1 else 1.0 / np.sqrt(n_in)
            self.W[i][...] = rng.uniform(-bound, bound, self.W[i].shape)
            self.b[i][...] = rng.uniform(-bound, bound, self.b[i].shape)

    def _workspace(self, batch):
        ws = self._ws.get(batch)
        if ws is None:
            zs = [np.empty((2, batch, s)) for s in self.sizes[1:]]
            hs = [np.empty((2, batch, s)) for s in self.sizes[1:-1]]
            dzs = [np.empty((2, batch, s)) for s in self.sizes[1:]]
            ws = (zs, hs, dzs)
            self._ws[batch] = ws
        return ws

    def forward(self, x):
        """(batch, n_in) input -> (2, batch, 1) twin outputs."""
        zs, hs, _ = self._workspace(x.shape[0])
        h = np.broadcast_to(x, (2,) + x.shape)
        inputs = [h]
        n = len(self.W)
        for i in range(n):
            np.matmul(h, self.W[i], out=zs[i])
            zs[i] += self.b[i]
            if i < n - 1:
                np.maximum(zs[i], 0.0, out=hs[i])
                h = hs[i]
                inputs.append(h)
        return zs[-1], (inputs, zs)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, dout):
        """Parameter gradients of sum(dout * outputs) into the flat buffer."""
        inputs, zs = cache
        batch = dout.shape[1]
        _, _, dzs = self._workspace(batch)
        dzs[-1][...] = dout
        dz = dzs[-1]
        for i in range(len(self.W) - 1, -1, -1):
            np.matmul(np.swapaxes(inputs[i], 1, 2), dz, out=self.gW[i])
            np.sum(dz, axis=1, keepdims=True, out=self.gb[i])
            if i > 0:
                np.matmul(dz, np.swapaxes(self.W[i], 1, 2), out=dzs[i - 1])
                dzs[i - 1] *= zs[i - 1] > 0.0
                dz = dzs[i - 1]
        return self.gW + self.gb

    def single(self, k) -> Mlp:
        """A standalone copy of twin ``k`` (for inspection and export)."""
        net = Mlp(self.sizes, "linear")
        for i in range(len(self.W)):
            net.W[i][...] = self.W[i][k]
            net.b[i][...] = self.b[i][k][0]
        return net

    def forward_single(self, x, k):
        """Twin ``k`` only; returns (out, cache) compatible with
        ``backward_single_input``."""
        h = x
        zs = []
        for i in range(len(self.W)):
            z = h @ self.W[i][k] + self.b[i][k][0]
            zs.append(z)
            if i < len(self.W) - 1:
                h = relu(z)
        return zs[-1], zs

    def backward_single_input(self, cache, dout, k):
        zs = cache
        dz = dout
        for i in range(len(self.W) - 1, 0, -1):
            dz = (dz @ self.W[i][k].T) * (zs[i - 1] > 0.0)
        return dz @ self.W[0][k].T

    def load_from_pair(self, net1: Mlp, net2: Mlp):
        for i in range(len(self.W)):
            self.W[i][0], self.W[i][1] = net1.W[i], net2.W[i]
            self.b[i][0, 0], self.b[i][1, 0] = net1.b[i], net2.b[i]

    def clone(self):
        twin = TwinMlp(self.sizes)
        twin.theta[...] = self.theta
        return twin


class Adam:
    """Adaptive-moment gradient steps over a parameter list, in place.

    Pass ``[net.theta]`` / ``[net.grad]`` to step a whole network as one
    fused array operation.
    """

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
