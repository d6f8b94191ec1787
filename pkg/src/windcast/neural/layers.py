"""Dense and recurrent layers.

Recurrent cells expose three routes over the same parameters:

``step``      one time step built from autograd primitives (reference route)
``sequence``  a whole sequence as a single graph node with hand-written BPTT
``step_np``   graph-free numpy step, used when sampling forecasts

The fused ``sequence`` route is what training uses; tests check it
against the composed ``step`` route and against finite differences.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .autograd import Tensor, as_tensor, concat, matmul, sigmoid, tanh


class Module:
    """Parameter container with recursive, name-ordered parameter listing."""

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                for k, v in value.parameters().items():
                    out[f"{key}.{k}"] = v
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for k, v in item.parameters().items():
                            out[f"{key}.{i}.{k}"] = v
        return out

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(params) != set(state):
            raise ShapeMismatch(f"parameter names differ: {sorted(set(params) ^ set(state))}")
        for k, p in params.items():
            a = np.asarray(state[k], dtype=np.float64)
            if a.shape != p.shape:
                raise ShapeMismatch(f"{k}: expected {p.shape}, got {a.shape}")
            p.data = a.copy()


_AFFINE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _lstm_affine(H: int):
    if H not in _AFFINE_CACHE:
        half = np.full(H, 0.5)
        scale = np.concatenate([half, half, np.ones(H), half])
        offset = np.concatenate([half, half, np.zeros(H), half])
        _AFFINE_CACHE[H] = (scale, offset)
    return _AFFINE_CACHE[H]


def _lstm_forward(xz, wh, h0, c0):
    """Forward recursion given precomputed input projections ``xz`` (T, B, 4H)."""
    T, B, G = xz.shape
    H = G // 4
    # sigmoid(z) = (1 + tanh(z / 2)) / 2, so one tanh covers all four gates
    scale, offset = _lstm_affine(H)
    hs = np.empty((T + 1, B, H))
    cs = np.empty((T + 1, B, H))
    acts = np.empty((T, B, G))
    tcs = np.empty((T, B, H))
    hs[0], cs[0] = h0, c0
    for t in range(T):
        a = acts[t]
        np.dot(hs[t], wh, out=a)
        a += xz[t]
        a *= scale
        np.tanh(a, out=a)
        a *= scale
        a += offset
        c = cs[t + 1]
        np.multiply(a[:, H : 2 * H], cs[t], out=c)
        c += a[:, :H] * a[:, 2 * H : 3 * H]
        np.tanh(c, out=tcs[t])
        np.multiply(a[:, 3 * H :], tcs[t], out=hs[t + 1])
    return hs, cs, acts, tcs


def _gru_forward(xz, wh, bh, h0):
    T, B, G = xz.shape
    H = G // 3
    hs = np.empty((T + 1, B, H))
    hs[0] = h0
    ru = np.empty((T, B, 2 * H))
    ns = np.empty((T, B, H))
    hzn = np.empty((T, B, H))
    hz = np.empty((B, G))
    for t in range(T):
        np.dot(hs[t], wh, out=hz)
        hz += bh
        g = ru[t]
        np.add(xz[t, :, : 2 * H], hz[:, : 2 * H], out=g)
        g *= 0.5
        np.tanh(g, out=g)
        g *= 0.5
        g += 0.5
        hzn[t] = hz[:, 2 * H :]
        n = ns[t]
        np.multiply(g[:, :H], hzn[t], out=n)
        n += xz[t, :, 2 * H :]
        np.tanh(n, out=n)
        u = g[:, H:]
        # h' = n + u * (h - n)
        np.subtract(hs[t], n, out=hs[t + 1])
        hs[t + 1] *= u
        hs[t + 1] += n
    return hs, ru[:, :, :H], ru[:, :, H:], ns, hzn


def _uniform(rng: np.random.Generator, bound: float, shape) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, init_bound: float | None = None):
        bound = init_bound if init_bound is not None else 1.0 / np.sqrt(in_features)
        self.in_features, self.out_features = in_features, out_features
        self.weight = _uniform(rng, bound, (in_features, out_features))
        self.bias = _uniform(rng, bound, (out_features,))

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.in_features:
            raise ShapeMismatch(f"expected {self.in_features} input features, got {x.shape[-1]}")
        if x.data.ndim == 2:
            return matmul(x, self.weight) + self.bias
        lead = x.shape[:-1]
        flat = x.reshape(-1, self.in_features)
        return (matmul(flat, self.weight) + self.bias).reshape(*lead, self.out_features)

    def np(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.data + self.bias.data


class _Recurrent(Module):
    gates = 1

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(hidden_size)
        g = self.gates * hidden_size
        self.input_size, self.hidden_size = input_size, hidden_size
        self.w_x = _uniform(rng, bound, (input_size, g))
        self.w_h = _uniform(rng, bound, (hidden_size, g))
        self.b = _uniform(rng, bound, (g,))

    def _check_input(self, x):
        if x.shape[-1] != self.input_size:
            raise ShapeMismatch(f"expected input of size {self.input_size}, got {x.shape[-1]}")

    def _check_state(self, state, batch):
        for s in state:
            if s.shape != (batch, self.hidden_size):
                raise ShapeMismatch(f"state shape {s.shape} != {(batch, self.hidden_size)}")

    def zero_state(self, batch: int):
        raise NotImplementedError


class LSTMCell(_Recurrent):
    """LSTM with gate order (input, forget, candidate, output).

    i = sig(x Wx_i + h Wh_i + b_i), f, o likewise, g = tanh(...)
    c' = f * c + i * g,  h' = o * tanh(c')
    """

    kind = "lstm"
    gates = 4

    def zero_state(self, batch: int):
        z = np.zeros((batch, self.hidden_size))
        return (z, z.copy())

    def step(self, x, state):
        x = as_tensor(x)
        squeeze = x.data.ndim == 1
        if squeeze:
            x = x.reshape(1, -1)
        self._check_input(x)
        h, c = (as_tensor(s) for s in state)
        if squeeze:
            h, c = h.reshape(1, -1), c.reshape(1, -1)
        self._check_state((h, c), x.shape[0])
        H = self.hidden_size
        z = matmul(x, self.w_x) + matmul(h, self.w_h) + self.b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H : 2 * H])
        g = tanh(z[:, 2 * H : 3 * H])
        o = sigmoid(z[:, 3 * H :])
        c_new = f * c + i * g
        h_new = o * tanh(c_new)
        if squeeze:
            return h_new.reshape(-1), (h_new.reshape(-1), c_new.reshape(-1))
        return h_new, (h_new, c_new)

    def step_np(self, x: np.ndarray, state):
        h, c = state
        xz = (x @ self.w_x.data + self.b.data)[None]
        hs, cs, _, _ = _lstm_forward(xz, self.w_h.data, h, c)
        return hs[1], (hs[1], cs[1])

    def sequence(self, x: Tensor, state=None):
        """Run over ``x`` of shape (T, B, input_size); returns (outputs (T, B, H), final state).

        Gradients flow from the outputs into ``x``, the weights and the
        initial state; the returned final state is a plain array pair.
        """
        x = as_tensor(x)
        self._check_input(x)
        T, B, _ = x.shape
        H = self.hidden_size
        h0t, c0t = (as_tensor(s) for s in (state if state is not None else self.zero_state(B)))
        self._check_state((h0t, c0t), B)
        h0, c0 = h0t.data, c0t.data
        wx, wh, b = self.w_x.data, self.w_h.data, self.b.data
        xz = (x.data.reshape(T * B, -1) @ wx + b).reshape(T, B, 4 * H)
        hs, cs, acts, tcs = _lstm_forward(xz, wh, h0, c0)

        x_data = x.data

        def back(g):
            dz = np.empty((T, B, 4 * H))
            dh = np.empty((B, H))
            dc = np.zeros((B, H))
            dh_next = np.zeros((B, H))
            f_next = np.zeros((B, H))
            for t in range(T - 1, -1, -1):
                a = acts[t]
                i, f, gg, o = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
                np.add(g[t], dh_next, out=dh)
                tc = tcs[t]
                d = dz[t]
                # output gate
                np.multiply(dh, tc, out=d[:, 3 * H :])
                d[:, 3 * H :] *= o * (1.0 - o)
                # dc accumulates the path through tanh(c)
                dc *= f_next
                dc += dh * o * (1.0 - tc * tc)
                np.multiply(dc, gg, out=d[:, :H])
                d[:, :H] *= i * (1.0 - i)
                np.multiply(dc, cs[t], out=d[:, H : 2 * H])
                d[:, H : 2 * H] *= f * (1.0 - f)
                np.multiply(dc, i, out=d[:, 2 * H : 3 * H])
                d[:, 2 * H : 3 * H] *= 1.0 - gg * gg
                np.dot(d, wh.T, out=dh_next)
                f_next = f
            flat = dz.reshape(T * B, 4 * H)
            dx = (flat @ wx.T).reshape(x_data.shape)
            dwx = x_data.reshape(T * B, -1).T @ flat
            dwh = hs[:-1].reshape(T * B, H).T @ flat
            db = flat.sum(axis=0)
            return dx, dwx, dwh, db, dh_next, dc * f_next

        out = Tensor._result(hs[1:].copy(), (x, self.w_x, self.w_h, self.b, h0t, c0t), back)
        return out, (hs[T].copy(), cs[T].copy())


class GRUCell(_Recurrent):
    """GRU with gate order (reset, update, candidate).

    r = sig(x Wx_r + bx_r + h Wh_r + bh_r), u likewise,
    n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n)),  h' = (1 - u) * n + u * h
    """

    kind = "gru"
    gates = 3

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        super().__init__(input_size, hidden_size, rng)
        self.b_h = _uniform(rng, 1.0 / np.sqrt(hidden_size), (3 * hidden_size,))

    def zero_state(self, batch: int):
        return (np.zeros((batch, self.hidden_size)),)

    def step(self, x, state):
        x = as_tensor(x)
        squeeze = x.data.ndim == 1
        if squeeze:
            x = x.reshape(1, -1)
        self._check_input(x)
        (h,) = (as_tensor(s) for s in state)
        if squeeze:
            h = h.reshape(1, -1)
        self._check_state((h,), x.shape[0])
        H = self.hidden_size
        xz = matmul(x, self.w_x) + self.b
        hz = matmul(h, self.w_h) + self.b_h
        r = sigmoid(xz[:, :H] + hz[:, :H])
        u = sigmoid(xz[:, H : 2 * H] + hz[:, H : 2 * H])
        n = tanh(xz[:, 2 * H :] + r * hz[:, 2 * H :])
        h_new = (1.0 - u) * n + u * h
        if squeeze:
            return h_new.reshape(-1), (h_new.reshape(-1),)
        return h_new, (h_new,)

    def step_np(self, x: np.ndarray, state):
        (h,) = state
        xz = (x @ self.w_x.data + self.b.data)[None]
        hs = _gru_forward(xz, self.w_h.data, self.b_h.data, h)[0]
        return hs[1], (hs[1],)

    def sequence(self, x: Tensor, state=None):
        x = as_tensor(x)
        self._check_input(x)
        T, B, _ = x.shape
        H = self.hidden_size
        (h0t,) = (as_tensor(s) for s in (state if state is not None else self.zero_state(B)))
        self._check_state((h0t,), B)
        h0 = h0t.data
        wx, wh, bx, bh = self.w_x.data, self.w_h.data, self.b.data, self.b_h.data
        xz = (x.data.reshape(T * B, -1) @ wx + bx).reshape(T, B, 3 * H)
        hs, rs, us, ns, hzn = _gru_forward(xz, wh, bh, h0)

        x_data = x.data

        def back(g):
            dxz = np.empty((T, B, 3 * H))
            dhz = np.empty((T, B, 3 * H))
            dh_next = np.zeros((B, H))
            for t in range(T - 1, -1, -1):
                r, u, n = rs[t], us[t], ns[t]
                dh = g[t] + dh_next
                dn = dh * (1.0 - u) * (1.0 - n * n)
                du = dh * (hs[t] - n) * u * (1.0 - u)
                dr = dn * hzn[t] * r * (1.0 - r)
                dxz[t, :, :H] = dr
                dxz[t, :, H : 2 * H] = du
                dxz[t, :, 2 * H :] = dn
                dhz[t, :, :H] = dr
                dhz[t, :, H : 2 * H] = du
                dhz[t, :, 2 * H :] = dn * r
                dh_next = dh * u + dhz[t] @ wh.T
            fx = dxz.reshape(T * B, 3 * H)
            fh = dhz.reshape(T * B, 3 * H)
            dx = (fx @ wx.T).reshape(x_data.shape)
            dwx = x_data.reshape(T * B, -1).T @ fx
            dwh = hs[:-1].reshape(T * B, H).T @ fh
            return dx, dwx, dwh, fx.sum(axis=0), fh.sum(axis=0), dh_next

        out = Tensor._result(hs[1:].copy(), (x, self.w_x, self.w_h, self.b, self.b_h, h0t), back)
        return out, (hs[T].copy(),)


CELLS = {"lstm": LSTMCell, "gru": GRUCell}


def make_cell(kind: str, input_size: int, hidden_size: int, rng: np.random.Generator) -> _Recurrent:
    try:
        cls = CELLS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {sorted(CELLS)}") from None
    return cls(input_size, hidden_size, rng)


def unrolled(cell: _Recurrent, x, state=None):
    """Composed-primitive unroll over (T, B, I); reference for ``cell.sequence``."""
    x = as_tensor(x)
    T, B, _ = x.shape
    state = state if state is not None else cell.zero_state(B)
    state = tuple(as_tensor(s) for s in state)
    outs = []
    for t in range(T):
        h, state = cell.step(x[t], state)
        outs.append(h.reshape(1, B, cell.hidden_size))
    return concat(outs, axis=0), state
