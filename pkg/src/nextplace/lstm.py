"""LSTM cell and fused sequence pass on top of the tape engine.

Gate blocks occupy fixed contiguous rows of the stacked weight matrices,
in the order: input, forget, candidate, output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, _recording, _emit, stable_sigmoid

GATE_ORDER = ("input", "forget", "candidate", "output")


@dataclass
class LstmCellParams:
    w_input: Tensor   # [4H, d_in]
    w_hidden: Tensor  # [4H, H]
    bias: Tensor      # [4H]

    @property
    def hidden_size(self) -> int:
        return self.w_hidden.data.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_input.data.shape[1]

    def tensors(self):
        return (self.w_input, self.w_hidden, self.bias)

    def validate(self):
        h = self.hidden_size
        if self.w_input.data.shape[0] != 4 * h or self.w_hidden.data.shape != (4 * h, h) \
                or self.bias.data.shape != (4 * h,):
            raise ShapeError(
                f"inconsistent cell parameter shapes: w_input {self.w_input.data.shape}, "
                f"w_hidden {self.w_hidden.data.shape}, bias {self.bias.data.shape}")


def init_lstm_params(d_in: int, hidden: int, rng: np.random.Generator,
                     forget_bias: float = 1.0, name: str = "lstm") -> LstmCellParams:
    """Uniform init in [-1/sqrt(H), 1/sqrt(H)]; forget-gate bias raised to
    `forget_bias` so early training does not wash out the cell state."""
    bound = 1.0 / np.sqrt(hidden)
    w_input = Tensor(rng.uniform(-bound, bound, size=(4 * hidden, d_in)),
                     requires_grad=True, name=f"{name}.w_input")
    w_hidden = Tensor(rng.uniform(-bound, bound, size=(4 * hidden, hidden)),
                      requires_grad=True, name=f"{name}.w_hidden")
    bias_arr = rng.uniform(-bound, bound, size=4 * hidden)
    bias_arr[hidden:2 * hidden] = forget_bias
    bias = Tensor(bias_arr, requires_grad=True, name=f"{name}.bias")
    return LstmCellParams(w_input, w_hidden, bias)


def _forward_step(wx, wh, b, x, h_prev, c_prev, hidden):
    z = wx @ x + wh @ h_prev + b
    i = stable_sigmoid(z[:hidden])
    f = stable_sigmoid(z[hidden:2 * hidden])
    g = np.tanh(z[2 * hidden:3 * hidden])
    o = stable_sigmoid(z[3 * hidden:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, i, f, g, o


def _gate_grads(dh, dc_in, i, f, g, o, c, c_prev):
    tanh_c = np.tanh(c)
    do = dh * tanh_c
    dc = dc_in + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        dc * i * (1.0 - g * g),
        do * o * (1.0 - o),
    ])
    dc_prev = dc * f
    return dz, dc_prev


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor,
              params: LstmCellParams) -> tuple[Tensor, Tensor]:
    """One recurrence step: sigmoid gates, tanh candidate and output squash."""
    params.validate()
    hidden, d_in = params.hidden_size, params.input_size
    if x.data.shape != (d_in,) or h_prev.data.shape != (hidden,) or c_prev.data.shape != (hidden,):
        raise ShapeError(
            f"lstm_cell: x {x.data.shape}, h_prev {h_prev.data.shape}, "
            f"c_prev {c_prev.data.shape} do not match cell sizes (d_in={d_in}, H={hidden})")
    wx, wh, b = params.w_input, params.w_hidden, params.bias
    h_arr, c_arr, i, f, g, o = _forward_step(
        wx.data, wh.data, b.data, x.data, h_prev.data, c_prev.data, hidden)
    h_out, c_out = Tensor(h_arr), Tensor(c_arr)
    if _recording(x, h_prev, c_prev, wx, wh, b):
        x_data, h_prev_data, c_prev_data = x.data, h_prev.data, c_prev.data
        wx_data, wh_data = wx.data, wh.data

        def back(gh, gc):
            dz, dc_prev = _gate_grads(gh, gc, i, f, g, o, c_arr, c_prev_data)
            if wx.requires_grad:
                wx.accumulate_grad(np.outer(dz, x_data))
            if wh.requires_grad:
                wh.accumulate_grad(np.outer(dz, h_prev_data))
            if b.requires_grad:
                b.accumulate_grad(dz)
            if x.requires_grad:
                x.accumulate_grad(wx_data.T @ dz)
            if h_prev.requires_grad:
                h_prev.accumulate_grad(wh_data.T @ dz)
            if c_prev.requires_grad:
                c_prev.accumulate_grad(dc_prev)

        _emit("lstm_cell", (x, h_prev, c_prev, wx, wh, b), (h_out, c_out), back)
    return h_out, c_out


def lstm_sequence(xs: Tensor, params: LstmCellParams) -> Tensor:
    """Run the cell left-to-right over the columns of xs [d_in, n] from zero
    initial state; returns the hidden states as columns [H, n].

    Forward and backward are fused into a single tape node so a whole
    sequence costs one node instead of O(n).
    """
    params.validate()
    hidden, d_in = params.hidden_size, params.input_size
    if xs.data.ndim != 2 or xs.data.shape[0] != d_in:
        raise ShapeError(
            f"lstm_sequence: input {xs.data.shape} does not match d_in={d_in}")
    n = xs.data.shape[1]
    if n == 0:
        raise ShapeError("lstm_sequence: empty sequence")
    wx, wh, b = params.w_input, params.w_hidden, params.bias
    hs = np.zeros((hidden, n))
    cs = np.zeros((hidden, n))
    gates = np.zeros((4 * hidden, n))
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    for t in range(n):
        h, c, i, f, g, o = _forward_step(
            wx.data, wh.data, b.data, xs.data[:, t], h, c, hidden)
        hs[:, t] = h
        cs[:, t] = c
        gates[:hidden, t] = i
        gates[hidden:2 * hidden, t] = f
        gates[2 * hidden:3 * hidden, t] = g
        gates[3 * hidden:, t] = o
    out = Tensor(hs)
    if _recording(xs, wx, wh, b):
        xs_data = xs.data
        wx_data, wh_data = wx.data, wh.data

        def back(g_out):
            d_wx = np.zeros_like(wx_data)
            d_wh = np.zeros_like(wh_data)
            d_b = np.zeros(4 * hidden)
            d_xs = np.zeros_like(xs_data) if xs.requires_grad else None
            dh_carry = np.zeros(hidden)
            dc_carry = np.zeros(hidden)
            for t in range(n - 1, -1, -1):
                dh = g_out[:, t] + dh_carry
                c_prev = cs[:, t - 1] if t > 0 else np.zeros(hidden)
                h_prev = hs[:, t - 1] if t > 0 else np.zeros(hidden)
                i = gates[:hidden, t]
                f = gates[hidden:2 * hidden, t]
                gq = gates[2 * hidden:3 * hidden, t]
                o = gates[3 * hidden:, t]
                dz, dc_carry = _gate_grads(dh, dc_carry, i, f, gq, o, cs[:, t], c_prev)
                d_wx += np.outer(dz, xs_data[:, t])
                d_wh += np.outer(dz, h_prev)
                d_b += dz
                if d_xs is not None:
                    d_xs[:, t] = wx_data.T @ dz
                dh_carry = wh_data.T @ dz
            if wx.requires_grad:
                wx.accumulate_grad(d_wx)
            if wh.requires_grad:
                wh.accumulate_grad(d_wh)
            if b.requires_grad:
                b.accumulate_grad(d_b)
            if d_xs is not None:
                xs.accumulate_grad(d_xs)

        _emit("lstm_sequence", (xs, wx, wh, b), (out,), back)
    return out
