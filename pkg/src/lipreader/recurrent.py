"""Gated recurrent cells, sequence runners, and the bidirectional stack.

The cell follows the common two-gate formulation: a fused projection
produces the update and reset gates (update first, reset second), a
tanh candidate uses the reset-gated previous state, and the new state
is the gate-weighted convex combination

    h_t = (1 - u_t) * h_{t-1} + u_t * cand_t

All backward passes are hand-derived backpropagation through time and
return exact analytic gradients for the six parameter blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import ShapeMismatchError, he_init, orthogonal_init


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class GruCell:
    """One recurrent cell. Input size F, hidden size H.

    w_gates_in:  (2H, F) input projection for the fused update/reset gates
    w_gates_rec: (2H, H) recurrent projection for the gates
    b_gates:     (2H,)
    w_cand_in:   (H, F) input projection for the candidate state
    w_cand_rec:  (H, H) recurrent projection applied to reset * h_prev
    b_cand:      (H,)
    """

    w_gates_in: np.ndarray
    w_gates_rec: np.ndarray
    b_gates: np.ndarray
    w_cand_in: np.ndarray
    w_cand_rec: np.ndarray
    b_cand: np.ndarray

    PARAM_NAMES = ("w_gates_in", "w_gates_rec", "b_gates",
                   "w_cand_in", "w_cand_rec", "b_cand")

    def __post_init__(self):
        h = self.hidden_size
        f = self.input_size
        expected = {
            "w_gates_in": (2 * h, f), "w_gates_rec": (2 * h, h), "b_gates": (2 * h,),
            "w_cand_in": (h, f), "w_cand_rec": (h, h), "b_cand": (h,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatchError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def hidden_size(self) -> int:
        return self.w_cand_rec.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_cand_in.shape[1]

    @classmethod
    def create(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "GruCell":
        """He-initialized input projections; each square recurrent block
        orthogonally initialized."""
        w_gates_rec = np.vstack([
            orthogonal_init(rng, (hidden_size, hidden_size)),
            orthogonal_init(rng, (hidden_size, hidden_size)),
        ])
        return cls(
            w_gates_in=he_init(rng, (2 * hidden_size, input_size)),
            w_gates_rec=w_gates_rec,
            b_gates=np.zeros(2 * hidden_size),
            w_cand_in=he_init(rng, (hidden_size, input_size)),
            w_cand_rec=orthogonal_init(rng, (hidden_size, hidden_size)),
            b_cand=np.zeros(hidden_size),
        )

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(getattr(self, name)) for name in self.PARAM_NAMES}


def gru_step(cell: GruCell, z_t: np.ndarray, h_prev: np.ndarray):
    """One recurrence step. Returns (h_t, cache)."""
    h = cell.hidden_size
    if z_t.shape != (cell.input_size,):
        raise ShapeMismatchError(
            f"input has shape {z_t.shape}, cell expects ({cell.input_size},)"
        )
    if h_prev.shape != (h,):
        raise ShapeMismatchError(
            f"state has shape {h_prev.shape}, cell expects ({h},)"
        )
    gates = sigmoid(cell.w_gates_in @ z_t + cell.w_gates_rec @ h_prev + cell.b_gates)
    update, reset = gates[:h], gates[h:]
    gated_prev = reset * h_prev
    cand = np.tanh(cell.w_cand_in @ z_t + cell.w_cand_rec @ gated_prev + cell.b_cand)
    h_t = (1.0 - update) * h_prev + update * cand
    cache = (z_t, h_prev, update, reset, gated_prev, cand)
    return h_t, cache


def gru_step_backward(cell: GruCell, cache, grad_h: np.ndarray,
                      grads: dict[str, np.ndarray]):
    """Backward for one step; accumulates into grads, returns (dz, dh_prev)."""
    z_t, h_prev, update, reset, gated_prev, cand = cache

    d_update = grad_h * (cand - h_prev)
    d_cand = grad_h * update
    dh_prev = grad_h * (1.0 - update)

    da_cand = d_cand * (1.0 - cand * cand)
    grads["w_cand_in"] += np.outer(da_cand, z_t)
    grads["w_cand_rec"] += np.outer(da_cand, gated_prev)
    grads["b_cand"] += da_cand
    d_gated = cell.w_cand_rec.T @ da_cand
    d_reset = d_gated * h_prev
    dh_prev = dh_prev + d_gated * reset
    dz = cell.w_cand_in.T @ da_cand

    da_gates = np.concatenate([
        d_update * update * (1.0 - update),
        d_reset * reset * (1.0 - reset),
    ])
    grads["w_gates_in"] += np.outer(da_gates, z_t)
    grads["w_gates_rec"] += np.outer(da_gates, h_prev)
    grads["b_gates"] += da_gates
    dz = dz + cell.w_gates_in.T @ da_gates
    dh_prev = dh_prev + cell.w_gates_rec.T @ da_gates
    return dz, dh_prev


def gru_sequence(cell: GruCell, z: np.ndarray, reverse: bool = False):
    """Run the cell over a (T, F) sequence from a zero initial state.

    When reverse is set, iterates z_T..z_1 and re-orders outputs so that
    output row t still aligns with input row t. Returns (outputs, cache).
    """
    if z.ndim != 2 or z.shape[0] < 1:
        raise ValueError(f"need a non-empty (T, F) sequence, got shape {z.shape}")
    t_len = z.shape[0]
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    h = np.zeros(cell.hidden_size)
    outputs = np.zeros((t_len, cell.hidden_size))
    caches = []
    for idx in order:
        h, cache = gru_step(cell, z[idx], h)
        outputs[idx] = h
        caches.append((idx, cache))
    return outputs, caches


def gru_sequence_backward(cell: GruCell, caches, grad_outputs: np.ndarray):
    """BPTT over a sequence run. grad_outputs rows align with input rows.

    Returns (grad_z, grads) where grads maps the six parameter blocks.
    """
    grads = cell.zero_grads()
    grad_z = np.zeros((grad_outputs.shape[0], cell.input_size))
    dh_carry = np.zeros(cell.hidden_size)
    for idx, cache in reversed(caches):
        dz, dh_carry = gru_step_backward(cell, cache, grad_outputs[idx] + dh_carry, grads)
        grad_z[idx] = dz
    return grad_z, grads


@dataclass
class BiGruLayer:
    forward_cell: GruCell
    backward_cell: GruCell

    def __post_init__(self):
        if (self.forward_cell.input_size != self.backward_cell.input_size
                or self.forward_cell.hidden_size != self.backward_cell.hidden_size):
            raise ShapeMismatchError("bidirectional cells must share input and hidden sizes")

    @property
    def hidden_size(self) -> int:
        return self.forward_cell.hidden_size

    @classmethod
    def create(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "BiGruLayer":
        return cls(GruCell.create(input_size, hidden_size, rng),
                   GruCell.create(input_size, hidden_size, rng))


def bigru(layer: BiGruLayer, z: np.ndarray):
    """Bidirectional pass over (T, F): per-timestep concatenation of the
    forward state and the time-realigned reverse state, shape (T, 2H)."""
    out_f, cache_f = gru_sequence(layer.forward_cell, z)
    out_b, cache_b = gru_sequence(layer.backward_cell, z, reverse=True)
    return np.hstack([out_f, out_b]), (cache_f, cache_b)


def bigru_backward(layer: BiGruLayer, cache, grad_out: np.ndarray):
    """Returns (grad_z, forward-cell grads, backward-cell grads)."""
    cache_f, cache_b = cache
    h = layer.hidden_size
    gz_f, grads_f = gru_sequence_backward(layer.forward_cell, cache_f, grad_out[:, :h])
    gz_b, grads_b = gru_sequence_backward(layer.backward_cell, cache_b, grad_out[:, h:])
    return gz_f + gz_b, grads_f, grads_b
