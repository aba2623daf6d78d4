"""Graph layers: attention convolution and the Chebyshev-filtered GRU.

The attention layer follows the additive-scoring scheme: per head,
score(i,j) = LeakyReLU(a . [W h_i || W h_j || e_ij]) with the attention
vector split into its destination, source, and edge slices; alpha is a
softmax over each destination's in-neighborhood including a self-loop with
edge attribute 0. Heads are combined by elementwise mean, then ELU.

The recurrence is a GRU whose dense maps are replaced with order-K Chebyshev
filters on the scaled symmetric-normalized Laplacian of the day's graph,
with edge weight 1/(1 + distance_km).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, ValidationError
from .autodiff import (
    Tensor,
    elu,
    exp,
    gather_rows,
    leaky_relu,
    segment_sum,
    sigmoid,
    tanh,
)

LEAKY_SLOPE = 0.2


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...], name: str) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True, name=name)


def zeros_param(shape: tuple[int, ...], name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


@dataclass(frozen=True, slots=True)
class GatHead:
    weight: Tensor      # (in_dim, head_dim)
    att_dst: Tensor     # (head_dim, 1): slice of the attention vector for W h_i
    att_src: Tensor     # (head_dim, 1): slice for W h_j
    att_edge: Tensor    # (1, 1): slice for e_ij


@dataclass(frozen=True, slots=True)
class GatParams:
    heads: tuple[GatHead, ...]


@dataclass(frozen=True, slots=True)
class GruGate:
    theta_x: tuple[Tensor, ...]  # K matrices (in_dim, out_dim) for the input
    theta_h: tuple[Tensor, ...]  # K matrices (hidden, out_dim) for the state
    bias: Tensor                 # (1, out_dim)


@dataclass(frozen=True, slots=True)
class GruParams:
    update: GruGate
    reset: GruGate
    candidate: GruGate


def init_gat(rng: np.random.Generator, in_dim: int, head_dim: int, heads: int,
             name: str) -> GatParams:
    out = []
    for h in range(heads):
        weight = glorot_uniform(rng, in_dim, head_dim, (in_dim, head_dim),
                                f"{name}.head{h}.weight")
        # One (2*head_dim+1)-long attention vector drawn as a unit, then
        # split, so the init does not depend on the storage layout.
        att = rng.uniform(
            -np.sqrt(6.0 / (2 * head_dim + 1 + 1)),
            np.sqrt(6.0 / (2 * head_dim + 1 + 1)),
            size=(2 * head_dim + 1, 1),
        )
        out.append(
            GatHead(
                weight=weight,
                att_dst=Tensor(att[:head_dim], requires_grad=True,
                               name=f"{name}.head{h}.att_dst"),
                att_src=Tensor(att[head_dim:2 * head_dim], requires_grad=True,
                               name=f"{name}.head{h}.att_src"),
                att_edge=Tensor(att[2 * head_dim:], requires_grad=True,
                                name=f"{name}.head{h}.att_edge"),
            )
        )
    return GatParams(heads=tuple(out))


def init_gru(rng: np.random.Generator, in_dim: int, hidden: int, k: int,
             name: str) -> GruParams:
    def gate(tag: str) -> GruGate:
        return GruGate(
            theta_x=tuple(
                glorot_uniform(rng, in_dim, hidden, (in_dim, hidden),
                               f"{name}.{tag}.theta_x{i}")
                for i in range(k)
            ),
            theta_h=tuple(
                glorot_uniform(rng, hidden, hidden, (hidden, hidden),
                               f"{name}.{tag}.theta_h{i}")
                for i in range(k)
            ),
            bias=zeros_param((1, hidden), f"{name}.{tag}.bias"),
        )

    return GruParams(update=gate("update"), reset=gate("reset"), candidate=gate("candidate"))


@dataclass(frozen=True, slots=True)
class DirectedEdges:
    """Snapshot edges expanded to both directions plus per-node self-loops."""

    src: np.ndarray    # (E,) int
    dst: np.ndarray    # (E,) int
    attr: np.ndarray   # (E, 1) float, self-loop attr 0
    n_nodes: int


def expand_edges(edges, n_nodes: int, offset: int = 0) -> DirectedEdges:
    """Turn undirected (i, j, distance) edges into the directed form."""
    src, dst, attr = [], [], []
    for i, j, d in edges:
        src += [i + offset, j + offset]
        dst += [j + offset, i + offset]
        attr += [d, d]
    for i in range(n_nodes):
        src.append(i + offset)
        dst.append(i + offset)
        attr.append(0.0)
    return DirectedEdges(
        src=np.array(src, dtype=np.int64),
        dst=np.array(dst, dtype=np.int64),
        attr=np.array(attr, dtype=np.float64).reshape(-1, 1),
        n_nodes=n_nodes,
    )


def merge_edges(parts: list[DirectedEdges]) -> DirectedEdges:
    return DirectedEdges(
        src=np.concatenate([p.src for p in parts]),
        dst=np.concatenate([p.dst for p in parts]),
        attr=np.concatenate([p.attr for p in parts]),
        n_nodes=sum(p.n_nodes for p in parts),
    )


def _segment_softmax(scores: Tensor, dst: np.ndarray, n: int) -> Tensor:
    """Softmax of scores grouped by destination node (max-shifted, stable)."""
    shift = np.full((n, 1), -np.inf)
    np.maximum.at(shift, dst, scores.data)
    shift[~np.isfinite(shift)] = 0.0  # nodes with no incoming score
    shifted = exp(scores - shift[dst])  # the shift is a constant, not a graph node
    denom = segment_sum(shifted, dst, n)
    return shifted / gather_rows(denom, dst)


def gat_forward(
    x: Tensor,
    edges: DirectedEdges,
    params: GatParams,
    use_attention: bool = True,
) -> Tensor:
    """Attention graph convolution; with use_attention=False alpha is uniform."""
    n = edges.n_nodes
    if x.shape[0] != n:
        raise ValidationError(f"feature rows {x.shape[0]} != node count {n}")
    head_outputs = []
    for head in params.heads:
        h = x @ head.weight  # (n, head_dim)
        h_src = gather_rows(h, edges.src)
        if use_attention:
            s_dst = h @ head.att_dst  # (n, 1)
            s_src = h @ head.att_src
            score = leaky_relu(
                gather_rows(s_dst, edges.dst)
                + gather_rows(s_src, edges.src)
                + Tensor(edges.attr) @ head.att_edge,
                LEAKY_SLOPE,
            )
            alpha = _segment_softmax(score, edges.dst, n)
        else:
            degree = np.bincount(edges.dst, minlength=n).astype(np.float64)
            alpha = Tensor((1.0 / degree[edges.dst]).reshape(-1, 1))
        head_outputs.append(segment_sum(alpha * h_src, edges.dst, n))
    total = head_outputs[0]
    for extra in head_outputs[1:]:
        total = total + extra
    mean = total * (1.0 / len(params.heads))
    out = elu(mean)
    if not np.all(np.isfinite(out.data)):
        raise NumericError("attention convolution produced non-finite values")
    return out


def scaled_laplacian(edges: DirectedEdges) -> np.ndarray:
    """-D^{-1/2} A D^{-1/2} with A built from weights 1/(1+distance_km).

    This is the order-2-limit rescaled Laplacian (2L/lambda_max - I with
    lambda_max pinned at 2). Self-loops are excluded from A; isolated nodes
    get all-zero rows.
    """
    n = edges.n_nodes
    a = np.zeros((n, n))
    for s, d, w in zip(edges.src, edges.dst, edges.attr[:, 0]):
        if s == d:
            continue
        a[d, s] = 1.0 / (1.0 + w)
    deg = a.sum(axis=1)
    with np.errstate(divide="ignore"):
        inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    return -(inv_sqrt[:, None] * a * inv_sqrt[None, :])


def _cheb_filter(x: Tensor, lap: np.ndarray, thetas: tuple[Tensor, ...]) -> Tensor:
    """Sum_k T_k(lap) x theta_k with T_0=I, T_1=lap, T_k=2 lap T_{k-1}-T_{k-2}."""
    lap_t = Tensor(lap)
    t_prev: Tensor | None = None
    t_cur = x
    out = t_cur @ thetas[0]
    for k in range(1, len(thetas)):
        if k == 1:
            t_next = lap_t @ t_cur
        else:
            t_next = (lap_t @ t_cur) * 2.0 - t_prev
        out = out + t_next @ thetas[k]
        t_prev, t_cur = t_cur, t_next
    return out


def gru_gates(
    x: Tensor,
    h_prev: Tensor,
    lap: np.ndarray,
    params: GruParams,
) -> tuple[Tensor, Tensor, Tensor]:
    """Update gate z, reset gate r, candidate c for one recurrence step."""
    z = sigmoid(
        _cheb_filter(x, lap, params.update.theta_x)
        + _cheb_filter(h_prev, lap, params.update.theta_h)
        + params.update.bias
    )
    r = sigmoid(
        _cheb_filter(x, lap, params.reset.theta_x)
        + _cheb_filter(h_prev, lap, params.reset.theta_h)
        + params.reset.bias
    )
    c = tanh(
        _cheb_filter(x, lap, params.candidate.theta_x)
        + _cheb_filter(r * h_prev, lap, params.candidate.theta_h)
        + params.candidate.bias
    )
    return z, r, c


def gconv_gru_step(
    x: Tensor,
    h_prev: Tensor,
    lap: np.ndarray,
    params: GruParams,
) -> Tensor:
    """One recurrence step: z/r gates, candidate, convex mix with h_prev."""
    z, _, c = gru_gates(x, h_prev, lap, params)
    return z * h_prev + (1.0 - z) * c
