"""Traffic arrivals, backhaul capacities and the per-path latency model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LATENCY_SENTINEL = 1e6  # seconds; stands in for an unusable (zero-rate) path inside the optimizer


@dataclass(frozen=True)
class TrafficType:
    packet_bits: float
    arrival_pps: float  # packets per second
    budget_s: float
    backhaul_bps: tuple[tuple[float, float], ...]  # (low, high) per path m
    queue_mean: float | None = None  # packets per block; None -> one block of arrivals

    def __post_init__(self):
        if self.packet_bits <= 0:
            raise ValueError("packet size must be > 0")
        if self.arrival_pps < 0:
            raise ValueError("arrival rate must be >= 0")
        if self.budget_s <= 0:
            raise ValueError("latency budget must be > 0")
        for low, high in self.backhaul_bps:
            if not 0 < low <= high:
                raise ValueError(f"backhaul range ({low}, {high}) must satisfy 0 < low <= high")
        if self.queue_mean is not None and self.queue_mean < 0:
            raise ValueError("queue mean must be >= 0")

    def arrivals_per_block(self, block_s: float) -> float:
        return self.arrival_pps * block_s

    def queue_per_block(self, block_s: float) -> float:
        return self.arrivals_per_block(block_s) if self.queue_mean is None else self.queue_mean


@dataclass
class BlockTraffic:
    arrivals: np.ndarray  # (N, Q) packets
    queue: np.ndarray  # (N, Q) packets
    backhaul: np.ndarray  # (N, M, Q) bit/s
    packet_bits: np.ndarray  # (Q,)

    @property
    def load_bits(self) -> np.ndarray:
        """(N, Q) bits to deliver this block, (lambda + n) * M_q."""
        return (self.arrivals + self.queue) * self.packet_bits[None, :]


def sample_block_traffic(
    types: list[TrafficType] | tuple[TrafficType, ...],
    n_ue: int,
    block_s: float,
    rng: np.random.Generator,
    queue: np.ndarray | None = None,
) -> BlockTraffic:
    """Poisson arrivals and queue, uniform backhaul capacity per (n, m, q).

    Passing ``queue`` overrides the Poisson backlog draw (evolved-backlog mode).
    """
    Q = len(types)
    M = len(types[0].backhaul_bps)
    lam = np.array([t.arrivals_per_block(block_s) for t in types])
    nbar = np.array([t.queue_per_block(block_s) for t in types])
    arrivals = rng.poisson(lam, size=(n_ue, Q))
    drawn_queue = rng.poisson(nbar, size=(n_ue, Q))
    if queue is None:
        queue = drawn_queue
    low = np.array([[t.backhaul_bps[m][0] for t in types] for m in range(M)])
    high = np.array([[t.backhaul_bps[m][1] for t in types] for m in range(M)])
    backhaul = rng.uniform(low[None], high[None], size=(n_ue, M, Q))
    return BlockTraffic(
        arrivals=arrivals.astype(float),
        queue=np.asarray(queue, dtype=float),
        backhaul=backhaul,
        packet_bits=np.array([t.packet_bits for t in types], dtype=float),
    )


def _transfer_time(alpha, packets, packet_bits, rate):
    alpha, packets, rate = np.broadcast_arrays(*map(np.asarray, (alpha, packets, rate)))
    load = alpha * packets * packet_bits
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(load > 0, load / np.where(rate > 0, rate, 1.0), 0.0)
    out = np.where((load > 0) & ~(rate > 0), np.inf, out)
    return out[()] if out.ndim == 0 else out


def radio_latency(alpha, packets, packet_bits, rate):
    """Radio-link transfer time; ``inf`` when traffic is routed to a zero-rate path."""
    return _transfer_time(alpha, packets, packet_bits, rate)


def backhaul_latency(alpha, packets, packet_bits, capacity):
    """Backhaul transfer time; zero load costs nothing even on a dead link."""
    return _transfer_time(alpha, packets, packet_bits, capacity)


def path_latency(radio, backhaul):
    return np.asarray(radio) + np.asarray(backhaul)


def block_objective(u: np.ndarray) -> float:
    """Sum over (n, q) of the max over paths; ``u`` is (N, M, Q)."""
    return float(np.sum(np.max(u, axis=1)))


def per_path_latency(alpha: np.ndarray, rates: np.ndarray, traffic: BlockTraffic) -> np.ndarray:
    """u[n, m, q] for split ``alpha`` (N, M, Q) and link rates (N, M)."""
    packets = (traffic.arrivals + traffic.queue)[:, None, :]
    bits = traffic.packet_bits[None, None, :]
    radio = radio_latency(alpha, packets, bits, rates[:, :, None])
    return path_latency(radio, backhaul_latency(alpha, packets, bits, traffic.backhaul))
