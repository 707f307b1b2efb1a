"""Monte-Carlo block loop: mobility, per-block channel/traffic draws, the four
schemes (MP with RIS, MP without RIS, path selection, single path) and
aggregation into records, CDFs and averages."""
from __future__ import annotations

import logging
import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from .channel import draw_channels, link_statistics
from .config import SCHEMES, ScenarioConfig, validate
from .optimizer import (
    AoSettings,
    AoTrace,
    BlockProblem,
    Policy,
    ao_solve,
    check_feasible,
    evaluate,
)
from .phy import dbm_to_watt, mmse_combiners, noise_power
from .traffic import BlockTraffic, sample_block_traffic

log = logging.getLogger(__name__)



class SimulationError(RuntimeError):
    """A module error raised while simulating one block, with its context."""

    def __init__(self, message: str, block: int, scheme: str | None = None):
        super().__init__(message)
        self.block = block
        self.scheme = scheme


@dataclass
class LatencyRecord:
    block: int
    scheme: str
    ue: int
    traffic: int
    latency: float  # max over paths, s
    per_path: tuple[float, ...]  # u_{n,m,q}, s
    objective: float  # block objective of the scheme, s
    violation: bool


@dataclass
class BlockResult:
    block: int
    records: list[LatencyRecord]
    objectives: dict[str, float]
    traces: dict[str, AoTrace] = field(default_factory=dict)
    feasible: dict[str, bool] = field(default_factory=dict)


@dataclass
class SummaryTable:
    schemes: tuple[str, ...]
    n_ue: int
    n_traffic: int
    blocks: int
    per_traffic: dict[tuple[str, int], float]  # ms
    per_ue: dict[tuple[str, int, int], float]  # ms
    u_bar: dict[str, float]  # s
    violations: dict[str, int]
    nonfinite_blocks: dict[str, int]


# -- mobility -----------------------------------------------------------------


def area_bounds(config: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    centre = np.mean(np.asarray(config.bs.positions)[:, :2], axis=0)
    half = config.sim.area / 2.0
    return centre - half, centre + half


def advance_mobility(positions, headings, speed, dt, bounds):
    """Move each UE ``speed * dt`` along its heading, reflecting at the boundary.

    Returns ``(positions, headings)``; headings flip on reflection.
    """
    lo, hi = bounds
    pos = np.array(positions, dtype=float)
    step = speed * dt * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    xy = pos[:, :2] + step
    vel = step.copy()
    for axis in range(2):
        below = xy[:, axis] < lo[axis]
        xy[below, axis] = 2 * lo[axis] - xy[below, axis]
        above = xy[:, axis] > hi[axis]
        xy[above, axis] = 2 * hi[axis] - xy[above, axis]
        vel[below | above, axis] *= -1
    pos[:, :2] = xy
    return pos, np.arctan2(vel[:, 1], vel[:, 0]) if speed * dt > 0 else np.asarray(headings, dtype=float)


def ue_trajectory(config: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Positions (T, N, 3) and direct-link shadowing in dB (T, N, M) for every block."""
    T, N, M = config.sim.blocks, config.n_ue, config.n_bs
    rng = np.random.default_rng(np.random.SeedSequence([config.sim.seed, 0]))
    bounds = area_bounds(config)
    pos = np.array(config.ue.positions, dtype=float)
    headings = rng.uniform(-np.pi, np.pi, N)
    sigma = config.channel.shadowing_db
    shadow = sigma * rng.standard_normal((N, M))
    anchor = pos[:, :2].copy()
    positions = np.empty((T, N, 3))
    shadows = np.empty((T, N, M))
    for t in range(T):
        if t > 0:
            if t % config.sim.heading_blocks == 0:
                headings = rng.uniform(-np.pi, np.pi, N)
            pos, headings = advance_mobility(pos, headings, config.sim.ue_speed, config.block_s, bounds)
            moved = np.linalg.norm(pos[:, :2] - anchor, axis=1) > config.channel.decorrelation_m
            if np.any(moved):
                shadow[moved] = sigma * rng.standard_normal((int(moved.sum()), M))
                anchor[moved] = pos[moved, :2]
        positions[t] = pos
        shadows[t] = shadow
    return positions, shadows


def home_paths(config: ScenarioConfig) -> np.ndarray:
    ue = np.asarray(config.ue.positions)
    bs = np.asarray(config.bs.positions)
    return np.argmin(np.linalg.norm(ue[:, None, :] - bs[None], axis=-1), axis=1)


# -- baselines ----------------------------------------------------------------


def single_path_policy(problem: BlockProblem, choice: np.ndarray) -> Policy:
    N, M, L, K = problem.channels.shape
    Q = problem.traffic.load_bits.shape[1]
    alpha = np.zeros((N, M, Q))
    p = np.zeros((N, M))
    alpha[np.arange(N), choice, :] = 1.0
    p[np.arange(N), choice] = problem.p_tot
    phi = np.ones(K, dtype=complex)
    W = mmse_combiners(problem.channels.effective(phi), p, problem.noise)
    return Policy(alpha, p, W, phi)


def baseline_sp(problem: BlockProblem, home: np.ndarray) -> Policy:
    return single_path_policy(problem, np.asarray(home))


def baseline_ps(problem: BlockProblem, home: np.ndarray, max_passes: int | None = None) -> Policy:
    """Per-UE path selection by best response, starting from the home paths.

    Each UE moves all traffic and power to the path that minimizes its own
    latency given the other UEs' current choices (ties: lowest index). The
    result is kept only if it does not raise the block objective above SP.
    """
    N, M = problem.channels.shape[:2]
    choice = np.asarray(home).copy()
    sp_policy = single_path_policy(problem, choice)
    _, f_sp = evaluate(problem, sp_policy)
    max_passes = N if max_passes is None else max_passes
    for _ in range(max_passes):
        changed = False
        for n in range(N):
            costs = np.empty(M)
            for m in range(M):
                trial = choice.copy()
                trial[n] = m
                u, _ = evaluate(problem, single_path_policy(problem, trial))
                costs[m] = np.sum(np.max(u[n], axis=0))
            best = int(np.argmin(costs))
            if costs[best] < costs[choice[n]] and best != choice[n]:
                choice[n] = best
                changed = True
        if not changed:
            break
    policy = single_path_policy(problem, choice)
    _, f_ps = evaluate(problem, policy)
    return policy if f_ps <= f_sp else sp_policy


def baseline_mp(problem: BlockProblem, settings: AoSettings, init: Policy | None = None,
                rng: np.random.Generator | None = None) -> tuple[Policy, AoTrace]:
    """Multi-path optimization with the cascade removed and phases fixed."""
    plain = BlockProblem(problem.channels.without_ris(), problem.traffic, problem.noise, problem.bandwidth,
                         problem.p_tot, problem.budgets)
    return ao_solve(plain, settings, init=init, use_ris=False, rng=rng)


# -- per-block simulation ------------------------------------------------------


@dataclass
class _Context:
    config: ScenarioConfig
    positions: np.ndarray
    shadows: np.ndarray
    home: np.ndarray


def block_rng(seed: int, block: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1, block, stream]))


def build_problem(config: ScenarioConfig, positions: np.ndarray, shadow_db: np.ndarray, block: int,
                  queue: np.ndarray | None = None) -> BlockProblem:
    geometry = config.geometry(positions)
    params = config.large_scale()
    stats = link_statistics(geometry, params, shadow_db)
    channels = draw_channels(geometry, stats, params, block_rng(config.sim.seed, block, 0))
    traffic = sample_block_traffic(config.traffic_types(), config.n_ue, config.block_s,
                                   block_rng(config.sim.seed, block, 1), queue=queue)
    B = config.bandwidth_per_bs
    return BlockProblem(
        channels=channels,
        traffic=traffic,
        noise=noise_power(config.radio.noise_psd_dbm_hz, B, config.radio.noise_figure_db),
        bandwidth=B,
        p_tot=np.full(config.n_ue, dbm_to_watt(config.radio.ptot_dbm)),
        budgets=np.array([t.budget_s for t in config.traffic]),
    )


def _with_traffic(problem: BlockProblem, traffic: BlockTraffic) -> BlockProblem:
    return BlockProblem(problem.channels, traffic, problem.noise, problem.bandwidth, problem.p_tot, problem.budgets)


def solve_schemes(problem: BlockProblem, config: ScenarioConfig, home: np.ndarray, block: int,
                  problems: dict[str, BlockProblem] | None = None) -> dict[str, tuple[Policy, AoTrace | None, BlockProblem]]:
    """Policies for every requested scheme on one block.

    MP and MP+RIS start from the PS point; SP, PS and MP see the channels
    without the RIS cascade.
    """
    settings = config.opt.to_ao()
    schemes = config.sim.schemes
    problems = problems or {}

    def prob(s, ris):
        base = problems.get(s, problem)
        if ris:
            return base
        return BlockProblem(base.channels.without_ris(), base.traffic, base.noise, base.bandwidth,
                            base.p_tot, base.budgets)

    out = {}
    stage = "sp"
    try:
        if "sp" in schemes:
            pr = prob("sp", False)
            out["sp"] = (baseline_sp(pr, home), None, pr)
        if any(s in schemes for s in ("ps", "mp", "mp_ris")):
            stage = "ps"
            pr_ps = prob("ps", False)
            ps_policy = baseline_ps(pr_ps, home)
            if "ps" in schemes:
                out["ps"] = (ps_policy, None, pr_ps)
        for stage, ris, stream in (("mp", False, 2), ("mp_ris", True, 3)):
            if stage in schemes:
                pr = prob(stage, ris)
                pol, tr = ao_solve(pr, settings, init=ps_policy, use_ris=ris,
                                   rng=block_rng(config.sim.seed, block, stream))
                out[stage] = (pol, tr, pr)
    except Exception as exc:
        raise SimulationError(f"block {block}, scheme {stage}: {type(exc).__name__}: {exc}", block, stage) from exc
    return out


def _records_for(block: int, scheme: str, problem: BlockProblem, policy: Policy) -> tuple[list[LatencyRecord], float]:
    u, f = evaluate(problem, policy)
    N, M, Q = u.shape
    recs = []
    for n in range(N):
        for q in range(Q):
            lat = float(np.max(u[n, :, q]))
            recs.append(LatencyRecord(
                block=block, scheme=scheme, ue=n + 1, traffic=q + 1, latency=lat,
                per_path=tuple(float(x) for x in u[n, :, q]), objective=f,
                violation=bool(lat > problem.budgets[q]),
            ))
    return recs, f


def simulate_block(ctx: _Context, block: int, queues: dict[str, np.ndarray] | None = None) -> BlockResult:
    try:
        return _simulate_block(ctx, block, queues)
    except SimulationError:
        raise
    except Exception as exc:
        raise SimulationError(f"block {block}: {type(exc).__name__}: {exc}", block) from exc


def _simulate_block(ctx: _Context, block: int, queues: dict[str, np.ndarray] | None) -> BlockResult:
    config = ctx.config
    problem = build_problem(config, ctx.positions[block], ctx.shadows[block], block)
    problems = None
    if queues is not None:
        problems = {}
        for s in ("sp", "ps", "mp", "mp_ris"):
            tr = problem.traffic
            traffic = BlockTraffic(tr.arrivals, queues[s], tr.backhaul, tr.packet_bits)
            problems[s] = _with_traffic(problem, traffic)
    solved = solve_schemes(problem, config, ctx.home, block, problems)
    records, objectives, traces, feasible = [], {}, {}, {}
    for scheme in (s for s in SCHEMES if s in config.sim.schemes):
        policy, trace, pr = solved[scheme]
        recs, f = _records_for(block, scheme, pr, policy)
        records.extend(recs)
        objectives[scheme] = f
        feasible[scheme] = check_feasible(pr, policy)
        if trace is not None:
            traces[scheme] = trace
    return BlockResult(block, records, objectives, traces, feasible)


_WORKER_CTX: _Context | None = None


def _init_worker(ctx: _Context):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _run_one(block: int) -> BlockResult:
    return simulate_block(_WORKER_CTX, block)


def _carry_backlog(config: ScenarioConfig, result: BlockResult, queues: dict[str, np.ndarray],
                   arrivals: np.ndarray) -> dict[str, np.ndarray]:
    """Packets not delivered within the block stay queued for the next one."""
    out = {}
    t_block = config.block_s
    for s, q in queues.items():
        lat = np.zeros_like(q)
        for r in result.records:
            if r.scheme == s:
                lat[r.ue - 1, r.traffic - 1] = r.latency
        total = arrivals + q
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(lat > t_block, 1.0 - t_block / lat, 0.0)
        out[s] = np.floor(total * frac)
    return out


def iter_blocks(config: ScenarioConfig, workers: int | None = None, keep_traces: bool = True):
    """Yield ``BlockResult`` in block order."""
    validate(config)
    positions, shadows = ue_trajectory(config)
    ctx = _Context(config, positions, shadows, home_paths(config))
    workers = config.sim.workers if workers is None else workers
    if config.sim.evolved_backlog:
        queues = None
        for t in range(config.sim.blocks):
            if queues is None:
                first = build_problem(config, positions[0], shadows[0], 0).traffic.queue
                queues = {s: first.copy() for s in ("sp", "ps", "mp", "mp_ris")}
            result = simulate_block(ctx, t, queues)
            arrivals = build_problem(config, positions[t], shadows[t], t).traffic.arrivals
            queues = _carry_backlog(config, result, queues, arrivals)
            yield _strip(result, keep_traces)
        return
    if workers <= 1:
        for t in range(config.sim.blocks):
            yield _strip(simulate_block(ctx, t), keep_traces)
        return
    with mp.get_context("fork").Pool(workers, initializer=_init_worker, initargs=(ctx,)) as pool:
        for result in pool.imap(_run_one, range(config.sim.blocks), chunksize=8):
            yield _strip(result, keep_traces)


def _strip(result: BlockResult, keep_traces: bool) -> BlockResult:
    if not keep_traces:
        result.traces = {}
    return result


def summarize(records: list[LatencyRecord], config: ScenarioConfig) -> SummaryTable:
    schemes = tuple(s for s in SCHEMES if s in config.sim.schemes)
    N, Q = config.n_ue, len(config.traffic)
    T = config.sim.blocks
    lat = {s: np.zeros((T, N, Q)) for s in schemes}
    obj = {s: np.zeros(T) for s in schemes}
    viol = {s: 0 for s in schemes}
    for r in records:
        lat[r.scheme][r.block, r.ue - 1, r.traffic - 1] = r.latency
        obj[r.scheme][r.block] = r.objective
        viol[r.scheme] += int(r.violation)
    per_traffic, per_ue, u_bar, nonfinite = {}, {}, {}, {}
    for s in schemes:
        finite = np.all(np.isfinite(lat[s]), axis=(1, 2))
        nonfinite[s] = int(np.sum(~finite))
        for q in range(Q):
            per_traffic[(s, q + 1)] = float(np.mean(lat[s][:, :, q])) * 1e3
            for n in range(N):
                per_ue[(s, n + 1, q + 1)] = float(np.mean(lat[s][:, n, q])) * 1e3
        u_bar[s] = float(np.sum(obj[s]) / (N * T))
    return SummaryTable(schemes, N, Q, T, per_traffic, per_ue, u_bar, viol, nonfinite)


def run_scenario(config: ScenarioConfig, workers: int | None = None, keep_traces: bool = False,
                 on_block=None) -> tuple[list[LatencyRecord], SummaryTable, list[BlockResult]]:
    """Run every block; returns records, the summary and the per-block results."""
    results = []
    records = []
    for res in iter_blocks(config, workers=workers, keep_traces=keep_traces):
        records.extend(res.records)
        results.append(res)
        if on_block is not None:
            on_block(res)
    return records, summarize(records, config), results


def export_cdf(records, scheme: str, ue: int, traffic: int) -> list[tuple[float, float]]:
    """Empirical CDF points (latency, P[X <= latency]) for one (scheme, ue, traffic)."""
    vals = sorted(r.latency for r in records if r.scheme == scheme and r.ue == ue and r.traffic == traffic)
    if not vals:
        raise LookupError(f"no matching records for scheme={scheme} ue={ue} traffic={traffic}")
    n = len(vals)
    out = []
    for i, v in enumerate(vals, start=1):
        if out and out[-1][0] == v:
            out[-1] = (v, i / n)
        else:
            out.append((v, i / n))
    return out
