"""Per-block alternating optimization of splits, powers, combiners and RIS phases.

Each outer iteration refreshes the MMSE combiners, runs SCA on the
(split, power) block with combiners and phases fixed, then updates the RIS
phases through a semidefinite relaxation with Gaussian randomization. Every
step is safeguarded on the true block objective, so the objective trace is
non-increasing.

Given link rates, the split that minimizes ``max_m alpha_m k_m`` is known in
closed form, so the splits are always re-derived from the current rates
and the objective with optimal splits is ``sum_{n,q} D_nq / sum_m e_nmq``
with ``e = R c / (R + c)`` the series throughput of radio and backhaul.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .numerics import SdpNotConverged, hermitian_part, sample_complex_gaussian, sdp_solve_diag1
from .phy import link_gains, mmse_combiners, sinr_from_gains
from .traffic import LATENCY_SENTINEL, BlockTraffic, block_objective, per_path_latency

LN2 = math.log(2.0)


class NoUsablePathError(ValueError):
    pass


@dataclass
class AoSettings:
    outer_cap: int = 8
    inner_cap: int = 20
    eps_ao: float = 1e-3
    eps_sca: float = 1e-3
    randomization_draws: int = 50
    sdp_method: str = "lowrank"
    sdp_tol: float = 1e-5
    sdp_max_iter: int = 2000
    pg_max_iter: int = 200
    pg_tol: float = 1e-6

    def __post_init__(self):
        if self.outer_cap < 1 or self.inner_cap < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.eps_ao <= 0 or self.eps_sca <= 0:
            raise ValueError("tolerances must be > 0")
        if self.randomization_draws < 0:
            raise ValueError("randomization_draws must be >= 0")


@dataclass
class BlockProblem:
    channels: ChannelSet
    traffic: BlockTraffic
    noise: float  # W, per BS resource
    bandwidth: float  # Hz, per BS resource
    p_tot: np.ndarray  # (N,) W
    budgets: np.ndarray  # (Q,) s

    @property
    def load(self) -> np.ndarray:
        return self.traffic.load_bits


@dataclass
class Policy:
    alpha: np.ndarray  # (N, M, Q)
    p: np.ndarray  # (N, M)
    W: np.ndarray  # (M, N, L)
    phi: np.ndarray  # (K,)

    def copy(self) -> "Policy":
        return Policy(self.alpha.copy(), self.p.copy(), self.W.copy(), self.phi.copy())


@dataclass
class AoTrace:
    objective: list[float] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)
    sdr_objective: list[float] = field(default_factory=list)
    sdp_failed: list[bool] = field(default_factory=list)
    phase_improved: list[bool] = field(default_factory=list)
    step_objectives: list[float] = field(default_factory=list)  # f after every individual update
    feasible: list[bool] = field(default_factory=list)  # feasibility after every individual update
    budget_violation: np.ndarray | None = None  # (N, Q) latency-budget flags at the returned policy

    def is_monotone(self, slack: float = 1e-9) -> bool:
        s = np.asarray(self.step_objectives)
        return bool(np.all(np.diff(s) <= slack))


# -- objective helpers --------------------------------------------------------


def series_throughput(rates: np.ndarray, backhaul: np.ndarray) -> np.ndarray:
    """e = R c / (R + c); ``rates`` (..., N, M), ``backhaul`` (N, M, Q) -> (..., N, M, Q)."""
    R = np.clip(rates, 0.0, None)[..., None]
    return R * backhaul / (R + backhaul)


def split_objective(rates: np.ndarray, traffic: BlockTraffic) -> np.ndarray:
    """Block objective with closed-form splits; broadcasts over leading axes of ``rates``."""
    E = series_throughput(rates, traffic.backhaul).sum(axis=-2)  # (..., N, Q)
    D = traffic.load_bits
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(D > 0, D / E, 0.0)
    return terms.sum(axis=(-2, -1))


def closed_form_split(costs: np.ndarray) -> np.ndarray:
    """Split minimizing ``max_m alpha_m k_m`` on the simplex, along the path axis.

    ``costs`` is (M,) or (N, M, Q). The optimum puts ``alpha_m`` proportional
    to ``1 / k_m``; paths with infinite cost get zero, zero-cost paths share
    the traffic evenly.
    """
    k = np.asarray(costs, dtype=float)
    squeeze = k.ndim == 1
    if squeeze:
        k = k[None, :, None]
    zero = k <= 0
    any_zero = zero.any(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        inv = np.where(zero, 0.0, 1.0 / k)
    total = inv.sum(axis=1, keepdims=True)
    if np.any((total <= 0) & ~any_zero):
        raise NoUsablePathError("no usable path: every path has infinite cost")
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = np.where(any_zero, zero / np.maximum(zero.sum(axis=1, keepdims=True), 1), inv / total)
    return alpha[0, :, 0] if squeeze else alpha


def path_costs(rates: np.ndarray, traffic: BlockTraffic) -> np.ndarray:
    """k[n, m, q] = D_nq (1/R_nm + 1/c_nmq), seconds per unit of split."""
    D = traffic.load_bits[:, None, :]
    with np.errstate(divide="ignore"):
        inv_r = np.where(rates > 0, 1.0 / np.where(rates > 0, rates, 1.0), np.inf)[:, :, None]
    with np.errstate(invalid="ignore"):
        k = D * (inv_r + 1.0 / traffic.backhaul)
    return np.where(D > 0, k, 0.0)


def optimal_split(rates: np.ndarray, traffic: BlockTraffic) -> np.ndarray:
    k = path_costs(rates, traffic)
    dead = np.all(~np.isfinite(k), axis=1, keepdims=True)
    if np.any(dead):
        # keep subproblems bounded: an all-dead (n, q) gets the finite sentinel cost
        k = np.where(dead & ~np.isfinite(k), LATENCY_SENTINEL, k)
    return closed_form_split(k)


def link_rates(problem: BlockProblem, W: np.ndarray, p: np.ndarray, phi: np.ndarray) -> np.ndarray:
    H = problem.channels.effective(phi)
    a = link_gains(W, H)
    noise_terms = problem.noise * np.sum(np.abs(W) ** 2, axis=-1)
    return problem.bandwidth * np.log2(1.0 + sinr_from_gains(a, p, noise_terms))


def evaluate(problem: BlockProblem, policy: Policy) -> tuple[np.ndarray, float]:
    """Per-path latencies u (N, M, Q) and block objective for a full policy."""
    R = link_rates(problem, policy.W, policy.p, policy.phi)
    u = per_path_latency(policy.alpha, R, problem.traffic)
    return u, block_objective(u)


def check_feasible(problem: BlockProblem, policy: Policy, tol: float = 1e-9) -> bool:
    """Splits on the simplex, powers summing to the budget, ||w|| <= 1, unit-modulus phases."""
    a, p = policy.alpha, policy.p
    ok = np.all(a >= -tol) and np.all(a <= 1 + tol)
    ok &= np.allclose(a.sum(axis=1), 1.0, atol=tol, rtol=0)
    ok &= np.all(p >= -tol) and np.all(p <= problem.p_tot[:, None] * (1 + tol))
    ok &= np.allclose(p.sum(axis=1), problem.p_tot, atol=tol * max(1.0, float(np.max(problem.p_tot))), rtol=0)
    ok &= np.all(np.sum(np.abs(policy.W) ** 2, axis=-1) <= 1 + tol)
    ok &= np.all(np.abs(np.abs(policy.phi) - 1.0) <= tol)
    return bool(ok)


def project_simplex(v: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean projection onto {x >= 0, sum x = total}."""
    v = np.atleast_2d(v)
    M = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - np.asarray(totals, dtype=float)[:, None]
    idx = np.arange(1, M + 1)
    cond = u - css / idx > 0
    r = M - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), r] / (r + 1)
    out = np.maximum(v - theta[:, None], 0.0)
    # exact totals: rescale the positive part
    s = out.sum(axis=1, keepdims=True)
    return np.where(s > 0, out * (np.asarray(totals)[:, None] / np.where(s > 0, s, 1.0)), out)


def initial_policy(problem: BlockProblem) -> Policy:
    N, M, L, K = problem.channels.shape
    Q = problem.traffic.load_bits.shape[1]
    p = np.repeat(problem.p_tot[:, None] / M, M, axis=1)
    phi = np.ones(K, dtype=complex)
    W = mmse_combiners(problem.channels.effective(phi), p, problem.noise)
    return Policy(np.full((N, M, Q), 1.0 / M), p, W, phi)


def update_combiners(problem: BlockProblem, phi: np.ndarray, p: np.ndarray) -> np.ndarray:
    return mmse_combiners(problem.channels.effective(phi), p, problem.noise)


# -- SCA on (alpha, p) --------------------------------------------------------


class _Surrogate:
    """Concave lower bound on the rates at fixed (W, phi), linearized at p0,
    composed into the split-optimal latency objective (convex in p)."""

    def __init__(self, problem: BlockProblem, W: np.ndarray, phi: np.ndarray, p0: np.ndarray):
        H = problem.channels.effective(phi)
        self.a = link_gains(W, H)  # (M, N, N)
        self.nt = problem.noise * np.sum(np.abs(W) ** 2, axis=-1)  # (M, N)
        self.B = problem.bandwidth
        self.D = problem.traffic.load_bits
        self.c = problem.traffic.backhaul
        self.own = np.einsum("mnn->mn", self.a)
        S0 = self._total(p0)
        self.I0 = S0 - self.own * p0.T  # (M, N)

    def _total(self, p):
        return np.einsum("mnj,mj->mn", self.a, p.T) + self.nt

    def rates(self, p):
        S = self._total(p)
        I = S - self.own * p.T
        r = self.B / LN2 * (np.log(S) - np.log(self.I0) - (I - self.I0) / self.I0)
        return r.T, S

    def value(self, p):
        r, _ = self.rates(p)
        E = series_throughput(r, self.c).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(self.D > 0, self.D / E, 0.0)
        if np.any((self.D > 0) & ~(E > 0)):
            return np.inf
        return float(t.sum())

    def gradient(self, p):
        r, S = self.rates(p)
        rc = np.clip(r, 0.0, None)
        e = rc[:, :, None] * self.c / (rc[:, :, None] + self.c)
        E = e.sum(axis=1)  # (N, Q)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(self.D > 0, self.D / E**2, 0.0)  # (N, Q)
        de = self.c**2 / (rc[:, :, None] + self.c) ** 2  # (N, M, Q)
        dF_dr = -np.einsum("nq,nmq->nm", w, de) * (r >= 0)  # (N, M)
        # dr_nm/dp_jm = B/ln2 * a_mnj * (1/S_nm - [j != n]/I0_nm)
        coef = self.B / LN2 * self.a * (1.0 / S)[:, :, None]  # (M, N, J)
        coef -= self.B / LN2 * self.a * (1.0 / self.I0)[:, :, None]
        idx = np.arange(self.a.shape[1])
        coef[:, idx, idx] += self.B / LN2 * self.own / self.I0
        return np.einsum("nm,mnj->jm", dF_dr, coef)


def _minimize_surrogate(sur: _Surrogate, p0: np.ndarray, totals: np.ndarray, max_iter: int, tol: float):
    p = p0.copy()
    F = sur.value(p)
    step = 1.0
    for _ in range(max_iter):
        g = sur.gradient(p)
        scale = totals / np.maximum(np.max(np.abs(g), axis=1), 1e-300)
        improved = False
        t = min(1.0, 4 * step)
        while t > 1e-10:
            cand = project_simplex(p - t * scale[:, None] * g, totals)
            Fc = sur.value(cand)
            if Fc <= F - 1e-4 * np.sum(g * (p - cand)) and Fc < F:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        rel = (F - Fc) / max(abs(F), 1e-300)
        p, F, step = cand, Fc, t
        if rel <= tol:
            break
    return p, F


def sca_step(problem: BlockProblem, W: np.ndarray, phi: np.ndarray, alpha: np.ndarray, p: np.ndarray,
             settings: AoSettings | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One SCA iteration on (alpha, p) with combiners and phases fixed."""
    settings = settings or AoSettings()
    sur = _Surrogate(problem, W, phi, p)
    p_new, _ = _minimize_surrogate(sur, p, problem.p_tot, settings.pg_max_iter, settings.pg_tol)
    R = link_rates(problem, W, p_new, phi)
    alpha_new = optimal_split(R, problem.traffic)
    return alpha_new, p_new


# -- SDR phase update ---------------------------------------------------------


def _quadratic_factors(problem: BlockProblem, W: np.ndarray) -> np.ndarray:
    """u[m, n, j] in C^{K+1} with |w_mn^H h_jm(phi)|^2 = |u^H (phi; 1)|^2."""
    ch = problem.channels
    casc = ch.cascade()  # (J, M, L, K)
    b = np.einsum("mnl,jmlk->mnjk", W.conj(), casc)
    c0 = np.einsum("mnl,jml->mnj", W.conj(), ch.direct)
    return np.concatenate([b, c0[..., None]], axis=-1).conj()


def sdr_weights(problem: BlockProblem, W: np.ndarray, alpha: np.ndarray, p: np.ndarray,
                phi: np.ndarray) -> np.ndarray:
    """Coefficients of the received-power quadratic forms, (M, N, J).

    First-order expansion of the split-optimal objective in the quadratic
    forms: desired-signal forms weigh ``omega_nm``, interference forms
    ``-omega_nm * gamma_nm``, with ``omega_nm = |df/dR_nm| * B / (ln2 (1 + gamma) I)``.
    The split enters through the rates (the objective is split-optimal), so
    ``alpha`` is accepted for interface symmetry.
    """
    H = problem.channels.effective(phi)
    a = link_gains(W, H)
    nt = problem.noise * np.sum(np.abs(W) ** 2, axis=-1)
    gamma = sinr_from_gains(a, p, nt)  # (N, M)
    R = problem.bandwidth * np.log2(1.0 + gamma)
    tr = problem.traffic
    e = series_throughput(R, tr.backhaul)
    E = e.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(tr.load_bits > 0, tr.load_bits / E**2, 0.0)
    Rc = np.clip(R, 0.0, None)[:, :, None]
    dfdR = np.einsum("nq,nmq->nm", w, tr.backhaul**2 / (Rc + tr.backhaul) ** 2)  # |df/dR|
    total = np.einsum("mnj,mj->mn", a, p.T) + nt
    interf = (total - np.einsum("mnn->mn", a) * p.T).T  # (N, M)
    omega = dfdR * problem.bandwidth / (LN2 * (1.0 + gamma) * interf)  # (N, M)
    coef = -(omega * gamma).T[:, :, None] * p.T[:, None, :]  # (M, N, J)
    idx = np.arange(p.shape[0])
    coef[:, idx, idx] = omega.T * p.T
    return coef


def sdr_build(problem: BlockProblem, W: np.ndarray, alpha: np.ndarray, p: np.ndarray,
              phi: np.ndarray | None = None) -> np.ndarray:
    """Homogenized (K+1)-dim cost matrix of the phase surrogate.

    ``v^H C v`` with ``v = (phi; 1)`` equals the weighted sum of received-power
    forms minus its phase-independent part. Weights are linearized at ``phi``
    (defaults to all-ones).
    """
    K = problem.channels.shape[3]
    phi = np.ones(K, dtype=complex) if phi is None else phi
    coef = sdr_weights(problem, W, alpha, p, phi).reshape(-1)
    U = _quadratic_factors(problem, W).reshape(-1, K + 1)
    C = (U.T * coef) @ U.conj()
    C[K, K] = 0.0
    return hermitian_part(C)


def phases_objective(problem: BlockProblem, W: np.ndarray, p: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Split-optimal objective for a batch of phase vectors ``phis`` (C, K)."""
    ch = problem.channels
    H = ch.direct[None] + np.einsum("nmlk,ck->cnml", ch.cascade(), phis)
    proj = np.einsum("mnl,cjml->cmnj", W.conj(), H)
    a = np.abs(proj) ** 2
    nt = problem.noise * np.sum(np.abs(W) ** 2, axis=-1)
    total = np.einsum("cmnj,mj->cmn", a, p.T) + nt
    own = np.einsum("cmnn->cmn", a) * p.T
    gamma = own / (total - own)
    R = problem.bandwidth * np.log2(1.0 + np.swapaxes(gamma, 1, 2))  # (C, N, M)
    return split_objective(R, problem.traffic)


def unit_modulus(v: np.ndarray) -> np.ndarray:
    ang = np.angle(v)
    return np.exp(1j * ang)


def phase_update(C: np.ndarray, settings: AoSettings, current_phi: np.ndarray, evaluate_f,
                 rng: np.random.Generator | None = None, warm_start=None):
    """Phase vector from the SDR of ``max v^H C v``; never worse than ``current_phi``.

    ``evaluate_f`` maps a (C, K) batch of unit-modulus vectors to objective
    values (lower is better). Returns ``(phi, info)`` where ``info`` holds the
    SDP objective, a failure flag and whether the phase changed.
    """
    K = current_phi.shape[0]
    info = {"sdr_objective": float("nan"), "sdp_failed": False, "improved": False, "factor": None}
    f_cur = float(np.asarray(evaluate_f(current_phi[None]))[0])
    if not np.any(C):
        return current_phi, info
    try:
        V, sdp = sdp_solve_diag1(
            C, method=settings.sdp_method, max_iter=settings.sdp_max_iter, tol=settings.sdp_tol,
            rng=rng, full_output=True,
        )
        info["sdr_objective"] = sdp.objective
    except SdpNotConverged:
        info["sdp_failed"] = True
        return current_phi, info
    rng = np.random.default_rng(0) if rng is None else rng
    w, vecs = np.linalg.eigh(V)
    cands = [vecs[:, -1]]
    if settings.randomization_draws:
        cands.extend(sample_complex_gaussian(np.zeros(K + 1), V, rng, size=settings.randomization_draws))
    cands = np.asarray(cands)
    last = cands[:, K:K + 1]
    cands = cands[:, :K] * np.where(np.abs(last) > 0, np.exp(-1j * np.angle(last)), 1.0)
    phis = unit_modulus(cands)
    vals = np.asarray(evaluate_f(phis))
    best = int(np.argmin(vals))
    if vals[best] < f_cur:
        info["improved"] = True
        return phis[best], info
    return current_phi, info


# -- alternating optimization ------------------------------------------------


def ao_solve(problem: BlockProblem, settings: AoSettings | None = None, init: Policy | None = None,
             use_ris: bool = True, rng: np.random.Generator | None = None) -> tuple[Policy, AoTrace]:
    settings = settings or AoSettings()
    rng = np.random.default_rng(0) if rng is None else rng
    pol = initial_policy(problem) if init is None else init.copy()
    if not use_ris:
        pol.phi = np.ones_like(pol.phi)
    trace = AoTrace()

    def record(policy, f):
        trace.step_objectives.append(f)
        trace.feasible.append(check_feasible(problem, policy))

    _, f = evaluate(problem, pol)
    trace.objective.append(f)
    record(pol, f)

    for _ in range(settings.outer_cap):
        f_prev = trace.objective[-1]

        W = update_combiners(problem, pol.phi, pol.p)
        cand = Policy(pol.alpha, pol.p, W, pol.phi)
        _, fc = evaluate(problem, cand)
        if fc <= f:
            pol, f = cand, fc
        record(pol, f)

        inner = 0
        for _ in range(settings.inner_cap):
            inner += 1
            alpha_new, p_new = sca_step(problem, pol.W, pol.phi, pol.alpha, pol.p, settings)
            cand = Policy(alpha_new, p_new, pol.W, pol.phi)
            _, fc = evaluate(problem, cand)
            if fc > f:
                break
            num = np.linalg.norm(alpha_new - pol.alpha) + np.linalg.norm(p_new - pol.p)
            den = max(1.0, np.linalg.norm(pol.alpha) + np.linalg.norm(pol.p))
            pol, f = cand, fc
            record(pol, f)
            if num / den <= settings.eps_sca:
                break
        trace.inner_iterations.append(inner)

        if use_ris:
            C = sdr_build(problem, pol.W, pol.alpha, pol.p, pol.phi)
            phi, info = phase_update(
                C, settings, pol.phi, lambda phis: phases_objective(problem, pol.W, pol.p, phis), rng=rng
            )
            trace.sdr_objective.append(info["sdr_objective"])
            trace.sdp_failed.append(info["sdp_failed"])
            trace.phase_improved.append(info["improved"])
            if info["improved"]:
                R = link_rates(problem, pol.W, pol.p, phi)
                cand = Policy(optimal_split(R, problem.traffic), pol.p, pol.W, phi)
                _, fc = evaluate(problem, cand)
                if fc <= f:
                    pol, f = cand, fc
                record(pol, f)

        trace.objective.append(f)
        if abs(f - f_prev) / max(1.0, abs(f_prev)) <= settings.eps_ao:
            break

    u, _ = evaluate(problem, pol)
    trace.budget_violation = np.max(u, axis=1) > problem.budgets[None, :]
    return pol, trace
