"""Dense complex linear algebra and a unit-diagonal SDP solver.

Problem sizes here are small (at most 16 receive antennas, at most 257 RIS
dimensions after homogenization), so everything is stored dense.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


class SdpNotConverged(RuntimeError):
    """Raised when the SDP iteration cap is hit; ``best`` holds the best iterate."""

    def __init__(self, message: str, best: np.ndarray, info: "SdpInfo"):
        super().__init__(message)
        self.best = best
        self.info = info


@dataclass
class SdpInfo:
    objective: float  # tr(C V) at the returned V
    upper_bound: float  # dual bound on the optimum
    iterations: int
    primal_residual: float
    method: str

    @property
    def gap(self) -> float:
        return self.upper_bound - self.objective


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def hermitian_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for Hermitian positive-definite ``A`` via Cholesky."""
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("singular covariance: matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def top_eigenpair(A: np.ndarray) -> tuple[float, np.ndarray]:
    w, v = np.linalg.eigh(hermitian_part(A))
    return float(w[-1]), v[:, -1]


def psd_projection(A: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped)."""
    w, v = np.linalg.eigh(hermitian_part(A))
    w = np.clip(w, 0.0, None)
    return hermitian_part((v * w) @ v.conj().T)


def _dual_bound(C: np.ndarray, y: np.ndarray) -> float:
    # diag(y) - C + s*I >= 0 with s = max(0, -lambda_min) makes y + s dual feasible
    lam_min = np.linalg.eigvalsh(np.diag(y) - C)[0]
    return float(np.sum(y) + len(y) * max(0.0, -lam_min))


def _unit_diagonal(V: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.clip(np.real(np.diag(V)), 1e-300, None))
    out = V / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return hermitian_part(out)


def _sdp_admm(C, max_iter, tol, warm_start, relax=1.6):
    D = C.shape[0]
    Z = np.eye(D, dtype=complex) if warm_start is None else warm_start.astype(complex)
    u = np.zeros(D)  # scaled dual; stays diagonal because the Z-step fixes only the diagonal
    rho = 1.0
    best = (-np.inf, Z, np.inf)
    V = Z
    r_prim = np.inf
    for it in range(1, max_iter + 1):
        V = psd_projection(Z - np.diag(u) + C / rho)
        Vh = relax * V + (1.0 - relax) * Z
        Z_old = Z
        Z = Vh + np.diag(u)
        dZ = np.real(np.diag(Z)) - 1.0
        np.fill_diagonal(Z, 1.0)
        u = dZ
        r_prim = np.linalg.norm(V - Z) / max(1.0, np.linalg.norm(V))
        r_dual = rho * np.linalg.norm(Z - Z_old) / max(1.0, np.linalg.norm(C))
        if it % 10 == 0 or it == max_iter:
            Vu = _unit_diagonal(V)
            obj = float(np.real(np.vdot(C, Vu)))
            bound = _dual_bound(C, rho * u)
            if obj > best[0]:
                best = (obj, Vu, bound)
            gap = bound - obj
            if r_prim <= tol and gap <= tol * max(1.0, abs(bound)):
                return Vu, SdpInfo(obj, bound, it, r_prim, "admm")
        if r_prim > 10 * r_dual:
            rho *= 2.0
            u /= 2.0
        elif r_dual > 10 * r_prim:
            rho /= 2.0
            u *= 2.0
    obj, Vu, bound = best
    raise SdpNotConverged("sdp did not converge", Vu, SdpInfo(obj, bound, max_iter, r_prim, "admm"))


def _sdp_lowrank(C, max_iter, tol, warm_start, rng):
    """Factorized V = Y Y^H with unit-norm rows, block-coordinate ascent."""
    D = C.shape[0]
    r = min(D, int(np.ceil(np.sqrt(2 * D))) + 1)
    if warm_start is not None and warm_start.shape == (D, r):
        Y = warm_start.astype(complex)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        Y = rng.standard_normal((D, r)) + 1j * rng.standard_normal((D, r))
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    Coff = C.copy()
    np.fill_diagonal(Coff, 0.0)
    obj_prev = -np.inf
    best = None
    for it in range(1, max_iter + 1):
        for k in range(D):
            g = Coff[k] @ Y
            nrm = np.linalg.norm(g)
            if nrm > 0:
                Y[k] = g / nrm
        CY = C @ Y
        obj = float(np.real(np.sum(Y.conj() * CY)))
        if it % 5 == 0 or it == max_iter or abs(obj - obj_prev) <= 1e-3 * tol * max(1.0, abs(obj)):
            y = np.real(np.sum(Y.conj() * CY, axis=1))
            bound = _dual_bound(C, y)
            V = hermitian_part(Y @ Y.conj().T)
            best = (obj, V, bound)
            if bound - obj <= tol * max(1.0, abs(bound)):
                return V, SdpInfo(obj, bound, it, 0.0, "lowrank"), Y
        obj_prev = obj
    obj, V, bound = best
    raise SdpNotConverged("sdp did not converge", V, SdpInfo(obj, bound, max_iter, 0.0, "lowrank"))


def sdp_solve_diag1(
    C: np.ndarray,
    *,
    method: str = "admm",
    max_iter: int = 2000,
    tol: float = 1e-5,
    warm_start: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    full_output: bool = False,
):
    """Maximize ``tr(C V)`` over ``V >= 0`` with unit diagonal.

    ``method="admm"`` is an over-relaxed splitting between the PSD cone and
    the unit-diagonal affine set. ``method="lowrank"`` optimizes a factor
    ``Y`` with ``V = Y Y^H`` by row-wise ascent, which is much cheaper for
    D around 100. Both stop on a certified relative duality gap of ``tol``
    (relative to ``max(1, |bound|)`` after scaling ``C`` to unit Frobenius
    norm).

    Returns ``V`` or, with ``full_output``, ``(V, SdpInfo)``.
    """
    C = hermitian_part(np.asarray(C, dtype=complex))
    D = C.shape[0]
    scale = float(np.linalg.norm(C))
    if scale == 0.0:
        V = np.eye(D, dtype=complex)
        info = SdpInfo(0.0, 0.0, 0, 0.0, method)
        return (V, info) if full_output else V
    Cn = C / scale
    try:
        if method == "admm":
            V, info = _sdp_admm(Cn, max_iter, tol, warm_start)
        elif method == "lowrank":
            V, info, _ = _sdp_lowrank(Cn, max_iter, tol, warm_start, rng)
        else:
            raise ValueError(f"unknown sdp method {method!r}")
    except SdpNotConverged as exc:
        exc.info.objective *= scale
        exc.info.upper_bound *= scale
        raise
    info.objective *= scale
    info.upper_bound *= scale
    return (V, info) if full_output else V


def sample_complex_gaussian(
    mean: np.ndarray,
    covariance: np.ndarray,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw from CN(mean, covariance). ``size`` draws are stacked along axis 0."""
    mean = np.asarray(mean, dtype=complex)
    w, v = np.linalg.eigh(hermitian_part(np.asarray(covariance, dtype=complex)))
    root = v * np.sqrt(np.clip(w, 0.0, None))
    shape = (mean.shape[0],) if size is None else (size, mean.shape[0])
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return mean + g @ root.T
