"""Single-trajectory pure Gaussian states and state-level derived quantities.

A state is stored as first moments ``alpha`` and second central moments
``u`` (anomalous, symmetric) and ``v`` (normal, Hermitian):

    alpha_n = <a_n>,   u_nm = <da_n da_m>,   v_nm = <da_n^dag da_m>

with ``da = a - alpha``.  Quadratures follow the x = (a + a^dag)/sqrt(2)
convention, so the vacuum variance is 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularCovarianceError


@dataclass
class GaussianState:
    alpha: np.ndarray  # (N,) complex
    u: np.ndarray      # (N, N) complex symmetric
    v: np.ndarray      # (N, N) complex Hermitian

    @property
    def n_sites(self) -> int:
        return self.alpha.shape[0]

    def copy(self) -> "GaussianState":
        return GaussianState(self.alpha.copy(), self.u.copy(), self.v.copy())


@dataclass
class QuadratureCovariance:
    """Real mean vector (x_1..x_N, p_1..p_N) and symmetric 2N x 2N covariance."""

    mean: np.ndarray
    sigma: np.ndarray


@dataclass
class PhysicalityReport:
    min_symplectic_eigenvalue: float
    u_asymmetry: float
    v_hermiticity_residual: float
    v_diag_min: float
    physical: bool


def vacuum(n_sites: int) -> GaussianState:
    if n_sites < 1:
        raise ValueError(f"n_sites must be >= 1, got {n_sites}")
    return GaussianState(
        alpha=np.zeros(n_sites, dtype=complex),
        u=np.zeros((n_sites, n_sites), dtype=complex),
        v=np.zeros((n_sites, n_sites), dtype=complex),
    )


def quadrature_covariance(state: GaussianState) -> QuadratureCovariance:
    """Real-quadrature mean and covariance of the state.

    Block structure (x block first, then p):

        Sigma_xx = Re u + Re v + 1/2,   Sigma_pp = -Re u + Re v + 1/2,
        Sigma_xp = Im u + Im v          (as <dx_n dp_m>, symmetrized)
    """
    alpha, u, v = state.alpha, state.u, state.v
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(u))
            and np.all(np.isfinite(v))):
        raise ValueError("state contains non-finite moments")
    n = alpha.shape[0]
    eye = np.eye(n)
    sxx = u.real + v.real + 0.5 * eye
    spp = -u.real + v.real + 0.5 * eye
    sxp = u.imag + v.imag
    sigma = np.block([[sxx, sxp], [sxp.T, spp]])
    sigma = 0.5 * (sigma + sigma.T)
    mean = np.concatenate([np.sqrt(2.0) * alpha.real,
                           np.sqrt(2.0) * alpha.imag])
    return QuadratureCovariance(mean=mean, sigma=sigma)


def symplectic_eigenvalues(sigma: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of a covariance in xxpp ordering (ascending).

    Physical states have every eigenvalue >= 1/2; pure states sit at 1/2.
    """
    n = sigma.shape[0] // 2
    omega = np.zeros_like(sigma)
    omega[:n, n:] = np.eye(n)
    omega[n:, :n] = -np.eye(n)
    ev = np.linalg.eigvals(omega @ sigma)
    nus = np.sort(np.abs(ev.imag))
    # eigenvalues come in +/- pairs; keep one of each
    return nus[::2][:n] if n > 0 else nus


def parity(state: GaussianState) -> float:
    """Expectation of (-1)^(total photon number).

    For a Gaussian state this is the Wigner function value at the origin,
    up to normalization:  exp(-m^T Sigma^-1 m / 2) / sqrt(det(2 Sigma)).
    """
    qc = quadrature_covariance(state)
    try:
        factor = cho_factor(qc.sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            "covariance not positive definite",
            symplectic_spectrum=symplectic_eigenvalues(qc.sigma)) from exc
    n2 = qc.sigma.shape[0]
    # det(2 Sigma) = 2^(2N) * prod(diag(L))^2
    log_det2 = n2 * np.log(2.0) + 2.0 * np.sum(np.log(np.diag(factor[0])))
    quad = float(qc.mean @ cho_solve(factor, qc.mean))
    return float(np.exp(-0.5 * quad - 0.5 * log_det2))


def enforce_structure(state: GaussianState) -> tuple[GaussianState, float]:
    """Re-impose u = u^T and v = v^dag; returns the max asymmetry removed."""
    du = np.max(np.abs(state.u - state.u.T)) if state.u.size else 0.0
    dv = np.max(np.abs(state.v - state.v.conj().T)) if state.v.size else 0.0
    fixed = GaussianState(
        alpha=state.alpha.copy(),
        u=0.5 * (state.u + state.u.T),
        v=0.5 * (state.v + state.v.conj().T),
    )
    return fixed, float(max(du, dv))


def physicality_check(state: GaussianState,
                      tol_phys: float = 1e-6) -> PhysicalityReport:
    """Diagnostics only: symplectic spectrum and structure residuals."""
    u_asym = float(np.max(np.abs(state.u - state.u.T))) if state.u.size else 0.0
    v_herm = (float(np.max(np.abs(state.v - state.v.conj().T)))
              if state.v.size else 0.0)
    v_diag_min = float(np.min(state.v.diagonal().real))
    qc = quadrature_covariance(
        GaussianState(state.alpha, 0.5 * (state.u + state.u.T),
                      0.5 * (state.v + state.v.conj().T)))
    nu_min = float(symplectic_eigenvalues(qc.sigma)[0])
    physical = (nu_min >= 0.5 - tol_phys and v_diag_min >= -tol_phys
                and u_asym <= tol_phys and v_herm <= tol_phys)
    return PhysicalityReport(
        min_symplectic_eigenvalue=nu_min,
        u_asymmetry=u_asym,
        v_hermiticity_residual=v_herm,
        v_diag_min=v_diag_min,
        physical=physical,
    )


# ---------------------------------------------------------------------------
# Normal-ordered observables of a Gaussian state (Wick factorization).

def site_occupations(state: GaussianState) -> np.ndarray:
    """<a_n^dag a_n> per site."""
    return state.v.diagonal().real + np.abs(state.alpha) ** 2


def coherence(state: GaussianState, j: int, k: int) -> complex:
    """<a_j^dag a_k>."""
    return complex(state.v[j, k] + np.conj(state.alpha[j]) * state.alpha[k])


def local_g2_numerator(state: GaussianState) -> np.ndarray:
    """<a_n^dag a_n^dag a_n a_n> per site, by Wick factorization."""
    a2 = np.abs(state.alpha) ** 2
    vd = state.v.diagonal().real
    ud = state.u.diagonal()
    return (a2 ** 2 + 4.0 * a2 * vd + 2.0 * (np.conj(state.alpha) ** 2 * ud).real
            + 2.0 * vd ** 2 + np.abs(ud) ** 2)
