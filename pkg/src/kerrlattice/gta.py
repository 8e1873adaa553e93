"""Euler-Maruyama integrator for the Gaussian-trajectory moment equations.

Each trajectory evolves (alpha, u, v) under heterodyne unraveling of both
loss channels.  Drift and noise are evaluated at the step's start state
(explicit scheme); after every step u and v are re-symmetrized.

The kernels below operate on arrays with an optional leading batch axis, so
a block of trajectories advances in lockstep through vectorized numpy ops.
Every contraction uses ``np.matmul``, whose batched form is bitwise
identical to the corresponding single-slice product; per-trajectory results
therefore do not depend on how trajectories are grouped into blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gaussian import GaussianState, physicality_check
from .model import DriveProtocol, Lattice, ModelParams, drive_amplitude
from .seeding import trajectory_generator

# steps of pre-generated noise per RNG call; value only affects memory use,
# not the stream contents (PCG64 output is consumed sequentially)
_CHUNK_TARGET = 2_000_000


@dataclass(frozen=True)
class StepConfig:
    """Euler-Maruyama step size and per-trajectory safety rails."""

    dt: float = 1e-4
    blowup_threshold: float = 1e3
    tol_phys: float = 1e-6

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.blowup_threshold <= 0:
            raise ConfigError("blowup_threshold must be > 0")


@dataclass(frozen=True)
class NoiseIncrements:
    """Complex Wiener increments, one per site and loss channel.

    Each entry is (dW_x + i dW_p)/sqrt(2) with independent dW ~ N(0, dt),
    so E|dz|^2 = dt.  ``dz2`` is None when the two-photon channel is off.
    """

    dz1: np.ndarray
    dz2: np.ndarray | None


def sample_increments(rng, n_sites, dt, two_photon=True, size=None):
    """Draw one step's noise.  Layout per trajectory: a single call of
    4N (or 2N when the two-photon channel is off) standard normals, split
    as [dz1.re, dz1.im, dz2.re, dz2.im]."""
    n = n_sites
    width = 4 * n if two_photon else 2 * n
    shape = (width,) if size is None else tuple(np.atleast_1d(size)) + (width,)
    raw = rng.standard_normal(shape)
    s = math.sqrt(dt / 2.0)
    dz1 = (raw[..., :n] + 1j * raw[..., n:2 * n]) * s
    dz2 = (raw[..., 2 * n:3 * n] + 1j * raw[..., 3 * n:]) * s if two_photon \
        else None
    return NoiseIncrements(dz1=dz1, dz2=dz2)


class _Workspace:
    """Per-run constants: coefficient scalars, adjacency, term switches."""

    def __init__(self, params: ModelParams, lattice: Lattice | None,
                 n_sites: int | None = None):
        n = lattice.n_sites if lattice is not None else n_sites
        self.n = n
        self.gamma = params.gamma
        self.eta = params.eta
        self.sqrt_gamma = math.sqrt(params.gamma)
        self.two_sqrt_eta = 2.0 * math.sqrt(params.eta)
        self.lin_a = -0.5 * params.gamma + 1j * params.delta
        self.lin_u = -params.gamma + 2j * params.delta
        self.nl = params.eta + 1j * params.u_kerr
        self.iu = 1j * params.u_kerr
        self.has_eta = params.eta != 0.0
        self.has_kerr = params.u_kerr != 0.0
        self.has_nl = self.has_eta or self.has_kerr
        if lattice is not None:
            self.has_hop = params.j_hop != 0.0 and lattice.n_bonds > 0
            self.ijz = 1j * params.j_hop / lattice.z
            self.adj = (lattice.adjacency().astype(complex)
                        if self.has_hop else None)
        else:
            self.has_hop = False
            self.ijz = 0j
            self.adj = None
        self.eye = np.eye(n)
        self.idx = np.arange(n)


def _drift_terms(alpha, u, v, ws: _Workspace, g_t):
    """Deterministic parts of (d alpha, d u, d v) per unit time.

    Implements, term group by term group: (i) linear loss/detuning,
    (ii) hopping over nearest neighbors, (iii) the (eta + iU) nonlinearity,
    (iv) drive terms proportional to g_t, (v) measurement backaction summed
    over all sites with weight gamma + 4 eta |alpha_i|^2.  Assumes u
    symmetric and v Hermitian (enforced after every step), which lets
    transposes be written as conjugates.
    """
    idx = ws.idx
    w = alpha.real ** 2 + alpha.imag ** 2
    vd = v[..., idx, idx].real
    ud = u[..., idx, idx]

    da = ws.lin_a * alpha
    du = ws.lin_u * u
    dv = (-ws.gamma) * v

    if ws.has_hop:
        da = da + ws.ijz * (alpha @ ws.adj)
        au = np.matmul(ws.adj, u)
        du = du + ws.ijz * (au + np.swapaxes(au, -1, -2))
        av = np.matmul(ws.adj, v)
        dv = dv - ws.ijz * (av - np.conj(np.swapaxes(av, -1, -2)))

    if g_t != 0.0:
        da = da - (1j * g_t) * np.conj(alpha)
        du = du - (1j * g_t) * (2.0 * v.real + ws.eye)
        dv = dv - (2.0 * g_t) * u.imag

    if ws.has_nl:
        f = alpha * alpha + ud
        s = w + vd
        da = da - ws.nl * (w * alpha + 2.0 * vd * alpha + np.conj(alpha) * ud)
        nlu = f[..., :, None] * v + np.conj(v) * f[..., None, :]
        nlu = nlu + (2.0 * u) * (s[..., :, None] + s[..., None, :])
        nlu[..., idx, idx] += f
        du = du - ws.nl * nlu
        ufn = np.conj(f)[..., :, None] * u
        ucfm = np.conj(u) * f[..., None, :]
        if ws.has_kerr:
            dv = dv + ws.iu * ((2.0 * v) * (s[..., :, None] - s[..., None, :])
                               + ufn - ucfm)
        if ws.has_eta:
            dv = dv - ws.eta * ((2.0 * v) * (s[..., :, None] + s[..., None, :])
                                + ufn + ucfm)

    if ws.has_eta:
        c = ws.gamma + (4.0 * ws.eta) * w
        cv = c[..., :, None] * v
        p = np.matmul(u, cv)
        du = du - (p + np.swapaxes(p, -1, -2))
        dv = dv - (np.matmul(v, cv) + np.matmul(np.conj(u),
                                                c[..., :, None] * u))
    else:
        p = np.matmul(u, v)
        du = du - ws.gamma * (p + np.swapaxes(p, -1, -2))
        dv = dv - ws.gamma * (np.matmul(v, v) + np.matmul(np.conj(u), u))

    return da, du, dv


def _noise_terms(alpha, u, v, ws: _Workspace, dz1, dz2):
    """Stochastic increments; all terms vanish when u = v = 0.

    Uses u^T = u and v^T = conj(v) (state invariants) to avoid transposes.
    """
    na = ws.sqrt_gamma * (np.matmul(dz1[..., None, :], v)[..., 0, :]
                          + np.matmul(np.conj(dz1)[..., None, :], u)[..., 0, :])
    if not ws.has_eta:
        return na, None, None
    w1 = np.conj(alpha) * dz2
    w2 = alpha * np.conj(dz2)
    na = na + ws.two_sqrt_eta * (
        np.matmul(w1[..., None, :], v)[..., 0, :]
        + np.matmul(w2[..., None, :], u)[..., 0, :])
    dzv = dz2[..., :, None] * v
    dzcu = np.conj(dz2)[..., :, None] * u
    nu = ws.two_sqrt_eta * (np.matmul(np.conj(v), dzv) + np.matmul(u, dzcu))
    nv = ws.two_sqrt_eta * (np.matmul(np.conj(u), dzv) + np.matmul(v, dzcu))
    return na, nu, nv


def drift(state: GaussianState, params: ModelParams, lattice: Lattice,
          g_t: float):
    """Deterministic time derivatives (d alpha/dt, d u/dt, d v/dt)."""
    ws = _Workspace(params, lattice)
    da, du, dv = _drift_terms(state.alpha, state.u, state.v, ws, g_t)
    if not (np.all(np.isfinite(da)) and np.all(np.isfinite(du))
            and np.all(np.isfinite(dv))):
        raise FloatingPointError("non-finite drift: trajectory diverged")
    return da, du, dv


def noise_terms(state: GaussianState, params: ModelParams,
                increments: NoiseIncrements):
    """Stochastic increments (delta alpha, delta u, delta v)."""
    ws = _Workspace(params, None, n_sites=state.n_sites)
    na, nu, nv = _noise_terms(state.alpha, state.u, state.v, ws,
                              increments.dz1, increments.dz2)
    zeros = np.zeros_like(state.u)
    return na, (zeros if nu is None else nu), (zeros if nv is None else nv)


def em_step(state: GaussianState, params: ModelParams, lattice: Lattice,
            t: float, step_config: StepConfig, rng,
            protocol: DriveProtocol | None = None):
    """One Euler-Maruyama step; returns (new_state, diverged)."""
    g_t = params.g_target if protocol is None else drive_amplitude(protocol, t)
    ws = _Workspace(params, lattice)
    dt = step_config.dt
    inc = sample_increments(rng, lattice.n_sites, dt, two_photon=ws.has_eta)
    da, du, dv = _drift_terms(state.alpha, state.u, state.v, ws, g_t)
    na, nu, nv = _noise_terms(state.alpha, state.u, state.v, ws,
                              inc.dz1, inc.dz2)
    alpha = state.alpha + da * dt + na
    u = state.u + du * dt + (0 if nu is None else nu)
    v = state.v + dv * dt + (0 if nv is None else nv)
    u = 0.5 * (u + u.T)
    v = 0.5 * (v + v.conj().T)
    new = GaussianState(alpha=alpha, u=u, v=v)
    amax2 = float(np.max(alpha.real ** 2 + alpha.imag ** 2))
    diverged = (not (np.isfinite(amax2) and np.all(np.isfinite(u))
                     and np.all(np.isfinite(v)))
                or amax2 > step_config.blowup_threshold ** 2)
    return new, diverged


def _steps_per_sample(t_fin, t_sample, dt):
    n_steps = int(round(t_fin / dt))
    n_per = int(round(t_sample / dt))
    if n_per < 1 or abs(n_per * dt - t_sample) > 1e-9 * max(t_sample, dt):
        raise ConfigError(
            f"t_sample={t_sample} must be an integer multiple of dt={dt}")
    if abs(n_steps * dt - t_fin) > 1e-9 * max(t_fin, dt):
        raise ConfigError(
            f"t_fin={t_fin} must be an integer multiple of dt={dt}")
    return n_steps, n_per


def integrate_block(params: ModelParams, lattice: Lattice,
                    protocol: DriveProtocol, step: StepConfig,
                    t_fin: float, t_sample: float, master_seed,
                    indices, observables=frozenset()):
    """Advance a block of trajectories from vacuum and sample observables.

    ``indices`` are global trajectory indices; trajectory k draws its noise
    from PCG64 seeded with SeedSequence(master_seed, spawn_key=(k,)), so
    results are independent of how trajectories are grouped into blocks.

    Returns a dict of arrays: times (S,), alpha_bar/total_n/k0_num (B, S),
    optional parity (B, S) and site observables, divergence flags and
    diagnostics.  Samples taken after a trajectory diverged are NaN.
    """
    n = lattice.n_sites
    nb = len(indices)
    ws = _Workspace(params, lattice)
    dt = step.dt
    n_steps, n_per = _steps_per_sample(t_fin, t_sample, dt)
    n_samples = n_steps // n_per

    gens = [trajectory_generator(master_seed, k) for k in indices]
    alpha = np.zeros((nb, n), dtype=complex)
    u = np.zeros((nb, n, n), dtype=complex)
    v = np.zeros((nb, n, n), dtype=complex)

    want_parity = "parity" in observables
    want_sites = "sites" in observables
    out = {
        "times": dt * n_per * np.arange(1, n_samples + 1),
        "alpha_bar": np.empty((nb, n_samples)),
        "total_n": np.empty((nb, n_samples)),
        "k0_num": np.empty((nb, n_samples)),
        "indices": np.asarray(list(indices), dtype=int),
    }
    if want_parity:
        out["parity"] = np.empty((nb, n_samples))
    if want_sites:
        out["site_n"] = np.empty((nb, n_samples, n))
        out["g2_num"] = np.empty((nb, n_samples, n))
        out["coherence_01"] = np.empty((nb, n_samples), dtype=complex)

    alive = np.ones(nb, dtype=bool)
    diverged_at = np.full(nb, np.nan)
    structure_residual = np.zeros(nb)
    thr2 = step.blowup_threshold ** 2

    n_noise = (4 * n) if ws.has_eta else (2 * n)
    chunk = int(min(1024, max(16, _CHUNK_TARGET // max(1, nb * n_noise))))
    scale = math.sqrt(dt / 2.0)
    eye_flat = ws.idx

    step_i = 0
    while step_i < n_steps:
        k_steps = min(chunk, n_steps - step_i)
        raw = np.empty((nb, k_steps, n_noise))
        for b, g in enumerate(gens):
            raw[b] = g.standard_normal((k_steps, n_noise))
        dz1c = (raw[..., :n] + 1j * raw[..., n:2 * n]) * scale
        dz2c = ((raw[..., 2 * n:3 * n] + 1j * raw[..., 3 * n:]) * scale
                if ws.has_eta else None)

        for j in range(k_steps):
            t = step_i * dt
            g_t = drive_amplitude(protocol, t)
            da, du, dv = _drift_terms(alpha, u, v, ws, g_t)
            na, nu, nv = _noise_terms(alpha, u, v, ws, dz1c[:, j],
                                      None if dz2c is None else dz2c[:, j])
            alpha = alpha + da * dt + na
            if nu is None:
                u = u + du * dt
                v = v + dv * dt
            else:
                u = u + du * dt + nu
                v = v + dv * dt + nv
            step_i += 1
            at_sample = (step_i % n_per == 0)
            if at_sample:
                asym_u = np.abs(u - np.swapaxes(u, -1, -2)).max(axis=(-1, -2))
                asym_v = np.abs(v - np.conj(np.swapaxes(v, -1, -2))
                                ).max(axis=(-1, -2))
                np.maximum(structure_residual,
                           np.where(alive, np.maximum(asym_u, asym_v), 0.0),
                           out=structure_residual)
            u = 0.5 * (u + np.swapaxes(u, -1, -2))
            v = 0.5 * (v + np.conj(np.swapaxes(v, -1, -2)))

            w = alpha.real ** 2 + alpha.imag ** 2
            wmax = w.max(axis=-1)
            bad = (wmax > thr2) | ~np.isfinite(wmax)
            if at_sample:
                bad |= ~(np.isfinite(u).all(axis=(-1, -2))
                         & np.isfinite(v).all(axis=(-1, -2)))
            newly = alive & bad
            if newly.any():
                diverged_at[newly] = step_i * dt
                alive &= ~newly
                alpha[newly] = 0.0
                u[newly] = 0.0
                v[newly] = 0.0

            if at_sample:
                col = step_i // n_per - 1
                vd = v[..., eye_flat, eye_flat].real
                out["alpha_bar"][:, col] = alpha.imag.mean(axis=-1)
                out["total_n"][:, col] = (vd + w).sum(axis=-1)
                asum = alpha.sum(axis=-1)
                out["k0_num"][:, col] = (v.sum(axis=(-2, -1)).real
                                         + asum.real ** 2 + asum.imag ** 2)
                if want_sites:
                    ud = u[..., eye_flat, eye_flat]
                    out["site_n"][:, col] = vd + w
                    out["g2_num"][:, col] = (
                        w ** 2 + 4.0 * w * vd
                        + 2.0 * (np.conj(alpha) ** 2 * ud).real
                        + 2.0 * vd ** 2 + np.abs(ud) ** 2)
                    out["coherence_01"][:, col] = (
                        v[..., 0, 1] + np.conj(alpha[..., 0]) * alpha[..., 1])
                if want_parity:
                    out["parity"][:, col] = _parity_rows(alpha, u, v, alive)
                for key in ("alpha_bar", "total_n", "k0_num"):
                    out[key][~alive, col] = np.nan
                if want_parity:
                    out["parity"][~alive, col] = np.nan
                if want_sites:
                    out["site_n"][~alive, col] = np.nan
                    out["g2_num"][~alive, col] = np.nan
                    out["coherence_01"][~alive, col] = np.nan

    out["diverged"] = ~alive
    out["diverged_at"] = diverged_at
    out["structure_residual"] = structure_residual
    out["min_symplectic"] = _final_symplectic(alpha, u, v, alive, step)
    return out


def _parity_rows(alpha, u, v, alive):
    from .gaussian import parity as _parity
    from .errors import SingularCovarianceError
    vals = np.full(alpha.shape[0], np.nan)
    for b in range(alpha.shape[0]):
        if not alive[b]:
            continue
        try:
            vals[b] = _parity(GaussianState(alpha[b], u[b], v[b]))
        except (SingularCovarianceError, np.linalg.LinAlgError):
            vals[b] = np.nan
    return vals


def _final_symplectic(alpha, u, v, alive, step):
    vals = np.full(alpha.shape[0], np.nan)
    for b in range(alpha.shape[0]):
        if alive[b]:
            rep = physicality_check(GaussianState(alpha[b], u[b], v[b]),
                                    step.tol_phys)
            vals[b] = rep.min_symplectic_eigenvalue
    return vals


def run_trajectory(params, lattice, protocol, step, t_fin, t_sample,
                   master_seed, traj_index=0, observables=frozenset()):
    """Integrate a single trajectory; returns a TrajectoryRecord.

    Identical (master_seed, traj_index) gives a bit-identical record,
    whether run alone or inside an ensemble block.
    """
    from .ensemble import record_from_block
    block = integrate_block(params, lattice, protocol, step, t_fin, t_sample,
                            master_seed, [traj_index], observables)
    return record_from_block(block, 0, master_seed)
