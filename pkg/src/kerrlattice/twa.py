"""Truncated Wigner baseline: phase-space Langevin fields per site.

The symmetrized field alpha_w of every site follows

    d a = [(-gamma/2 + i Delta) a + i (J/z) sum_nbr a' - (eta + iU)(|a|^2 - 1) a
           - i G a*] dt + sqrt(gamma/2 + 2 eta |a|^2) dZ

with an independent complex Wiener increment per site (|dZ|^2 = dt).
Initial fields sample the vacuum Wigner distribution (complex Gaussian with
<|a|^2> = 1/2).  Symmetric-ordered moments are converted to normal order
when observables are extracted, so records share the GTA schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gta import StepConfig, _steps_per_sample
from .model import DriveProtocol, Lattice, ModelParams, drive_amplitude
from .seeding import trajectory_generator

_CHUNK_TARGET = 2_000_000


@dataclass
class WignerField:
    """Symmetrized per-site fields of one trajectory."""

    alpha_w: np.ndarray  # (N,) complex


def sample_vacuum_field(rng, n_sites, size=None) -> np.ndarray:
    """Vacuum Wigner sample: complex Gaussian, <|a|^2> = 1/2 per site."""
    shape = (n_sites,) if size is None else tuple(np.atleast_1d(size)) + (n_sites,)
    raw = rng.standard_normal(shape + (2,))
    return 0.5 * (raw[..., 0] + 1j * raw[..., 1])


def _twa_drift(a, params: ModelParams, adj, z, g_t):
    out = (-0.5 * params.gamma + 1j * params.delta) * a
    if adj is not None:
        out = out + (1j * params.j_hop / z) * (a @ adj)
    if params.eta != 0.0 or params.u_kerr != 0.0:
        w = a.real ** 2 + a.imag ** 2
        out = out - (params.eta + 1j * params.u_kerr) * ((w - 1.0) * a)
    if g_t != 0.0:
        out = out - (1j * g_t) * np.conj(a)
    return out


def twa_step(field: WignerField, params: ModelParams, lattice: Lattice,
             g_t: float, dt: float, rng):
    """One Euler-Maruyama step of the Wigner-field Langevin equation."""
    a = field.alpha_w
    adj = (lattice.adjacency().astype(complex)
           if params.j_hop != 0.0 and lattice.n_bonds > 0 else None)
    raw = rng.standard_normal((2, lattice.n_sites))
    dz = (raw[0] + 1j * raw[1]) * math.sqrt(dt / 2.0)
    amp = np.sqrt(0.5 * params.gamma
                  + 2.0 * params.eta * (a.real ** 2 + a.imag ** 2))
    new = a + _twa_drift(a, params, adj, lattice.z, g_t) * dt + amp * dz
    return WignerField(alpha_w=new)


def twa_observables(fields: np.ndarray):
    """Normal-ordered (n per site, g2 per site, g1 between sites).

    ``fields``: (M, N) stack of sampled symmetrized fields.  Applies the
    ordering corrections n_j = <|a|^2>_s - 1/2,
    g2_j = (<|a|^4>_s - 2<|a|^2>_s + 1/2) / n_j^2 and
    g1_jk = <a_j* a_k>_s / n_j; entries are NaN where n_j <= 0.
    """
    fields = np.asarray(fields)
    if fields.ndim != 2 or fields.shape[0] < 2:
        raise ValueError("need a stack of at least 2 field samples")
    w = fields.real ** 2 + fields.imag ** 2
    n = w.mean(axis=0) - 0.5
    g2_num = (w ** 2).mean(axis=0) - 2.0 * w.mean(axis=0) + 0.5
    cross = (np.conj(fields)[:, :, None] * fields[:, None, :]).mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(n > 0, g2_num / n ** 2, np.nan)
        g1 = np.where(n[:, None] > 0, cross / n[:, None], np.nan)
    np.fill_diagonal(g1, np.nan)
    return n, g2, g1


def integrate_block(params: ModelParams, lattice: Lattice,
                    protocol: DriveProtocol, step: StepConfig,
                    t_fin: float, t_sample: float, master_seed,
                    indices, observables=frozenset()):
    """TWA counterpart of gta.integrate_block with the same record schema.

    Observable series are reported in normal order (vacuum contributions
    subtracted), so total_n and k0_num are directly comparable with GTA.
    The first 2N normals of each trajectory stream seed the initial field;
    parity is not available in this representation.
    """
    n = lattice.n_sites
    nb = len(indices)
    dt = step.dt
    n_steps, n_per = _steps_per_sample(t_fin, t_sample, dt)
    n_samples = n_steps // n_per

    gens = [trajectory_generator(master_seed, k) for k in indices]
    a = np.empty((nb, n), dtype=complex)
    for b, g in enumerate(gens):
        a[b] = sample_vacuum_field(g, n)

    adj = (lattice.adjacency().astype(complex)
           if params.j_hop != 0.0 and lattice.n_bonds > 0 else None)
    want_sites = "sites" in observables
    out = {
        "times": dt * n_per * np.arange(1, n_samples + 1),
        "alpha_bar": np.empty((nb, n_samples)),
        "total_n": np.empty((nb, n_samples)),
        "k0_num": np.empty((nb, n_samples)),
        "indices": np.asarray(list(indices), dtype=int),
    }
    if want_sites:
        out["site_n"] = np.empty((nb, n_samples, n))
        out["g2_num"] = np.empty((nb, n_samples, n))
        out["coherence_01"] = np.empty((nb, n_samples), dtype=complex)

    alive = np.ones(nb, dtype=bool)
    diverged_at = np.full(nb, np.nan)
    thr2 = step.blowup_threshold ** 2
    half_g = 0.5 * params.gamma
    two_eta = 2.0 * params.eta
    scale = math.sqrt(dt / 2.0)
    chunk = int(min(2048, max(16, _CHUNK_TARGET // max(1, nb * 2 * n))))

    step_i = 0
    while step_i < n_steps:
        k_steps = min(chunk, n_steps - step_i)
        raw = np.empty((nb, k_steps, 2 * n))
        for b, g in enumerate(gens):
            raw[b] = g.standard_normal((k_steps, 2 * n))
        dzc = (raw[..., :n] + 1j * raw[..., n:]) * scale

        for j in range(k_steps):
            t = step_i * dt
            g_t = drive_amplitude(protocol, t)
            da = _twa_drift(a, params, adj, lattice.z, g_t)
            w = a.real ** 2 + a.imag ** 2
            a = a + da * dt + np.sqrt(half_g + two_eta * w) * dzc[:, j]
            step_i += 1

            w = a.real ** 2 + a.imag ** 2
            wmax = w.max(axis=-1)
            bad = (wmax > thr2) | ~np.isfinite(wmax)
            newly = alive & bad
            if newly.any():
                diverged_at[newly] = step_i * dt
                alive &= ~newly
                a[newly] = 0.0
                w = a.real ** 2 + a.imag ** 2

            if step_i % n_per == 0:
                col = step_i // n_per - 1
                out["alpha_bar"][:, col] = a.imag.mean(axis=-1)
                out["total_n"][:, col] = w.sum(axis=-1) - 0.5 * n
                asum = a.sum(axis=-1)
                out["k0_num"][:, col] = (asum.real ** 2 + asum.imag ** 2
                                         - 0.5 * n)
                if want_sites:
                    out["site_n"][:, col] = w - 0.5
                    out["g2_num"][:, col] = w ** 2 - 2.0 * w + 0.5
                    out["coherence_01"][:, col] = np.conj(a[..., 0]) * a[..., 1]
                for key in ("alpha_bar", "total_n", "k0_num"):
                    out[key][~alive, col] = np.nan
                if want_sites:
                    out["site_n"][~alive, col] = np.nan
                    out["g2_num"][~alive, col] = np.nan
                    out["coherence_01"][~alive, col] = np.nan

    out["diverged"] = ~alive
    out["diverged_at"] = diverged_at
    out["structure_residual"] = np.zeros(nb)
    out["min_symplectic"] = np.full(nb, np.nan)
    return out


def run_trajectory(params, lattice, protocol, step, t_fin, t_sample,
                   master_seed, traj_index=0, observables=frozenset()):
    from .ensemble import record_from_block
    block = integrate_block(params, lattice, protocol, step, t_fin, t_sample,
                            master_seed, [traj_index], observables)
    return record_from_block(block, 0, master_seed)
