"""Pulse shaping, matched filtering, and the sampled effective DD channel.

Separable root-raised-cosine (RRC) pulses on the delay and Doppler axes, the
six-path Veh-A channel model, and quadrature evaluation of the
receive-filter / physical-channel / transmit-filter cascade on the DD
sampling lattice.

The transmit pulse is w_tx(tau, nu) = sqrt(BT) rrc_bt(B tau) rrc_bn(T nu) and
the receive filter is its matched pair w_rx(tau, nu) = w_tx*(-tau, -nu)
e^{j 2 pi nu tau}.  Because the physical channel is a sum of delta paths, the
cascade factorizes per path into two one-dimensional cross-correlation
integrals which are evaluated by trapezoidal quadrature over the truncated
pulse support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dd_core import DDFilter, GridParams

VEH_A_DELAYS = np.array([0.0, 0.31e-6, 0.71e-6, 1.09e-6, 1.73e-6, 2.51e-6])
VEH_A_POWERS_DB = np.array([0.0, -1.0, -9.0, -10.0, -15.0, -20.0])

_QUAD_CHUNK = 1 << 16


class CrystallineError(ValueError):
    """Channel spreads too large relative to the DD periods."""


class SupportError(ValueError):
    """No admissible support rectangle captures the requested energy."""


@dataclass(frozen=True)
class PulseParams:
    """RRC roll-offs plus quadrature controls.

    ``truncation_lobes`` is the one-sided truncation of the RRC tail in units
    of 1/B (delay axis) and 1/T (Doppler axis); ``quad_oversampling`` Q sets
    the trapezoid step 1/(Q*B) resp. 1/(Q*T).  Defaults trade accuracy for
    speed; truncation, not the trapezoid rule, dominates the residual error.
    """

    beta_tau: float = 0.2
    beta_nu: float = 0.2
    truncation_lobes: int = 10
    quad_oversampling: int = 16

    def __post_init__(self):
        if not (0.0 <= self.beta_tau < 1.0 and 0.0 <= self.beta_nu < 1.0):
            raise ValueError("roll-off factors must lie in [0, 1)")
        if self.truncation_lobes < 4:
            raise ValueError("truncation_lobes must be >= 4")
        if self.quad_oversampling < 8:
            raise ValueError("quad_oversampling must be >= 8")


@dataclass(frozen=True)
class ChannelRealization:
    """Sparse doubly-spread channel: (complex gain, delay s, Doppler Hz) paths."""

    paths: tuple[tuple[complex, float, float], ...]
    nu_max: float

    def __post_init__(self):
        if self.nu_max < 0:
            raise ValueError("nu_max must be non-negative")
        for _, _, nu in self.paths:
            if abs(nu) > self.nu_max * (1 + 1e-12):
                raise ValueError(f"path Doppler {nu} exceeds nu_max={self.nu_max}")


@dataclass(frozen=True)
class SupportRect:
    """Channel support descriptor: delay taps k_min..k_max, Doppler |l| <= l_max."""

    k_min: int
    k_max: int
    l_max: int

    def __post_init__(self):
        if not (self.k_min <= 0 <= self.k_max):
            raise ValueError(f"k_min <= 0 <= k_max required, got [{self.k_min}, {self.k_max}]")
        if self.l_max < 0:
            raise ValueError("l_max must be non-negative")

    def validate_for(self, grid: GridParams) -> None:
        if self.k_max - self.k_min >= grid.M:
            raise SupportError(f"delay span {self.k_max - self.k_min} must be < M={grid.M}")
        if 2 * self.l_max >= grid.N:
            raise SupportError(f"2*l_max={2 * self.l_max} must be < N={grid.N}")


def rrc_value(beta: float, x) -> np.ndarray | float:
    """Unit-energy RRC prototype, with analytic limits at the removable singularities.

    Args:
        beta: roll-off factor in [0, 1).
        x: scalar or array argument in symbol units.

    Returns:
        rrc_beta(x), same shape as x.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    x = np.asarray(x, dtype=float)
    at_zero = np.abs(x) < 1e-9
    if beta > 0:
        at_knee = np.abs(np.abs(x) - 1.0 / (4.0 * beta)) < 1e-9
    else:
        at_knee = np.zeros_like(at_zero)
    # 0.25 is never a singular point for beta in [0, 1)
    safe = np.where(at_zero | at_knee, 0.25, x)
    num = np.sin(np.pi * safe * (1.0 - beta)) + 4.0 * beta * safe * np.cos(np.pi * safe * (1.0 + beta))
    den = np.pi * safe * (1.0 - (4.0 * beta * safe) ** 2)
    out = num / den
    out = np.where(at_zero, 1.0 - beta + 4.0 * beta / np.pi, out)
    if beta > 0:
        knee = (beta / np.sqrt(2.0)) * (
            (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * beta))
            + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * beta))
        )
        out = np.where(at_knee, knee, out)
    return out if out.ndim else float(out)


def draw_veh_a(nu_max: float, rng: np.random.Generator) -> ChannelRealization:
    """Draw one Veh-A realization.

    Path delays and relative powers follow the six-path Veh-A power-delay
    profile, normalized so the mean total path power is one.  Gains are
    circularly-symmetric complex Gaussian; Dopplers are nu_max*cos(theta)
    with theta i.i.d. uniform on [0, 2*pi).
    """
    if nu_max < 0:
        raise ValueError("nu_max must be non-negative")
    powers = 10.0 ** (VEH_A_POWERS_DB / 10.0)
    powers = powers / powers.sum()
    gains = np.sqrt(powers / 2.0) * (
        rng.standard_normal(len(powers)) + 1j * rng.standard_normal(len(powers))
    )
    theta = rng.uniform(0.0, 2.0 * np.pi, size=len(powers))
    dopplers = nu_max * np.cos(theta)
    paths = tuple(
        (complex(g), float(t), float(d)) for g, t, d in zip(gains, VEH_A_DELAYS, dopplers)
    )
    return ChannelRealization(paths=paths, nu_max=float(nu_max))


def _quad_grid(pulse: PulseParams) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid nodes (in symbol units) and weights over the truncated support."""
    L = pulse.truncation_lobes
    Q = pulse.quad_oversampling
    n = 2 * L * Q
    u = np.arange(n + 1) / Q - L
    w = np.full(n + 1, 1.0 / Q)
    w[0] = w[-1] = 0.5 / Q
    return u, w


def effective_channel_taps(
    chan: ChannelRealization, grid: GridParams, pulse: PulseParams
) -> DDFilter:
    """Sampled effective DD channel taps h[k, l] on the centered period window.

    For each path i with gain h_i, delay tau_i, Doppler nu_i the cascade
    contributes h_i e^{j2pi nu_i (tau - tau_i)} F_i(tau) G_i(tau, nu) with

        F_i(tau)     = B * int rrc(-B t) rrc(B(tau - tau_i - t)) e^{-j2pi nu_i t} dt
        G_i(tau, nu) = T * int rrc(-T f) rrc(T(nu - nu_i - f)) e^{j2pi f tau} df

    evaluated at tau = k/B, nu = l/T for k in [-M/2, M/2), l in [-N/2, N/2).

    Raises:
        CrystallineError: if a path delay reaches tau_p/2 or a path Doppler
            reaches nu_p/4; taps would then wrap around the period window.
    """
    M, N = grid.M, grid.N
    for _, tau, nu in chan.paths:
        if not (abs(tau) < grid.tau_p / 2.0 and abs(nu) < grid.nu_p / 4.0):
            raise CrystallineError(
                f"path (tau={tau}, nu={nu}) violates the crystalline regime "
                f"(|tau| < {grid.tau_p / 2.0}, |nu| < {grid.nu_p / 4.0})"
            )
    kvals = np.arange(-(M // 2), M // 2)
    lvals = np.arange(-(N // 2), N // 2)
    u, w = _quad_grid(pulse)
    npaths = len(chan.paths)
    F = np.zeros((npaths, M), dtype=np.complex128)
    G = np.zeros((npaths, M, N), dtype=np.complex128)
    for start in range(0, len(u), _QUAD_CHUNK):
        uu = u[start : start + _QUAD_CHUNK]
        ww = w[start : start + _QUAD_CHUNK]
        osc = np.exp(2j * np.pi * np.outer(kvals, uu) / (M * N))  # shared by all paths
        rx_t = rrc_value(pulse.beta_tau, -uu) * ww
        rx_n = rrc_value(pulse.beta_nu, -uu) * ww
        for i, (_, tau, nu) in enumerate(chan.paths):
            b = tau * grid.B
            d = nu * grid.T
            base_t = rx_t * np.exp(-2j * np.pi * (nu / grid.B) * uu)
            F[i] += rrc_value(pulse.beta_tau, (kvals - b)[:, None] - uu[None, :]) @ base_t
            S = rrc_value(pulse.beta_nu, (lvals - d)[:, None] - uu[None, :])  # (N, P)
            G[i] += osc @ (S * rx_n[None, :]).T
    H = np.zeros((M, N), dtype=np.complex128)
    for i, (gain, tau, nu) in enumerate(chan.paths):
        path_phase = gain * np.exp(2j * np.pi * nu * (kvals / grid.B - tau))
        H += path_phase[:, None] * F[i][:, None] * G[i]
    taps = {
        (int(k), int(l)): complex(H[ki, li])
        for ki, k in enumerate(kvals)
        for li, l in enumerate(lvals)
    }
    return DDFilter(grid, taps, (-(M // 2), M // 2 - 1, -(N // 2), N // 2 - 1))


def _rect_energy_table(h: DDFilter) -> tuple[np.ndarray, float]:
    """Prefix sums for origin-straddling rectangle energies.

    Returns (pref, total) where pref[k_idx + 1, j] - pref[k_lo_idx, j] is the
    energy of delay rows k_lo..k_idx with |l| <= j.
    """
    grid = h.grid
    M, N = grid.M, grid.N
    W = np.abs(h.window_array()) ** 2
    half_n = N // 2
    sym = np.zeros((M, half_n), dtype=float)
    sym[:, 0] = W[:, half_n]
    for j in range(1, half_n):
        sym[:, j] = sym[:, j - 1] + W[:, half_n + j] + W[:, half_n - j]
    pref = np.zeros((M + 1, half_n), dtype=float)
    pref[1:] = np.cumsum(sym, axis=0)
    return pref, float(W.sum())


def extract_support(h: DDFilter, eps_supp: float) -> SupportRect:
    """Smallest origin-straddling rectangle holding >= (1 - eps_supp) of the tap energy.

    Candidates are [k_min, k_max] x [-l_max, l_max] with k_min <= 0 <= k_max,
    searched in increasing area.  Raises SupportError when no rectangle within
    the crystalline bounds captures the energy (e.g. energy on the l = -N/2
    row, which no symmetric rectangle can reach).
    """
    if not 0.0 <= eps_supp < 1.0:
        raise ValueError(f"eps_supp must lie in [0, 1), got {eps_supp}")
    grid = h.grid
    M, N = grid.M, grid.N
    pref, total = _rect_energy_table(h)
    if total == 0.0:
        return SupportRect(0, 0, 0)
    need = (1.0 - eps_supp) * total * (1.0 - 1e-12)

    candidates = []
    for k_min in range(-(M // 2), 1):
        for k_max in range(0, M // 2):
            width = k_max - k_min + 1
            for l_max in range(0, N // 2):
                candidates.append((width * (2 * l_max + 1), l_max, width, k_min, k_max))
    candidates.sort()
    for _, l_max, _, k_min, k_max in candidates:
        lo = k_min + M // 2
        hi = k_max + M // 2
        if pref[hi + 1, l_max] - pref[lo, l_max] >= need:
            rect = SupportRect(k_min, k_max, l_max)
            rect.validate_for(grid)
            return rect
    raise SupportError(
        f"no admissible support rectangle captures {1.0 - eps_supp} of the energy"
    )


def design_support(h: DDFilter, k_cap: int | None = None, l_cap: int | None = None) -> SupportRect:
    """Support rectangle for prefilter design: most energy under span caps.

    Uncapped energy-threshold supports swallow the slow pulse tails and leave
    the prefilter too few taps to shape the precoded channel (the prefilter
    span is one period minus the channel span per axis).  Capping the channel
    support at a quarter period per side keeps at least half the period of
    design freedom on each axis; within the caps the rectangle with the most
    captured energy wins, ties broken by smaller area.
    """
    grid = h.grid
    M, N = grid.M, grid.N
    if k_cap is None:
        k_cap = M // 4
    if l_cap is None:
        l_cap = N // 4
    k_cap = min(k_cap, M // 2 - 1)
    l_cap = min(l_cap, N // 2 - 1)
    pref, total = _rect_energy_table(h)
    if total == 0.0:
        return SupportRect(0, 0, 0)
    best = None
    for k_min in range(-k_cap, 1):
        for k_max in range(0, k_cap + 1):
            lo = k_min + M // 2
            hi = k_max + M // 2
            width = k_max - k_min + 1
            for l_max in range(0, l_cap + 1):
                e = pref[hi + 1, l_max] - pref[lo, l_max]
                area = width * (2 * l_max + 1)
                key = (-e, area, l_max, width)
                if best is None or key < best[0]:
                    best = (key, k_min, k_max, l_max)
    rect = SupportRect(best[1], best[2], best[3])
    rect.validate_for(grid)
    return rect


def restrict_to_support(h: DDFilter, rect: SupportRect) -> DDFilter:
    """Drop channel taps outside the support rectangle."""
    return h.restricted(rect.k_min, rect.k_max, -rect.l_max, rect.l_max)


def write_heatmap_csv(filt: DDFilter, path, comment: str | None = None) -> None:
    """Write |taps|^2 over the full period window as CSV rows ``k,l,mag2``."""
    arr = np.abs(filt.window_array()) ** 2
    M, N = filt.grid.M, filt.grid.N
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("k,l,mag2\n")
        for li in range(N):
            for ki in range(M):
                fh.write(f"{ki - M // 2},{li - N // 2},{arr[ki, li]!r}\n")
