"""Frame construction, channel application, estimation, and equalization.

Two frame layouts are supported: the precoded layout with a single pilot
carrier and no guards, and the conventional layout where the pilot sits in a
dedicated delay strip of zeroed guard carriers.  Detection is per-carrier
scalar MMSE for the precoded system and joint LMMSE over all carriers for the
conventional baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dd_core import (
    DDFilter,
    GridError,
    GridParams,
    QuasiPeriodicSignal,
    embed_symbols,
    qp_eval,
    twisted_conv_fs,
)
from .precoder import PrecoderSolution
from .pulse_channel import SupportRect


class FrameError(ValueError):
    """Frame layout and symbol-count mismatches."""


class EstimationError(ValueError):
    """Estimator preconditions violated (mode, pilot power, read window)."""


@dataclass(frozen=True)
class LinkBudget:
    """Per-carrier energies: data symbol energy E, noise variance N0, PDR eta.

    eta is the pilot-to-data power ratio: pilot energy over the total energy
    of all data symbols in the frame.
    """

    E: float
    N0: float
    eta: float

    def __post_init__(self):
        if self.E <= 0 or self.N0 <= 0 or self.eta <= 0:
            raise ValueError("E, N0 and eta must all be positive")

    @property
    def rho(self) -> float:
        """Data SNR E/N0."""
        return self.E / self.N0


@dataclass(frozen=True)
class FramePlan:
    """Pilot/guard/data layout of one frame.

    Precoded mode: single pilot at (M/2, N/2), every other carrier is data.
    Conventional mode: the pilot sits in a guard strip of 2*guard+1 delay
    bins spanning all N Doppler bins; data fills the remaining delay bins.
    """

    mode: str
    grid: GridParams
    guard: int = 0

    def __post_init__(self):
        if self.mode not in ("precoded", "conventional"):
            raise FrameError(f"unknown frame mode {self.mode!r}")
        if self.mode == "precoded" and self.guard != 0:
            raise FrameError("precoded frames take no guard strip")
        if self.mode == "conventional":
            if self.guard < 0 or 2 * self.guard + 1 >= self.grid.M:
                raise FrameError(f"guard half-width {self.guard} leaves no data bins")

    @classmethod
    def precoded(cls, grid: GridParams) -> "FramePlan":
        return cls(mode="precoded", grid=grid)

    @classmethod
    def conventional(cls, grid: GridParams, guard: int = 4) -> "FramePlan":
        return cls(mode="conventional", grid=grid, guard=guard)

    @property
    def pilot(self) -> tuple[int, int]:
        return (self.grid.M // 2, self.grid.N // 2)

    @property
    def n_data(self) -> int:
        M, N = self.grid.M, self.grid.N
        if self.mode == "precoded":
            return M * N - 1
        return (M - 2 * self.guard - 1) * N

    def _in_strip(self, k: int) -> bool:
        k_p = self.grid.M // 2
        return k_p - self.guard <= k <= k_p + self.guard

    def data_positions(self) -> list[tuple[int, int]]:
        """Data carrier coordinates, delay-fastest within each Doppler bin."""
        M, N = self.grid.M, self.grid.N
        out = []
        for l in range(N):
            for k in range(M):
                if (k, l) == self.pilot:
                    continue
                if self.mode == "conventional" and self._in_strip(k):
                    continue
                out.append((k, l))
        return out

    @cached_property
    def data_index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Data positions as (k, l) index arrays for vectorized access."""
        pos = self.data_positions()
        ks = np.array([k for k, _ in pos], dtype=int)
        ls = np.array([l for _, l in pos], dtype=int)
        return ks, ls

    def guard_positions(self) -> list[tuple[int, int]]:
        """Zeroed carrier coordinates (empty in precoded mode)."""
        if self.mode == "precoded":
            return []
        M, N = self.grid.M, self.grid.N
        return [
            (k, l)
            for l in range(N)
            for k in range(M)
            if self._in_strip(k) and (k, l) != self.pilot
        ]

    def pilot_amplitude(self, budget: LinkBudget) -> float:
        """Pilot symbol amplitude sqrt(E * n_data * eta)."""
        return float(np.sqrt(budget.E * self.n_data * budget.eta))


# ---------------------------------------------------------------------------
# QAM mapping
# ---------------------------------------------------------------------------


def _qam_side(order: int) -> int:
    side = round(np.sqrt(order))
    if order < 4 or side * side != order or order & (order - 1):
        raise ValueError(f"unsupported constellation size {order}; need square 4^k QAM")
    return side


def _gray_levels(side: int) -> np.ndarray:
    """PAM levels indexed by Gray-coded axis bits: level[g] for gray code g."""
    idx = np.arange(side)
    gray = idx ^ (idx >> 1)
    levels = np.empty(side)
    levels[gray] = 2 * idx - (side - 1)
    return levels


def qam_map(bits, order: int = 4) -> np.ndarray:
    """Gray-mapped square QAM with unit average energy.

    Each symbol consumes log2(order) bits: first half selects the in-phase
    level, second half the quadrature level.
    """
    side = _qam_side(order)
    bits = np.asarray(bits, dtype=int).reshape(-1)
    bps = int(np.log2(order))
    if bits.size % bps:
        raise ValueError(f"bit count {bits.size} not a multiple of {bps}")
    groups = bits.reshape(-1, bps)
    half = bps // 2
    weights = 1 << np.arange(half - 1, -1, -1)
    gi = groups[:, :half] @ weights
    gq = groups[:, half:] @ weights
    levels = _gray_levels(side)
    scale = np.sqrt(2.0 * (order - 1) / 3.0)
    return (levels[gi] + 1j * levels[gq]) / scale


def qam_demap(symbols, order: int = 4) -> np.ndarray:
    """Minimum-distance hard decision back to bits (per-axis nearest level)."""
    side = _qam_side(order)
    bps = int(np.log2(order))
    half = bps // 2
    symbols = np.asarray(symbols, dtype=complex).reshape(-1)
    scale = np.sqrt(2.0 * (order - 1) / 3.0)

    def axis_bits(vals):
        idx = np.clip(np.round((vals * scale + side - 1) / 2.0), 0, side - 1).astype(int)
        gray = idx ^ (idx >> 1)
        return ((gray[:, None] >> np.arange(half - 1, -1, -1)) & 1).astype(int)

    bi = axis_bits(symbols.real)
    bq = axis_bits(symbols.imag)
    return np.concatenate([bi, bq], axis=1).reshape(-1)


def symbol_errors(bits_tx, bits_rx, order: int) -> int:
    """Count symbol decisions where any of the symbol's bits differ."""
    bps = int(np.log2(order))
    tx = np.asarray(bits_tx, dtype=int).reshape(-1, bps)
    rx = np.asarray(bits_rx, dtype=int).reshape(-1, bps)
    if tx.shape != rx.shape:
        raise ValueError("bit arrays disagree in length")
    return int(np.count_nonzero((tx != rx).any(axis=1)))


# ---------------------------------------------------------------------------
# frame construction and the channel
# ---------------------------------------------------------------------------


def _fill_frame(data: np.ndarray, plan: FramePlan, budget: LinkBudget) -> np.ndarray:
    data = np.asarray(data, dtype=complex).reshape(-1)
    if data.size != plan.n_data:
        raise FrameError(f"expected {plan.n_data} data symbols, got {data.size}")
    M, N = plan.grid.M, plan.grid.N
    s = np.zeros((M, N), dtype=np.complex128)
    ks, ls = plan.data_index_arrays
    s[ks, ls] = np.sqrt(budget.E) * data
    s[plan.pilot] = plan.pilot_amplitude(budget)
    return s


def build_frame_precoded(
    data, plan: FramePlan, budget: LinkBudget, prefilter
) -> QuasiPeriodicSignal:
    """Embed data plus the single pilot and apply the prefilter.

    ``data`` holds unit-average-energy symbols; they are scaled by sqrt(E)
    here.  ``prefilter`` may be a DDFilter or a PrecoderSolution.
    """
    if plan.mode != "precoded":
        raise FrameError(f"precoded builder called with mode {plan.mode!r}")
    if isinstance(prefilter, PrecoderSolution):
        prefilter = prefilter.prefilter
    s_dd = embed_symbols(_fill_frame(data, plan, budget), plan.grid)
    return twisted_conv_fs(prefilter, s_dd)


def build_frame_conventional(data, plan: FramePlan, budget: LinkBudget) -> QuasiPeriodicSignal:
    """Embed data with the pilot-plus-guard strip; no precoding."""
    if plan.mode != "conventional":
        raise FrameError(f"conventional builder called with mode {plan.mode!r}")
    return embed_symbols(_fill_frame(data, plan, budget), plan.grid)


def apply_channel(
    x_dd: QuasiPeriodicSignal,
    h: DDFilter,
    budget: LinkBudget,
    rng: np.random.Generator,
) -> QuasiPeriodicSignal:
    """Twisted-convolve with the channel and add white noise of variance N0 per bin."""
    if h.grid != x_dd.grid:
        raise GridError("channel and frame live on different grids")
    clean = twisted_conv_fs(h, x_dd)
    M, N = x_dd.grid.M, x_dd.grid.N
    noise = np.sqrt(budget.N0 / 2.0) * (
        rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))
    )
    return QuasiPeriodicSignal(x_dd.grid, clean.fundamental + noise)


# ---------------------------------------------------------------------------
# estimation and equalization
# ---------------------------------------------------------------------------


def estimate_origin_tap(
    y_dd: QuasiPeriodicSignal, plan: FramePlan, budget: LinkBudget
) -> complex:
    """Shrinkage estimate of the precoded channel's origin tap from the pilot carrier.

    y[pilot] / (pilot_amplitude * (1 + 1/(rho * eta * n_data))).
    """
    if plan.mode != "precoded":
        raise EstimationError("origin-tap estimator requires a precoded frame plan")
    if budget.eta <= 0:
        raise EstimationError("eta must be positive")
    shrink = 1.0 + 1.0 / (budget.rho * budget.eta * plan.n_data)
    return complex(y_dd.fundamental[plan.pilot] / (plan.pilot_amplitude(budget) * shrink))


def one_tap_equalize(
    y_dd: QuasiPeriodicSignal, h_hat: complex, plan: FramePlan, budget: LinkBudget
) -> np.ndarray:
    """Scalar MMSE per data carrier: conj(h) y / (|h|^2 + 1/rho).

    Returns estimates of the sqrt(E)-scaled data symbols in plan order; the
    pilot carrier is excluded.
    """
    gain = np.conj(h_hat) / (abs(h_hat) ** 2 + 1.0 / budget.rho)
    ks, ls = plan.data_index_arrays
    return gain * y_dd.fundamental[ks, ls]


def estimate_taps_from_pilot(
    y_dd: QuasiPeriodicSignal,
    plan: FramePlan,
    budget: LinkBudget,
    eps_det: float,
    support: SupportRect,
) -> DDFilter:
    """Phase-compensated read-off of the channel taps around the pilot carrier.

    Reads the window k in [pilot + k_min - 1, pilot + k_max + 1], l in
    [pilot - l_max - 1, pilot + l_max + 1], divides out the pilot amplitude
    and the pilot-position twist phase, then zeroes taps below
    eps_det * max|tap|^2.

    Raises:
        EstimationError: if the read window leaves the guard strip (the guard
            is too narrow for the assumed channel support).
    """
    if plan.mode != "conventional":
        raise EstimationError("pilot-region estimator requires a conventional frame plan")
    if not 0.0 <= eps_det < 1.0:
        raise ValueError(f"eps_det must lie in [0, 1), got {eps_det}")
    if support.k_min - 1 < -plan.guard or support.k_max + 1 > plan.guard:
        raise EstimationError(
            f"read window [{support.k_min - 1}, {support.k_max + 1}] leaves the "
            f"guard strip of half-width {plan.guard}"
        )
    grid = plan.grid
    k_p, l_p = plan.pilot
    amp = plan.pilot_amplitude(budget)
    MN = grid.M * grid.N
    raw: dict[tuple[int, int], complex] = {}
    for dk in range(support.k_min - 1, support.k_max + 2):
        for dl in range(-support.l_max - 1, support.l_max + 2):
            val = qp_eval(y_dd, k_p + dk, l_p + dl)
            raw[(dk, dl)] = val * np.exp(-2j * np.pi * dl * k_p / MN) / amp
    peak = max(abs(v) ** 2 for v in raw.values())
    taps = {pos: v for pos, v in raw.items() if abs(v) ** 2 >= eps_det * peak}
    rect = (support.k_min - 1, support.k_max + 1, -support.l_max - 1, support.l_max + 1)
    return DDFilter(grid, taps, rect)


def channel_matrix(h: DDFilter, grid: GridParams) -> np.ndarray:
    """MN x MN matrix mapping vectorized fundamental symbols to received bins.

    Index (k, l) -> k + l*M on both sides; the quasi-periodic extension
    phases are folded into the matrix entries so that multiplying by a
    vectorized symbol array reproduces the twisted convolution of the channel
    with the embedded signal.
    """
    M, N = grid.M, grid.N
    MN = M * N
    nz = [((k, l), v) for (k, l), v in h.taps.items() if v != 0]
    if not nz:
        return np.zeros((MN, MN), dtype=np.complex128)
    kps = np.array([k for (k, _), _ in nz], dtype=int)[:, None, None]
    lps = np.array([l for (_, l), _ in nz], dtype=int)[:, None, None]
    vals = np.array([v for _, v in nz], dtype=np.complex128)[:, None, None]
    kk = np.arange(M)[None, :, None]
    ll = np.arange(N)[None, None, :]
    n = (kk - kps) // M
    # phases are integer multiples of 2*pi/MN: table lookup beats complex exp
    roots = np.exp(2j * np.pi * np.arange(MN) / MN)
    coeff = vals * roots[(lps * (kk - kps) + n * (ll - lps) * M) % MN]
    rows = np.broadcast_to(kk + ll * M, coeff.shape)
    cols = (kk - kps) % M + ((ll - lps) % N) * M
    flat = (rows * MN + cols).reshape(-1)
    acc = np.bincount(flat, weights=coeff.real.reshape(-1), minlength=MN * MN).astype(
        np.complex128
    )
    acc += 1j * np.bincount(flat, weights=coeff.imag.reshape(-1), minlength=MN * MN)
    return acc.reshape(MN, MN)


def joint_lmmse_equalize(
    y_dd: QuasiPeriodicSignal,
    h_hat: DDFilter,
    plan: FramePlan,
    budget: LinkBudget,
) -> np.ndarray:
    """Joint LMMSE over all MN carriers, returned at the data positions.

    Solves (H^H H + I/rho) x = H^H y for the vectorized frame and picks out
    the data carriers in plan order.  Estimates carry the sqrt(E) scale.
    """
    grid = plan.grid
    if h_hat.grid != grid:
        raise GridError("channel estimate and frame live on different grids")
    M, N = grid.M, grid.N
    Heff = channel_matrix(h_hat, grid)
    y = y_dd.fundamental.reshape(-1, order="F")  # k-fastest vectorization
    G = Heff.conj().T @ Heff + np.eye(M * N) / budget.rho
    x_hat = np.linalg.solve(G, Heff.conj().T @ y)
    ks, ls = plan.data_index_arrays
    return x_hat[ks + ls * M]
