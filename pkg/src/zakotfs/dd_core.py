"""Discrete delay-Doppler (DD) domain algebra.

Quasi-periodic signals on an M x N fundamental domain, sparse DD filters,
twisted convolution, the discrete Zak transform pair, and PAPR measurement.
All types are immutable after construction and every operation is a pure
function of its inputs, so everything here is safe to use from parallel
workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

TapMap = Mapping[tuple[int, int], complex]


class GridError(ValueError):
    """Invalid frame geometry, shape mismatch, or mismatched grids."""


class AliasingError(ValueError):
    """A filter operation produced delay support wider than one period."""


@dataclass(frozen=True)
class GridParams:
    """DD frame geometry.

    M delay bins per delay period tau_p, N Doppler bins per Doppler period
    nu_p, bandwidth B = M * nu_p and frame duration T = N * tau_p.  The
    periods satisfy tau_p * nu_p = 1.
    """

    M: int
    N: int
    nu_p: float
    tau_p: float
    B: float
    T: float

    def __post_init__(self):
        if self.M < 2 or self.N < 2 or self.M % 2 or self.N % 2:
            raise GridError(f"M and N must be even integers >= 2, got M={self.M}, N={self.N}")
        if self.nu_p <= 0 or self.tau_p <= 0:
            raise GridError("periods must be positive")
        if abs(self.tau_p * self.nu_p - 1.0) > 1e-12:
            raise GridError(f"tau_p * nu_p must equal 1, got {self.tau_p * self.nu_p!r}")
        if self.B != self.M * self.nu_p or self.T != self.N * self.tau_p:
            raise GridError("B and T must equal M*nu_p and N*tau_p exactly")

    @classmethod
    def from_periods(cls, M: int, N: int, nu_p: float) -> "GridParams":
        """Build a grid from bin counts and the Doppler period in Hz."""
        tau_p = 1.0 / nu_p
        return cls(M=M, N=N, nu_p=nu_p, tau_p=tau_p, B=M * nu_p, T=N * tau_p)


@dataclass(frozen=True)
class QuasiPeriodicSignal:
    """A DD signal stored on its M x N fundamental domain.

    The value at any integer lattice point follows from the extension rule:
    shifting delay by n*M multiplies the fundamental value by
    exp(j*2*pi*n*l/N), while shifting Doppler by multiples of N carries no
    phase.  Use :func:`qp_eval` to evaluate outside the fundamental domain.
    """

    grid: GridParams
    fundamental: np.ndarray

    def __post_init__(self):
        arr = np.array(self.fundamental, dtype=np.complex128)
        if arr.shape != (self.grid.M, self.grid.N):
            raise GridError(
                f"fundamental must have shape {(self.grid.M, self.grid.N)}, got {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "fundamental", arr)

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.fundamental) ** 2))


@dataclass(frozen=True)
class DDFilter:
    """Sparse DD filter: complex taps on the integer (k, l) lattice.

    ``support`` is an inclusive rectangle (k_lo, k_hi, l_lo, l_hi) containing
    every nonzero tap.  The delay extent must stay below one period (k_hi -
    k_lo < M) so twisted convolutions with signals remain alias-free; the
    Doppler extent may reach N.
    """

    grid: GridParams
    taps: TapMap
    support: tuple[int, int, int, int]

    def __post_init__(self):
        k_lo, k_hi, l_lo, l_hi = self.support
        if k_lo > k_hi or l_lo > l_hi:
            raise GridError(f"empty support rectangle {self.support}")
        if k_hi - k_lo >= self.grid.M:
            raise AliasingError(
                f"delay support width {k_hi - k_lo} must be < M={self.grid.M}"
            )
        if l_hi - l_lo > self.grid.N:
            raise AliasingError(
                f"Doppler support width {l_hi - l_lo} must be <= N={self.grid.N}"
            )
        for (k, l), v in self.taps.items():
            if v != 0 and not (k_lo <= k <= k_hi and l_lo <= l <= l_hi):
                raise GridError(f"nonzero tap at ({k},{l}) outside support {self.support}")
        object.__setattr__(self, "taps", MappingProxyType(dict(self.taps)))

    @classmethod
    def delta(cls, grid: GridParams, k: int = 0, l: int = 0, value: complex = 1.0) -> "DDFilter":
        """Single-tap filter; the (0,0) delta is the twisted-convolution identity."""
        return cls(grid, {(k, l): complex(value)}, (k, k, l, l))

    @classmethod
    def from_taps(cls, grid: GridParams, taps: TapMap) -> "DDFilter":
        """Filter with the tight bounding-box support of the given taps."""
        nz = [(k, l) for (k, l), v in taps.items() if v != 0]
        if not nz:
            return cls(grid, dict(taps), (0, 0, 0, 0))
        ks = [k for k, _ in nz]
        ls = [l for _, l in nz]
        return cls(grid, dict(taps), (min(ks), max(ks), min(ls), max(ls)))

    def tap(self, k: int, l: int) -> complex:
        return self.taps.get((k, l), 0j)

    @property
    def energy(self) -> float:
        return float(sum(abs(v) ** 2 for v in self.taps.values()))

    def window_array(self) -> np.ndarray:
        """Dense (M, N) array over the centered period window.

        Entry [k + M/2, l + N/2] holds the tap at (k, l) for
        k in [-M/2, M/2), l in [-N/2, N/2).  Raises if a nonzero tap lies
        outside that window.
        """
        M, N = self.grid.M, self.grid.N
        out = np.zeros((M, N), dtype=np.complex128)
        for (k, l), v in self.taps.items():
            if v == 0:
                continue
            if not (-M // 2 <= k < M // 2 and -N // 2 <= l < N // 2):
                raise GridError(f"tap at ({k},{l}) falls outside the period window")
            out[k + M // 2, l + N // 2] = v
        return out

    def restricted(self, k_lo: int, k_hi: int, l_lo: int, l_hi: int) -> "DDFilter":
        """Drop every tap outside the given inclusive rectangle."""
        kept = {
            (k, l): v
            for (k, l), v in self.taps.items()
            if k_lo <= k <= k_hi and l_lo <= l <= l_hi
        }
        return DDFilter(self.grid, kept, (k_lo, k_hi, l_lo, l_hi))


@dataclass(frozen=True)
class TimeSamples:
    """Rate-B time-domain samples of one frame; sample n sits at t = n/B."""

    grid: GridParams
    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.complex128)
        if arr.shape != (self.grid.M * self.grid.N,):
            raise GridError(
                f"samples must have length M*N={self.grid.M * self.grid.N}, got {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def embed_symbols(symbols, grid: GridParams) -> QuasiPeriodicSignal:
    """Embed an M x N symbol array as the fundamental domain of a QP signal."""
    arr = np.asarray(symbols, dtype=np.complex128)
    if arr.shape != (grid.M, grid.N):
        raise GridError(f"symbols must have shape {(grid.M, grid.N)}, got {arr.shape}")
    return QuasiPeriodicSignal(grid, arr)


def qp_eval(sig: QuasiPeriodicSignal, k: int, l: int) -> complex:
    """Evaluate a quasi-periodic signal at any integer lattice point."""
    M, N = sig.grid.M, sig.grid.N
    n, k0 = divmod(int(k), M)
    l0 = int(l) % N
    return complex(sig.fundamental[k0, l0] * np.exp(2j * np.pi * n * l0 / N))


def twisted_conv_ff(f: DDFilter, g: DDFilter) -> DDFilter:
    """Twisted convolution of two filters.

    (f *s g)[k, l] = sum f[k', l'] g[k - k', l - l'] exp(j 2 pi l'(k - k')/(MN)).
    Associative but not commutative; the output support is the Minkowski sum
    of the input supports.  Raises AliasingError if the output delay extent
    reaches one period.
    """
    if f.grid != g.grid:
        raise GridError("filters live on different grids")
    MN = f.grid.M * f.grid.N
    out: dict[tuple[int, int], complex] = {}
    for (k1, l1), a in f.taps.items():
        if a == 0:
            continue
        for (k2, l2), b in g.taps.items():
            if b == 0:
                continue
            key = (k1 + k2, l1 + l2)
            out[key] = out.get(key, 0j) + a * b * np.exp(2j * np.pi * l1 * k2 / MN)
    fk_lo, fk_hi, fl_lo, fl_hi = f.support
    gk_lo, gk_hi, gl_lo, gl_hi = g.support
    support = (fk_lo + gk_lo, fk_hi + gk_hi, fl_lo + gl_lo, fl_hi + gl_hi)
    if support[1] - support[0] >= f.grid.M:
        raise AliasingError(
            f"twisted convolution output delay width {support[1] - support[0]} >= M={f.grid.M}"
        )
    return DDFilter(f.grid, out, support)


def twisted_conv_fs(f: DDFilter, sig: QuasiPeriodicSignal) -> QuasiPeriodicSignal:
    """Twisted convolution of a filter with a quasi-periodic signal.

    Quasi-periodicity is preserved, so only the fundamental domain of the
    output is computed.  Evaluated through the time domain, where a DD tap at
    (k', l') acts as a circular shift by k' with the linear phase ramp
    exp(j 2 pi l'(m - k')/(MN)); this is exact because the rate-B samples of
    a quasi-periodic signal are MN-periodic.
    """
    if f.grid != sig.grid:
        raise GridError("filter and signal live on different grids")
    M, N = sig.grid.M, sig.grid.N
    MN = M * N
    nz = [((k, l), v) for (k, l), v in f.taps.items() if v != 0]
    if not nz:
        return QuasiPeriodicSignal(sig.grid, np.zeros((M, N), dtype=np.complex128))
    kps = np.array([k for (k, _), _ in nz], dtype=int)
    lps = np.array([l for (_, l), _ in nz], dtype=int)
    vals = np.array([v for _, v in nz], dtype=np.complex128)
    td = inverse_dzt(sig).samples
    m = np.arange(MN)
    arg = m[None, :] - kps[:, None]
    shifted = td[arg % MN]
    # all ramp phases are integer multiples of 2*pi/MN: look them up
    roots = np.exp(2j * np.pi * np.arange(MN) / MN)
    ramps = roots[(lps[:, None] * arg) % MN]
    out_td = (vals[:, None] * ramps * shifted).sum(axis=0)
    return forward_dzt(TimeSamples(sig.grid, out_td))


def inverse_dzt(sig: QuasiPeriodicSignal) -> TimeSamples:
    """Time-domain realization: samples[k + n*M] = sum_l fund[k,l] e^{j2pi nl/N} / sqrt(N)."""
    N = sig.grid.N
    A = np.sqrt(N) * np.fft.ifft(sig.fundamental, axis=1)  # A[k, n]
    return TimeSamples(sig.grid, A.T.reshape(-1))


def forward_dzt(td: TimeSamples) -> QuasiPeriodicSignal:
    """Exact inverse of :func:`inverse_dzt`; the pair is unitary."""
    M, N = td.grid.M, td.grid.N
    S = td.samples.reshape(N, M)  # S[n, k] = samples[k + n*M]
    F = np.fft.fft(S, axis=0) / np.sqrt(N)  # F[l, k]
    return QuasiPeriodicSignal(td.grid, F.T)


def papr_db(td: TimeSamples) -> float:
    """Peak-to-average power ratio of the rate-B samples, in dB."""
    p = np.abs(td.samples) ** 2
    mean = p.mean()
    if mean == 0:
        raise ValueError("PAPR is undefined for an all-zero signal")
    return float(10.0 * np.log10(p.max() / mean))
