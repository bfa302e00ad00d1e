"""Prefilter design for per-carrier equalization.

Builds the linear map from prefilter taps to precoded-channel taps, solves
the regularized rank-one generalized Rayleigh-quotient maximization for the
optimal unit-norm prefilter, and reports the resulting SINR and energy
localization of the precoded channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dd_core import DDFilter, GridParams, twisted_conv_ff
from .pulse_channel import SupportRect, design_support, restrict_to_support


class SolveError(RuntimeError):
    """The regularized normal matrix could not be factorized."""


@dataclass(frozen=True)
class PrefilterLayout:
    """Index bookkeeping between prefilter tap coordinates and flat vectors.

    Given the channel support, the prefilter support is chosen so that the
    precoded channel exactly fills the centered period window
    [-M/2, M/2-1] x [-N/2, N/2-1].  Rows of the tap matrix are indexed by
    (k + M/2) + (l + N/2)*M over that window; columns enumerate prefilter
    taps delay-fastest.
    """

    grid: GridParams
    channel_support: SupportRect

    def __post_init__(self):
        self.channel_support.validate_for(self.grid)
        M, N = self.grid.M, self.grid.N
        # the two row-index formulas for the origin tap must agree
        assert M // 2 + (N // 2) * M == (M // 2) * (N + 1)

    @property
    def width_k(self) -> int:
        s = self.channel_support
        return self.grid.M - (s.k_max - s.k_min)

    @property
    def width_l(self) -> int:
        return self.grid.N - 2 * self.channel_support.l_max

    @property
    def n_taps(self) -> int:
        return self.width_k * self.width_l

    @property
    def k_range(self) -> range:
        s = self.channel_support
        M = self.grid.M
        return range(-(M // 2) - s.k_min, M // 2 - s.k_max)

    @property
    def l_range(self) -> range:
        s = self.channel_support
        N = self.grid.N
        return range(-(N // 2) + s.l_max, N // 2 - s.l_max)

    @property
    def origin_row(self) -> int:
        """Row index of the precoded tap at the origin (k, l) = (0, 0)."""
        return (self.grid.M // 2) * (self.grid.N + 1)

    def col_index(self, k: int, l: int) -> int:
        s = self.channel_support
        M, N = self.grid.M, self.grid.N
        if k not in self.k_range or l not in self.l_range:
            raise ValueError(f"prefilter tap ({k},{l}) outside layout ranges")
        return (k + M // 2 + s.k_min) + (l + N // 2 - s.l_max) * self.width_k

    def row_index(self, k: int, l: int) -> int:
        M, N = self.grid.M, self.grid.N
        if not (-M // 2 <= k < M // 2 and -N // 2 <= l < N // 2):
            raise ValueError(f"precoded tap ({k},{l}) outside the period window")
        return (k + M // 2) + (l + N // 2) * M

    def positions(self) -> list[tuple[int, int]]:
        """Prefilter tap coordinates in column order."""
        return [(k, l) for l in self.l_range for k in self.k_range]


@dataclass(frozen=True)
class PrecoderSolution:
    """Optimal prefilter taps plus the precoded channel they induce.

    ``taps`` is the unit-norm flat tap vector, ``normalizer`` the norm of the
    unnormalized solve output, ``precoded`` the full-window precoded channel
    filter, ``gamma`` the achieved SINR (linear) at the design SNR ``rho``.
    """

    taps: np.ndarray
    normalizer: float
    precoded: DDFilter
    gamma: float
    rho: float
    layout: PrefilterLayout

    def __post_init__(self):
        arr = np.array(self.taps, dtype=np.complex128)
        arr.setflags(write=False)
        object.__setattr__(self, "taps", arr)

    @property
    def prefilter(self) -> DDFilter:
        """The prefilter as a DD filter on its layout support."""
        layout = self.layout
        taps = {pos: complex(v) for pos, v in zip(layout.positions(), self.taps)}
        kr, lr = layout.k_range, layout.l_range
        return DDFilter(
            layout.grid, taps, (kr.start, kr.stop - 1, lr.start, lr.stop - 1)
        )


def twisted_conv_matrix(h: DDFilter, layout: PrefilterLayout) -> np.ndarray:
    """Matrix of prefilter taps -> precoded-channel taps under the layout maps.

    Column (k', l') holds h[k - k', l - l'] e^{j 2 pi k'(l - l')/(MN)} at row
    (k, l); multiplying by a flat prefilter vector gives the vectorized
    twisted convolution of the channel with the prefilter.
    """
    grid = layout.grid
    s = layout.channel_support
    M, N = grid.M, grid.N
    for (k, l), v in h.taps.items():
        if v != 0 and not (s.k_min <= k <= s.k_max and -s.l_max <= l <= s.l_max):
            raise ValueError(
                f"channel tap ({k},{l}) outside the layout's channel support"
            )
    nz = [((k, l), v) for (k, l), v in h.taps.items() if v != 0]
    kh = np.array([k for (k, _), _ in nz], dtype=int)[None, :]
    lh = np.array([l for (_, l), _ in nz], dtype=int)[None, :]
    vals = np.array([v for _, v in nz], dtype=np.complex128)[None, :]
    MN = M * N
    K = layout.n_taps
    pos = layout.positions()
    kp = np.array([k for k, _ in pos], dtype=int)[:, None]
    lp = np.array([l for _, l in pos], dtype=int)[:, None]
    rows = (kp + kh + M // 2) + (lp + lh + N // 2) * M  # (K, taps)
    roots = np.exp(2j * np.pi * np.arange(MN) / MN)
    entries = vals * roots[(kp * lh) % MN]
    cols = np.broadcast_to(np.arange(K)[:, None], rows.shape)
    flat = (rows * K + cols).reshape(-1)
    acc = np.bincount(flat, weights=entries.real.reshape(-1), minlength=MN * K).astype(
        np.complex128
    )
    acc += 1j * np.bincount(flat, weights=entries.imag.reshape(-1), minlength=MN * K)
    return acc.reshape(MN, K)


def optimal_prefilter(H: np.ndarray, layout: PrefilterLayout, rho: float) -> PrecoderSolution:
    """Unit-norm prefilter maximizing the origin-tap SINR at data SNR rho.

    Forms the Hermitian positive-definite matrix I/rho + sum of the outer
    products of all non-origin rows, solves it against the origin row by a
    Cholesky factorization, and normalizes.  The global phase is fixed by
    rotating the (0, 0) prefilter tap to the non-negative real axis.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    MN = layout.grid.M * layout.grid.N
    if H.shape != (MN, layout.n_taps):
        raise ValueError(f"tap matrix must be {(MN, layout.n_taps)}, got {H.shape}")
    i0 = layout.origin_row
    r0 = H[i0]
    h0 = r0.conj()
    B = H.conj().T @ H - np.outer(h0, r0) + np.eye(layout.n_taps) / rho
    B = 0.5 * (B + B.conj().T)
    try:
        factor = scipy.linalg.cho_factor(B)
    except scipy.linalg.LinAlgError as exc:
        cond = np.linalg.cond(B)
        raise SolveError(
            f"positive-definite solve failed (condition number {cond:.3e})"
        ) from exc
    u = scipy.linalg.cho_solve(factor, h0)
    lam = float(np.linalg.norm(u))
    a = u / lam
    j0 = layout.col_index(0, 0)
    if abs(a[j0]) > 1e-300:
        a = a * (a[j0].conjugate() / abs(a[j0]))
    h_a_vec = H @ a
    precoded = _filter_from_window_vec(h_a_vec, layout.grid)
    gamma = sinr(precoded, rho)
    return PrecoderSolution(
        taps=a, normalizer=lam, precoded=precoded, gamma=gamma, rho=rho, layout=layout
    )


def _filter_from_window_vec(vec: np.ndarray, grid: GridParams) -> DDFilter:
    """Rebuild a full-window DD filter from its flat (k-fastest) tap vector."""
    M, N = grid.M, grid.N
    arr = vec.reshape(N, M).T  # arr[k_idx, l_idx]
    taps = {
        (ki - M // 2, li - N // 2): complex(arr[ki, li])
        for ki in range(M)
        for li in range(N)
    }
    return DDFilter(grid, taps, (-(M // 2), M // 2 - 1, -(N // 2), N // 2 - 1))


def sinr(precoded: DDFilter, rho: float) -> float:
    """Origin-tap signal to interference-plus-noise ratio, linear scale.

    gamma = |h[0,0]|^2 / (1/rho + sum over all other taps of |h[k,l]|^2).
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    useful = abs(precoded.tap(0, 0)) ** 2
    interference = precoded.energy - useful
    return float(useful / (1.0 / rho + interference))


def localization_metric(precoded: DDFilter) -> float:
    """Fraction of the filter energy sitting on the origin tap, in [0, 1]."""
    total = precoded.energy
    if total == 0.0:
        raise ValueError("localization metric is undefined for a zero filter")
    return float(abs(precoded.tap(0, 0)) ** 2 / total)


def design_prefilter(h: DDFilter, rho: float) -> tuple[PrecoderSolution, SupportRect]:
    """Full pipeline: pick the design support, assemble the map, solve.

    The channel is restricted to a span-capped support (see
    :func:`zakotfs.pulse_channel.design_support`) before the matrix is
    assembled; sub-threshold tails outside it stay un-designed-for and show
    up as a small residual interference floor.
    """
    rect = design_support(h)
    h_r = restrict_to_support(h, rect)
    layout = PrefilterLayout(h.grid, rect)
    H = twisted_conv_matrix(h_r, layout)
    return optimal_prefilter(H, layout, rho), rect


def write_prefilter_csv(sol: PrecoderSolution, path, comment: str | None = None) -> None:
    """Write the prefilter taps as CSV rows ``k,l,re,im`` with summary header lines."""
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(f"# gamma_db={10.0 * np.log10(sol.gamma)!r}\n")
        fh.write(f"# localization={localization_metric(sol.precoded)!r}\n")
        fh.write(f"# normalizer={sol.normalizer!r}\n")
        fh.write("k,l,re,im\n")
        for (k, l), v in zip(sol.layout.positions(), sol.taps):
            fh.write(f"{k},{l},{v.real!r},{v.imag!r}\n")
