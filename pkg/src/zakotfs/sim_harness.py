"""Seeded Monte-Carlo campaigns and their CSV emission.

Four experiment kinds: symbol error rate versus pilot-to-data power ratio,
SER versus maximum Doppler, PAPR CCDF for precoded versus plain frames, and
an uncoded spectral-efficiency proxy versus maximum Doppler.

Determinism contract: each (sweep point, trial) pair owns an independent RNG
stream derived from the master seed, trial results are reduced in trial
order, and aggregation uses sums of counts, so identical configs produce
bit-identical results regardless of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dd_core import DDFilter, GridParams, inverse_dzt, papr_db
from .precoder import (
    PrecoderSolution,
    PrefilterLayout,
    localization_metric,
    optimal_prefilter,
    twisted_conv_matrix,
)
from .pulse_channel import (
    PulseParams,
    SupportRect,
    design_support,
    draw_veh_a,
    effective_channel_taps,
    extract_support,
    restrict_to_support,
)
from .transceiver import (
    FramePlan,
    LinkBudget,
    build_frame_conventional,
    build_frame_precoded,
    apply_channel,
    estimate_origin_tap,
    estimate_taps_from_pilot,
    joint_lmmse_equalize,
    one_tap_equalize,
    qam_demap,
    qam_map,
    symbol_errors,
)

EXPERIMENTS = ("ser-vs-pdr", "ser-vs-doppler", "papr", "se-vs-doppler")

_WALD_Z = 1.96


class CampaignError(RuntimeError):
    """A frame inside a campaign failed; campaigns never drop frames silently."""


@dataclass(frozen=True)
class CampaignConfig:
    """Everything one campaign needs, including the master seed."""

    experiment: str
    grid: GridParams
    pulse: PulseParams
    sweep: tuple[float, ...]
    frames: int
    seed: int
    rho: float = 10.0 ** 1.5          # data SNR, linear (additive power mode)
    eta: float = 0.1                  # precoded-mode PDR, linear
    conv_eta: float = 1.0             # conventional-mode PDR, linear
    total_power: float = 100.0        # total received power / noise (fixed_total mode)
    power_mode: str = "additive"      # 'additive' | 'fixed_total'
    nu_max: float = 1000.0            # Hz, for non-Doppler-sweep experiments
    qam_order: int = 4
    guard: int = 4
    eps_supp: float = 1e-4
    eps_det: float = 1e-3
    workers: int = 1
    channel: str = "veh_a"            # 'veh_a' | 'ideal'
    out_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if len(self.sweep) == 0:
            raise ValueError("sweep must hold at least one value")
        if any(b <= a for a, b in zip(self.sweep, self.sweep[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if self.power_mode not in ("additive", "fixed_total"):
            raise ValueError(f"unknown power_mode {self.power_mode!r}")
        if self.channel not in ("veh_a", "ideal"):
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class PointResult:
    """Aggregated statistics of one (sweep value, mode) cell."""

    sweep_value: float
    mode: str
    err_count: int
    sym_count: int
    ser: float
    ci_half: float
    mean_gamma_db: float
    mean_localization: float
    mean_emp_sinr_db: float = math.nan
    se_proxy: float = math.nan


@dataclass(frozen=True)
class CampaignResult:
    config: CampaignConfig
    points: tuple[PointResult, ...]
    papr: dict[str, tuple[float, ...]]


@dataclass(frozen=True)
class _TrialOutcome:
    mode: str
    errors: int
    symbols: int
    gamma: float = math.nan
    localization: float = math.nan
    emp_sinr: float = math.nan
    papr_db: float = math.nan


def trial_seed(seed: int, point_idx: int, trial_idx: int) -> np.random.SeedSequence:
    """Independent, unique stream for one (point, trial) pair."""
    return np.random.SeedSequence([seed, point_idx, trial_idx])


def spectral_efficiency_proxy(
    ser: float, n_data: int, qam_order: int, grid: GridParams, pulse: PulseParams
) -> float:
    """Uncoded throughput proxy normalized by the expanded time-bandwidth product."""
    bt = grid.B * grid.T
    expansion = (1.0 + pulse.beta_nu) * (1.0 + pulse.beta_tau)
    return (1.0 - ser) * n_data * math.log2(qam_order) / (bt * expansion)


def _mode_budget(cfg: CampaignConfig, n_data: int, eta: float) -> LinkBudget:
    """Per-mode link budget under the configured power accounting."""
    n0 = 1.0
    if cfg.power_mode == "fixed_total":
        mn = cfg.grid.M * cfg.grid.N
        E = cfg.total_power * mn * n0 / (n_data * (1.0 + eta))
    else:
        E = cfg.rho * n0
    return LinkBudget(E=E, N0=n0, eta=eta)


def _draw_channel(cfg: CampaignConfig, nu_max: float, rng: np.random.Generator):
    from .pulse_channel import ChannelRealization

    if cfg.channel == "ideal":
        return ChannelRealization(paths=((1.0 + 0j, 0.0, 0.0),), nu_max=0.0)
    return draw_veh_a(nu_max, rng)


def _clip_rect_to_guard(rect: SupportRect, guard: int) -> SupportRect:
    """Largest support readable from inside the guard strip (one-bin read margin)."""
    if guard < 1:
        raise CampaignError("conventional estimation needs a guard half-width >= 1")
    return SupportRect(
        k_min=max(rect.k_min, -(guard - 1)),
        k_max=min(rect.k_max, guard - 1),
        l_max=rect.l_max,
    )


def _solve_prefilter(
    grid: GridParams, h_restricted: DDFilter, rect: SupportRect, rho: float
) -> PrecoderSolution:
    layout = PrefilterLayout(grid, rect)
    return optimal_prefilter(twisted_conv_matrix(h_restricted, layout), layout, rho)


def _precoded_trial(
    cfg: CampaignConfig,
    h_full: DDFilter,
    h_restricted: DDFilter,
    rect: SupportRect,
    budget: LinkBudget,
    rng: np.random.Generator,
) -> dict:
    """One precoded frame: returns error counts for estimated and perfect CSI."""
    grid = cfg.grid
    sol = _solve_prefilter(grid, h_restricted, rect, budget.rho)
    plan = FramePlan.precoded(grid)
    bps = int(math.log2(cfg.qam_order))
    bits = rng.integers(0, 2, size=plan.n_data * bps)
    syms = qam_map(bits, cfg.qam_order)
    x = build_frame_precoded(syms, plan, budget, sol)
    y = apply_channel(x, h_full, budget, rng)

    h00_true = sol.precoded.tap(0, 0)
    h00_est = estimate_origin_tap(y, plan, budget)
    scale = math.sqrt(budget.E)
    out = {}
    for label, h00 in (("est", h00_est), ("perfect", h00_true)):
        est = one_tap_equalize(y, h00, plan, budget)
        out[label] = symbol_errors(bits, qam_demap(est / scale, cfg.qam_order), cfg.qam_order)

    ks, ls = plan.data_index_arrays
    useful = h00_true * scale * syms
    resid = y.fundamental[ks, ls] - useful
    emp_sinr = float(np.sum(np.abs(useful) ** 2) / np.sum(np.abs(resid) ** 2))
    out.update(
        symbols=plan.n_data,
        gamma=sol.gamma,
        localization=localization_metric(sol.precoded),
        emp_sinr=emp_sinr,
    )
    return out


def _conventional_trial(
    cfg: CampaignConfig,
    h_full: DDFilter,
    rect: SupportRect,
    budget: LinkBudget,
    rng: np.random.Generator,
) -> dict:
    """One conventional frame: pilot-region estimation plus joint LMMSE."""
    grid = cfg.grid
    plan = FramePlan.conventional(grid, guard=cfg.guard)
    bps = int(math.log2(cfg.qam_order))
    bits = rng.integers(0, 2, size=plan.n_data * bps)
    syms = qam_map(bits, cfg.qam_order)
    x = build_frame_conventional(syms, plan, budget)
    y = apply_channel(x, h_full, budget, rng)
    est_rect = _clip_rect_to_guard(rect, cfg.guard)
    h_hat = estimate_taps_from_pilot(y, plan, budget, cfg.eps_det, est_rect)
    est = joint_lmmse_equalize(y, h_hat, plan, budget)
    errors = symbol_errors(
        bits, qam_demap(est / math.sqrt(budget.E), cfg.qam_order), cfg.qam_order
    )
    return {"errors": errors, "symbols": plan.n_data}


def _campaign_trial(args: tuple) -> list[_TrialOutcome]:
    """Worker entry point: run every mode of one (point, trial) cell."""
    cfg, point_idx, trial_idx, value = args
    ss = trial_seed(cfg.seed, point_idx, trial_idx)
    chan_ss, pre_ss, conv_ss = ss.spawn(3)
    if cfg.experiment in ("ser-vs-doppler", "se-vs-doppler"):
        nu_max = value * 1e3
        eta_pre, eta_conv = cfg.eta, cfg.conv_eta
    else:
        nu_max = cfg.nu_max
        eta_pre = eta_conv = 10.0 ** (value / 10.0) if cfg.experiment == "ser-vs-pdr" else cfg.eta

    chan = _draw_channel(cfg, nu_max, np.random.default_rng(chan_ss))
    h_full = effective_channel_taps(chan, cfg.grid, cfg.pulse)
    design_rect = design_support(h_full)
    h_design = restrict_to_support(h_full, design_rect)

    outcomes: list[_TrialOutcome] = []
    if cfg.experiment == "papr":
        outcomes.extend(
            _papr_trial(cfg, h_design, design_rect, np.random.default_rng(pre_ss))
        )
        return outcomes

    plan_pre = FramePlan.precoded(cfg.grid)
    budget_pre = _mode_budget(cfg, plan_pre.n_data, eta_pre)
    pre = _precoded_trial(
        cfg, h_full, h_design, design_rect, budget_pre, np.random.default_rng(pre_ss)
    )
    common = dict(
        symbols=pre["symbols"],
        gamma=pre["gamma"],
        localization=pre["localization"],
        emp_sinr=pre["emp_sinr"],
    )
    if cfg.experiment == "ser-vs-pdr":
        outcomes.append(_TrialOutcome(mode="precoded", errors=pre["est"], **common))
    else:
        outcomes.append(_TrialOutcome(mode="precoded-est", errors=pre["est"], **common))
        outcomes.append(_TrialOutcome(mode="precoded-perfect", errors=pre["perfect"], **common))

    est_rect = extract_support(h_full, cfg.eps_supp)
    plan_conv = FramePlan.conventional(cfg.grid, guard=cfg.guard)
    budget_conv = _mode_budget(cfg, plan_conv.n_data, eta_conv)
    conv = _conventional_trial(cfg, h_full, est_rect, budget_conv, np.random.default_rng(conv_ss))
    outcomes.append(
        _TrialOutcome(mode="conventional", errors=conv["errors"], symbols=conv["symbols"])
    )
    return outcomes


def _papr_trial(
    cfg: CampaignConfig,
    h_restricted: DDFilter,
    rect: SupportRect,
    rng: np.random.Generator,
) -> list[_TrialOutcome]:
    """PAPR of one frame with and without the prefilter, same symbols."""
    grid = cfg.grid
    budget = _mode_budget(cfg, grid.M * grid.N - 1, cfg.eta)
    sol = _solve_prefilter(grid, h_restricted, rect, budget.rho)
    plan = FramePlan.precoded(grid)
    bps = int(math.log2(cfg.qam_order))
    bits = rng.integers(0, 2, size=plan.n_data * bps)
    syms = qam_map(bits, cfg.qam_order)
    out = []
    for mode, filt in (("precoded", sol.prefilter), ("non-precoded", DDFilter.delta(grid))):
        x = build_frame_precoded(syms, plan, budget, filt)
        out.append(
            _TrialOutcome(
                mode=mode, errors=0, symbols=plan.n_data, papr_db=papr_db(inverse_dzt(x))
            )
        )
    return out


def _run_points(cfg: CampaignConfig) -> list[list[list[_TrialOutcome]]]:
    """All trials, grouped per point, reduced in deterministic trial order."""
    tasks = [
        (cfg, pi, ti, value)
        for pi, value in enumerate(cfg.sweep)
        for ti in range(cfg.frames)
    ]
    if cfg.workers == 1:
        results = [_campaign_trial(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_campaign_trial, tasks, chunksize=8))
    per_point: list[list[list[_TrialOutcome]]] = [[] for _ in cfg.sweep]
    for (_, pi, _, _), outcome in zip(tasks, results):
        per_point[pi].append(outcome)
    return per_point


def _mean_db(vals: list[float]) -> float:
    return float(np.mean([10.0 * math.log10(v) for v in vals])) if vals else math.nan


def _aggregate_point(
    cfg: CampaignConfig, value: float, trials: list[list[_TrialOutcome]]
) -> list[PointResult]:
    modes: dict[str, list[_TrialOutcome]] = {}
    for trial in trials:
        for rec in trial:
            modes.setdefault(rec.mode, []).append(rec)
    points = []
    for mode, recs in modes.items():
        errors = sum(r.errors for r in recs)
        symbols = sum(r.symbols for r in recs)
        ser = errors / symbols
        ci = _WALD_Z * math.sqrt(max(ser * (1.0 - ser), 0.0) / symbols)
        gammas = [r.gamma for r in recs if not math.isnan(r.gamma)]
        locs = [r.localization for r in recs if not math.isnan(r.localization)]
        emps = [r.emp_sinr for r in recs if not math.isnan(r.emp_sinr)]
        n_data = symbols // len(recs)
        points.append(
            PointResult(
                sweep_value=value,
                mode=mode,
                err_count=errors,
                sym_count=symbols,
                ser=ser,
                ci_half=ci,
                mean_gamma_db=_mean_db(gammas),
                mean_localization=float(np.mean(locs)) if locs else math.nan,
                mean_emp_sinr_db=_mean_db(emps),
                se_proxy=spectral_efficiency_proxy(
                    ser, n_data, cfg.qam_order, cfg.grid, cfg.pulse
                ),
            )
        )
    points.sort(key=lambda p: p.mode)
    return points


def run_campaign(cfg: CampaignConfig) -> CampaignResult:
    """Run the configured experiment; dispatches on cfg.experiment."""
    try:
        per_point = _run_points(cfg)
    except CampaignError:
        raise
    except Exception as exc:  # no silent frame drops: abort with provenance
        raise CampaignError(f"campaign frame failed: {exc}") from exc

    papr: dict[str, list[float]] = {}
    points: list[PointResult] = []
    for value, trials in zip(cfg.sweep, per_point):
        if cfg.experiment == "papr":
            for trial in trials:
                for rec in trial:
                    papr.setdefault(rec.mode, []).append(rec.papr_db)
        else:
            points.extend(_aggregate_point(cfg, value, trials))
    return CampaignResult(
        config=cfg,
        points=tuple(points),
        papr={m: tuple(v) for m, v in papr.items()},
    )


def run_ser_vs_pdr(cfg: CampaignConfig) -> CampaignResult:
    """SER against the pilot-to-data power ratio, both modes on one eta axis."""
    return run_campaign(replace(cfg, experiment="ser-vs-pdr"))


def run_ser_vs_doppler(cfg: CampaignConfig) -> CampaignResult:
    """SER against nu_max for precoded perfect/estimated CSI and the baseline."""
    return run_campaign(replace(cfg, experiment="ser-vs-doppler"))


def run_papr(cfg: CampaignConfig) -> CampaignResult:
    """PAPR CCDF samples for precoded versus non-precoded frames."""
    return run_campaign(replace(cfg, experiment="papr"))


def run_se_vs_doppler(cfg: CampaignConfig) -> CampaignResult:
    """Spectral-efficiency proxy against nu_max (uncoded; labeled as such)."""
    return run_campaign(replace(cfg, experiment="se-vs-doppler"))


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def write_campaign_csv(result: CampaignResult, path, comment: str | None = None) -> None:
    """Campaign rows: sweep_value, mode, ser, err_count, sym_count, ci_half, ..."""
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("sweep_value,mode,ser,err_count,sym_count,ci_half,mean_gamma_db,mean_localization\n")
        for p in result.points:
            fh.write(
                f"{p.sweep_value!r},{p.mode},{p.ser!r},{p.err_count},{p.sym_count},"
                f"{p.ci_half!r},{p.mean_gamma_db!r},{p.mean_localization!r}\n"
            )


def ccdf_points(samples) -> list[tuple[float, float]]:
    """(threshold, fraction of samples strictly above threshold) at each sample."""
    arr = np.sort(np.asarray(samples, dtype=float))
    n = len(arr)
    return [(float(v), float((arr > v).sum()) / n) for v in arr]


def papr_at_ccdf(samples, level: float) -> float:
    """Smallest PAPR threshold whose CCDF is <= level."""
    for v, c in ccdf_points(samples):
        if c <= level:
            return v
    return float(np.max(samples))


def write_papr_ccdf_csv(result: CampaignResult, path, comment: str | None = None) -> None:
    """PAPR CCDF rows: papr_db, ccdf, mode."""
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("papr_db,ccdf,mode\n")
        for mode, samples in sorted(result.papr.items()):
            for v, c in ccdf_points(samples):
                fh.write(f"{v!r},{c!r},{mode}\n")
