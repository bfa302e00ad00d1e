"""Batch front-end: parse a flat key=value config, run a subcommand, emit artifacts.

Subcommands: effchan, precode, ser-vs-pdr, ser-vs-doppler, papr,
se-vs-doppler.  Every run writes CSV artifacts plus PNG renderings (unless
--no-figures) and a parseable echo of the effective configuration; any
output can be regenerated bit-identically from that echo.

Exit codes: 0 success, 2 configuration error, 3 numerical/campaign error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report
from .dd_core import GridParams
from .precoder import design_prefilter, localization_metric, write_prefilter_csv
from .pulse_channel import (
    ChannelRealization,
    PulseParams,
    draw_veh_a,
    effective_channel_taps,
    write_heatmap_csv,
)
from .sim_harness import (
    CampaignConfig,
    run_campaign,
    write_campaign_csv,
    write_papr_ccdf_csv,
)

EXPERIMENTS = ("effchan", "precode", "ser-vs-pdr", "ser-vs-doppler", "papr", "se-vs-doppler")

_DEFAULT_SWEEPS = {
    "ser-vs-pdr": "-20,-16,-12,-10,-8,-4,0,4,8",
    "ser-vs-doppler": "0.5,1,2,5",
    "se-vs-doppler": "0.5,1,2,5",
}


class ConfigError(ValueError):
    """Bad configuration file, key, or value."""


def _parse_int(s):
    try:
        return int(s)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {s!r}") from exc


def _parse_float(s):
    try:
        return float(s)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {s!r}") from exc


def _parse_sweep(s):
    try:
        return tuple(float(v) for v in s.split(","))
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {s!r}") from exc


def _parse_choice(*choices):
    def parse(s):
        if s not in choices:
            raise ConfigError(f"expected one of {choices}, got {s!r}")
        return s

    return parse


# key -> parser; defaults that depend on the experiment are filled in
# _experiment_defaults below.
_KEY_PARSERS = {
    "M": _parse_int,
    "N": _parse_int,
    "nu_p": _parse_float,
    "beta_tau": _parse_float,
    "beta_nu": _parse_float,
    "Q": _parse_int,
    "lobes": _parse_int,
    "g": _parse_int,
    "eps_supp": _parse_float,
    "eps_det": _parse_float,
    "qam_order": _parse_int,
    "rho_db": _parse_float,
    "eta_db": _parse_float,
    "conv_eta_db": _parse_float,
    "total_power_db": _parse_float,
    "power_mode": _parse_choice("additive", "fixed_total"),
    "nu_max_khz": _parse_float,
    "frames": _parse_int,
    "seed": _parse_int,
    "sweep": _parse_sweep,
    "workers": _parse_int,
    "channel": _parse_choice("veh_a", "ideal"),
}

_BASE_DEFAULTS = {
    "M": 18,
    "N": 18,
    "nu_p": 30000.0,
    "beta_tau": 0.2,
    "beta_nu": 0.2,
    "Q": 16,
    "lobes": 10,
    "g": 4,
    "eps_supp": 1e-4,
    "eps_det": 1e-3,
    "qam_order": 4,
    "rho_db": 15.0,
    "eta_db": -10.0,
    "conv_eta_db": 0.0,
    "nu_max_khz": 1.0,
    "seed": 0,
    "workers": 1,
    "channel": "veh_a",
}


def _experiment_defaults(experiment: str) -> dict:
    d = dict(_BASE_DEFAULTS)
    d["frames"] = 1000 if experiment == "papr" else 200
    if experiment == "se-vs-doppler":
        d["total_power_db"] = 15.4
    elif experiment == "ser-vs-pdr":
        d["total_power_db"] = 15.0
    else:
        d["total_power_db"] = 20.0
    d["power_mode"] = (
        "fixed_total"
        if experiment in ("ser-vs-pdr", "ser-vs-doppler", "se-vs-doppler")
        else "additive"
    )
    d["sweep"] = _parse_sweep(_DEFAULT_SWEEPS.get(experiment, "0"))
    return d


def parse_config(text: str, experiment: str, overrides: list[str] | None = None) -> CampaignConfig:
    """Parse flat key=value lines (# comments) into a validated CampaignConfig.

    Unknown keys are rejected by name; value errors report the line number.
    CLI overrides (more key=value strings) are applied after the file parse.
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    raw = dict(_experiment_defaults(experiment))

    def apply(key: str, value: str, where: str):
        if key not in _KEY_PARSERS:
            raise ConfigError(f"{where}: unknown config key {key!r}")
        try:
            raw[key] = _KEY_PARSERS[key](value.strip())
        except ConfigError as exc:
            raise ConfigError(f"{where}: key {key!r}: {exc}") from exc

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line.strip()!r}")
        key, value = stripped.split("=", 1)
        apply(key.strip(), value, f"line {lineno}")
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r}: expected key=value")
        key, value = ov.split("=", 1)
        apply(key.strip(), value, f"override {ov!r}")

    try:
        grid = GridParams.from_periods(raw["M"], raw["N"], raw["nu_p"])
        pulse = PulseParams(
            beta_tau=raw["beta_tau"],
            beta_nu=raw["beta_nu"],
            truncation_lobes=raw["lobes"],
            quad_oversampling=raw["Q"],
        )
        campaign_experiment = experiment if experiment in ("ser-vs-pdr", "ser-vs-doppler", "papr", "se-vs-doppler") else "ser-vs-pdr"
        return CampaignConfig(
            experiment=campaign_experiment,
            grid=grid,
            pulse=pulse,
            sweep=tuple(raw["sweep"]),
            frames=raw["frames"],
            seed=raw["seed"],
            rho=10.0 ** (raw["rho_db"] / 10.0),
            eta=10.0 ** (raw["eta_db"] / 10.0),
            conv_eta=10.0 ** (raw["conv_eta_db"] / 10.0),
            total_power=10.0 ** (raw["total_power_db"] / 10.0),
            power_mode=raw["power_mode"],
            nu_max=raw["nu_max_khz"] * 1e3,
            qam_order=raw["qam_order"],
            guard=raw["g"],
            eps_supp=raw["eps_supp"],
            eps_det=raw["eps_det"],
            workers=raw["workers"],
            channel=raw["channel"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _db(linear: float) -> float:
    return round(10.0 * np.log10(linear), 10)


def config_echo_lines(cfg: CampaignConfig) -> list[str]:
    """Effective configuration as key=value lines, parseable by parse_config."""
    pairs = [
        ("M", cfg.grid.M),
        ("N", cfg.grid.N),
        ("nu_p", cfg.grid.nu_p),
        ("beta_tau", cfg.pulse.beta_tau),
        ("beta_nu", cfg.pulse.beta_nu),
        ("Q", cfg.pulse.quad_oversampling),
        ("lobes", cfg.pulse.truncation_lobes),
        ("g", cfg.guard),
        ("eps_supp", cfg.eps_supp),
        ("eps_det", cfg.eps_det),
        ("qam_order", cfg.qam_order),
        ("rho_db", _db(cfg.rho)),
        ("eta_db", _db(cfg.eta)),
        ("conv_eta_db", _db(cfg.conv_eta)),
        ("total_power_db", _db(cfg.total_power)),
        ("power_mode", cfg.power_mode),
        ("nu_max_khz", cfg.nu_max / 1e3),
        ("frames", cfg.frames),
        ("seed", cfg.seed),
        ("sweep", ",".join(repr(v) for v in cfg.sweep)),
        ("workers", cfg.workers),
        ("channel", cfg.channel),
    ]
    return [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in pairs]


def config_echo(cfg: CampaignConfig) -> str:
    """Single-line config echo used in CSV header comments."""
    return " ".join(config_echo_lines(cfg))


def _channel_for(cfg: CampaignConfig, rng: np.random.Generator) -> ChannelRealization:
    if cfg.channel == "ideal":
        return ChannelRealization(paths=((1.0 + 0j, 0.0, 0.0),), nu_max=0.0)
    return draw_veh_a(cfg.nu_max, rng)


def dispatch(experiment: str, cfg: CampaignConfig, out_dir: Path, figures: bool = True) -> int:
    """Run one subcommand and write its artifacts into out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = config_echo(cfg)
    (out_dir / "config_echo.txt").write_text(
        f"# effective config for {experiment}\n" + "\n".join(config_echo_lines(cfg)) + "\n"
    )
    name = experiment.replace("-", "_")

    if experiment == "effchan":
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
        h = effective_channel_taps(_channel_for(cfg, rng), cfg.grid, cfg.pulse)
        write_heatmap_csv(h, out_dir / "effchan.csv", comment=echo)
        if figures:
            report.save_heatmap(h, out_dir / "effchan.png", "effective DD channel taps")
        return 0

    if experiment == "precode":
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
        h = effective_channel_taps(_channel_for(cfg, rng), cfg.grid, cfg.pulse)
        sol, _ = design_prefilter(h, cfg.rho)
        write_prefilter_csv(sol, out_dir / "precode_taps.csv", comment=echo)
        write_heatmap_csv(sol.precoded, out_dir / "precode_heatmap.csv", comment=echo)
        gamma_db = 10.0 * np.log10(sol.gamma)
        print(f"gamma_db={gamma_db!r}")
        print(f"localization={localization_metric(sol.precoded)!r}")
        if figures:
            report.save_heatmap(sol.precoded, out_dir / "precode.png", "precoded channel taps")
        return 0

    result = run_campaign(cfg)
    if experiment == "papr":
        write_papr_ccdf_csv(result, out_dir / "papr_ccdf.csv", comment=echo)
        if figures:
            report.save_papr_ccdf(result, out_dir / "papr_ccdf.png", "PAPR CCDF")
        return 0

    write_campaign_csv(result, out_dir / f"{name}.csv", comment=echo)
    if figures:
        if experiment == "se-vs-doppler":
            report.save_se_curves(result, out_dir / f"{name}.png", "spectral efficiency (uncoded proxy)")
            for v, r in report.se_ratio(result).items():
                print(f"se_ratio nu_max_khz={v!r} precoded/conventional={r!r}")
        else:
            xlabel = "PDR (dB)" if experiment == "ser-vs-pdr" else r"$\nu_{max}$ (kHz)"
            report.save_ser_curves(result, out_dir / f"{name}.png", xlabel, experiment)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="zakotfs",
        description="Precoded delay-Doppler link simulator: diagnostics and Monte-Carlo campaigns.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("-c", "--config", type=Path, default=None, help="key=value config file")
        p.add_argument("-o", "--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        p.add_argument(
            "overrides", nargs="*", metavar="key=value", help="config overrides, applied last"
        )
    args = parser.parse_args(argv)

    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, args.command, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return dispatch(args.command, cfg, args.out, figures=not args.no_figures)
    except Exception as exc:
        print(f"error [{type(exc).__module__}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
