"""Precoded delay-Doppler (Zak-OTFS) link simulator."""

from .dd_core import (
    AliasingError,
    DDFilter,
    GridError,
    GridParams,
    QuasiPeriodicSignal,
    TimeSamples,
    embed_symbols,
    forward_dzt,
    inverse_dzt,
    papr_db,
    qp_eval,
    twisted_conv_ff,
    twisted_conv_fs,
)
from .precoder import (
    PrecoderSolution,
    PrefilterLayout,
    design_prefilter,
    localization_metric,
    optimal_prefilter,
    sinr,
    twisted_conv_matrix,
)
from .pulse_channel import (
    ChannelRealization,
    CrystallineError,
    PulseParams,
    SupportRect,
    design_support,
    draw_veh_a,
    effective_channel_taps,
    extract_support,
    restrict_to_support,
    rrc_value,
)
from .sim_harness import (
    CampaignConfig,
    CampaignResult,
    run_campaign,
    run_papr,
    run_se_vs_doppler,
    run_ser_vs_doppler,
    run_ser_vs_pdr,
)
from .transceiver import (
    FramePlan,
    LinkBudget,
    apply_channel,
    build_frame_conventional,
    build_frame_precoded,
    channel_matrix,
    estimate_origin_tap,
    estimate_taps_from_pilot,
    joint_lmmse_equalize,
    one_tap_equalize,
    qam_demap,
    qam_map,
)

__version__ = "0.1.0"
