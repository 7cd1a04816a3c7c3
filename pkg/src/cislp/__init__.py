"""Symbol-level precoding toolkit for the multiuser MISO downlink.

Exploits constructive interference among M-PSK streams: closed-form and
optimization-based precoders, theoretical bounds, and a Monte-Carlo
harness with CSV output.
"""

from .bounds import (
    BoundResult,
    genie_min_power,
    genie_min_power_from_channel,
    multicast_max_sumrate,
    multicast_min_power,
    multicast_min_power_rank1,
)
from .ci_closed_form import (
    CiPrecoderOutput,
    CimrtState,
    RotationMatrixPhi,
    cimrt_precoder,
    cizf_precoder,
    nmrt_factorization,
    rotation_matrix_phi,
)
from .ci_power import (
    CimmSolution,
    CipmSolution,
    SnrTargets,
    cimm_solve,
    cipm_solve,
    equivalent_multicast_channel,
)
from .ci_sumrate import (
    McsTable,
    SumRateSolution,
    cisr_g,
    cisr_pa,
    genie_sumrate,
    select_mcs,
)
from .conventional_precoders import (
    LinearPrecoder,
    conventional_sinr,
    mmse_precoder,
    nmrt_precoder,
    zf_precoder,
)
from .harness import (
    MetricRecord,
    ScenarioConfig,
    energy_efficiency,
    parse_config,
    run_montecarlo,
    write_csv,
)
from .linear_solvers import (
    BisectResult,
    LpSolution,
    RotationPairResult,
    SdpSolution,
    SvdFactors,
    bisect,
    hermitian_eig,
    solve_lp_min_sum,
    solve_real_linear,
    solve_rotation_pair,
    solve_sdp_min_trace,
    svd_decompose,
)
from .model_core import (
    ChannelMatrix,
    InterferenceReport,
    PskSymbol,
    SymbolVector,
    TransmitVector,
    ci_snr,
    classify_interference,
    cross_correlation,
    detect_psk,
    detection_correct,
    generate_channel,
    interference_factor,
    psk_point,
    received_signal,
)

__version__ = "0.1.0"
