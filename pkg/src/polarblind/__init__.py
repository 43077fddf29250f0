"""Blind channel estimation and data detection for near-field XL-MIMO uplinks.

The package covers the full pipeline: near-field array geometry and polar
grid dictionaries, precoded uplink frames, blind on-grid sparse recovery with
rank-one factorization, gradient-based off-grid refinement, a pilot-based
OMP + zero-forcing benchmark, and a reproducible Monte Carlo harness.
"""

from . import errors
from .baseline import despread_pilot, dft_pilots, omp_channel_estimate, synthesize_pilot_frame, zf_detect
from .bcd import (
    BcdConfig,
    RefinementState,
    backtracking_step,
    effective_dictionary,
    grad_reduced_inv_distance,
    grad_reduced_theta,
    init_from_support,
    objective_f,
    reduced_objective,
    run_bcd,
    update_delta,
    update_gamma,
)
from .bomp import (
    BompOutput,
    BompUserEstimate,
    KnownPaths,
    ResidualThreshold,
    correlation,
    factorize_align,
    ls_update,
    run_bomp,
    select_atom,
    update_residual,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    bench_bcd,
    bench_bomp,
    config_from_dict,
    emit_csv,
    emit_plotdata,
    fit_loglog_slope,
    load_config,
    run_experiment,
    run_trial,
)
from .geometry import (
    ArrayGeometry,
    PathParams,
    PolarDictionary,
    UserChannel,
    build_polar_dictionary,
    channel_from_paths,
    element_distance,
    fraunhofer_distance,
    sample_user_channel,
    steering_deriv_inv_distance,
    steering_deriv_inv_distance_matrix,
    steering_deriv_theta,
    steering_deriv_theta_matrix,
    steering_matrix,
    steering_vector,
)
from .numkernel import principal_pair, projector, pseudoinverse
from .waveform import (
    AugmentedData,
    Frame,
    FrameConfig,
    PrecoderSet,
    constellation,
    detect_data,
    dump_frame,
    effective_received,
    generate_precoders,
    make_augmented_data,
    qam_demodulate,
    qam_modulate,
    rescale_by_pilot,
    synthesize_frame,
)

__version__ = "0.1.0"
