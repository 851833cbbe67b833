"""Spherical-CNN vs fully-connected FA estimation on synthetic phantoms."""

__version__ = "0.1.0"

from .tensor import (  # noqa: F401
    Acquisition,
    DiffusionTensor,
    EigenDecomposition,
    adc,
    eigendecompose,
    fit_dt_exact,
    fit_dt_lls,
    fractional_anisotropy,
    predict_signal,
    reorient_dt,
)
from .sphere import (  # noqa: F401
    Rotation,
    SHCoeffs,
    SphGrid,
    SphSignal,
    power_spectrum,
    random_rotation,
    rotate_coeffs,
    sample_adc,
    sht_forward,
    sht_inverse,
)
from .schemes import (  # noqa: F401
    GradientScheme,
    condition_number,
    design_matrix,
    electrostatic_energy,
    match_subset,
    optimize_jones,
    optimize_skare,
)
from .nn import (  # noqa: F401
    ModelSpec,
    NetworkModel,
    TrainConfig,
    adam_step,
    forward,
    init_model,
    load_model,
    loss_and_grad,
    predict_batch,
    save_model,
    train,
)
from .datagen import (  # noqa: F401
    PhantomConfig,
    VoxelRecord,
    add_rician_noise,
    build_dataset,
    load_dataset,
    restrict_orientation,
    sample_ground_truth_dt,
    save_dataset,
)
from .metrics import (  # noqa: F401
    BinnedRmse,
    equivariance_error,
    paired_ttest,
    rmse_binned,
    sphere_tile_map,
    student_t_cdf,
)
