"""Region-to-region acoustic transfer function reconstruction.

Reconstructs complex transfer functions between a continuously varying
source region and receiver region from sparse measurements.  The main
method is a permutation-invariant physics-informed network (a shared
feature extractor over receiver and source positions, summed and decoded,
trained with a Helmholtz-residual penalty); a reciprocity-symmetric kernel
ridge regression serves as the baseline, and analytic point-source fields
make every component verifiable without measured data.
"""

__version__ = "0.1.0"

from .core import (
    ATFDataset,
    ATFSample,
    ComplexPressure,
    DomainBox,
    Position3,
    ScenarioConfig,
    default_scenario,
    load_dataset,
    load_scenario,
    save_dataset,
    save_scenario,
    validate_dataset,
    wavenumber_of,
)
from .models import (
    DeepSetModel,
    InputNorm,
    MLPSpec,
    ModelMeta,
    PlainModel,
    as_scalar_field,
    forward,
    forward_plain,
    init_deepset,
    init_plain,
    load_model,
    predict_complex,
    save_model,
)
from .training import (
    CollocationSet,
    LossReport,
    TrainConfig,
    TrainingDiverged,
    data_loss,
    pde_loss,
    sample_collocation,
    scenario_collocation,
    total_loss,
    train,
    train_all_bins,
)
from .krr import KernelConfig, KRRModel, fit, kernel_eval, predict, select_regularization
from .oracle import (
    RIRRecord,
    green_floor_reflection,
    green_free_field,
    helmholtz_residual_numeric,
    ingest_rir_directory,
    rir_to_atf,
    synth_dataset,
)
from .evaluation import (
    NMSETable,
    compare_methods,
    evaluate_method,
    export_heatmap,
    nmse,
    run_ablation,
)
