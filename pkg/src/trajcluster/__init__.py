"""Longitudinal trajectory clustering.

Specify a method with :func:`spec_new`, fit it with :func:`estimate`, and
evaluate or compare fitted models with :func:`internal_metric` and
:func:`external_metric`.
"""

from trajcluster import algorithms  # noqa: F401  (registers the backends)
from trajcluster.dataset import (
    Dataset,
    GroundTruth,
    PapConfig,
    TrajectoryMatrix,
    from_matrix,
    impute_copy_mean,
    load_long_csv,
    simulate_pap,
    to_aligned_matrix,
)
from trajcluster.method import (
    FitResult,
    Method,
    MethodSpec,
    estimate,
    get_method,
    list_methods,
    register_method,
    spec_new,
    spec_permute,
    spec_update,
)
from trajcluster.harness import (
    BootRecipe,
    boot_sample,
    convergence_rate,
    reestimate,
    run_batch,
    run_boot,
    run_rep,
    save_batch,
)
from trajcluster.metrics import (
    define_external_metric,
    define_internal_metric,
    external_metric,
    internal_metric,
    list_metric_names,
    pairwise_external,
)
from trajcluster.model import (
    CenterPredictor,
    ClusterModel,
    FailedFit,
    ModelList,
    PolynomialPredictor,
    assign_rows,
    model_list,
    partition_model,
)

__version__ = "0.1.0"
