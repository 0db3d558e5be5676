"""Coverage-guided fuzzing for small image-classifier neural networks."""

from neuronfuzz.model import (
    ActivationTrace,
    Layer,
    Model,
    ModelFormatError,
    forward_with_trace,
    load_model,
    neuron_values,
    quantize_model,
    save_model,
)
from neuronfuzz.coverage import (
    CoverageState,
    CriterionConfig,
    NeuronProfile,
    coverage_items,
    coverage_ratio,
    load_profile,
    profile_dataset,
    save_profile,
    update_and_gain,
)
from neuronfuzz.mutation import (
    MutationConfig,
    Seed,
    apply_transform,
    constraint_satisfied,
    mutate,
    mutation_potential,
)
from neuronfuzz.scheduler import (
    Batch,
    PoolEntry,
    ScheduleConfig,
    batch_probability,
    power_schedule,
    sample_seeds,
    select_next,
)
from neuronfuzz.fuzzer import (
    FailedTest,
    FuzzConfig,
    Fuzzer,
    FuzzReport,
    fuzz_loop,
    is_failed_test,
    preprocess_seeds,
    quant_diff_run,
)

__version__ = "0.1.0"
