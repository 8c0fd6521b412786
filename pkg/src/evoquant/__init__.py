"""Joint evolutionary search of cell architectures and quantization policies."""

from .containers import (
    load_float_model,
    load_quantized_model,
    save_float_model,
    save_quantized_model,
)
from .datasets import Dataset, load_csv, make_blobs
from .evolution import (
    FixedModelEvaluator,
    Individual,
    SearchConfig,
    SearchHistory,
    SurrogateEvaluator,
    ToyEvaluator,
    init_population,
    population_stats,
    run_search,
    sweep,
)
from .evaluator import (
    EvalResult,
    SurrogateSpec,
    TrainHyper,
    evaluate_quantized,
    float_accuracy,
    surrogate_eval,
    train,
)
from .genome import (
    ModelGenome,
    OPERATIONS,
    SpaceConfig,
    genome_from_json,
    genome_to_json,
    mutate_architecture,
    mutate_policy,
    random_genome,
    space_cardinality,
    validate,
)
from .network import NetworkPlan, StackingProfile, assemble
from .objective import FitnessRecord, fitness, pareto_front
from .quantizer import (
    DEFAULT_BUCKET_SIZE,
    ExemptionRules,
    QuantizedTensor,
    ScaleParams,
    apply_policy,
    dequantize_tensor,
    quantize_tensor,
    quantize_unit,
    scale_bucket,
    theoretical_bits,
    theoretical_ratio,
)
from .tensors import FloatModel, QuantizedModel, WeightTensor, float_size_bits

__version__ = "0.1.0"
