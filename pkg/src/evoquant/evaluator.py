"""Genome fitness measurement: train, quantize, and score toy networks.

Cell operations act on feature vectors through small dense transforms:
  sep_conv_3   one learned affine map + tanh
  sep_conv_5   two stacked learned affine maps, tanh after each
  avg_pool_3   fixed window-3 mean over adjacent features (edge-clamped)
  max_pool_3   fixed window-3 max over adjacent features (edge-clamped)
  identity     pass-through
  zero         zero vector
The transforms differ in parameter count and expressivity, which is the
property the mixed-precision policy has to trade off against storage.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .containers import quantized_model_bytes
from .datasets import Dataset, dataset_descriptor_json
from .genome import ModelGenome, genome_digest, genome_from_json, genome_to_json
from .network import NetworkPlan, StackingProfile, assemble
from .quantizer import (
    DEFAULT_BUCKET_SIZE,
    ExemptionRules,
    apply_policy,
    dequantize_tensor,
)
from .tensors import FloatModel, QuantizedModel, WeightTensor


class EvaluationError(RuntimeError):
    """Raised when an evaluation cannot produce a usable measurement."""


@dataclass(frozen=True)
class TrainHyper:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.05
    weight_decay: float = 1e-4
    seed: int = 0
    grad_clip: float = 5.0  # global gradient norm cap; 0 disables

    def __post_init__(self) -> None:
        if min(self.epochs, self.batch_size) < 1 or self.learning_rate <= 0:
            raise ValueError("hyperparameters must be positive")
        if self.weight_decay < 0 or self.grad_clip < 0:
            raise ValueError("weight decay and gradient clip must be non-negative")

    def to_json(self) -> str:
        return json.dumps(
            {
                "epochs": self.epochs,
                "batch_size": self.batch_size,
                "learning_rate": self.learning_rate,
                "weight_decay": self.weight_decay,
                "seed": self.seed,
                "grad_clip": self.grad_clip,
            },
            sort_keys=True,
        )


@dataclass(eq=False)
class EvalResult:
    accuracy: float
    size_bytes: int
    quantized_model: QuantizedModel | None = None


def _init_params(
    plan: NetworkPlan, input_dim: int, num_classes: int, seed: int
) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for spec in plan.param_specs(input_dim, num_classes):
        if len(spec.shape) == 1:
            params[spec.name] = np.zeros(spec.shape, dtype=np.float64)
        else:
            fan_in = spec.shape[0]
            params[spec.name] = rng.standard_normal(spec.shape) / np.sqrt(fan_in)
    return params


def _op_forward(kind: str, x: ad.Var, params: dict[str, ad.Var], prefix: str) -> ad.Var:
    if kind == "sep_conv_3":
        return ad.tanh(ad.add_bias(ad.matmul(x, params[f"{prefix}.w0"]), params[f"{prefix}.b0"]))
    if kind == "sep_conv_5":
        h = ad.tanh(ad.add_bias(ad.matmul(x, params[f"{prefix}.w0"]), params[f"{prefix}.b0"]))
        return ad.tanh(ad.add_bias(ad.matmul(h, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    if kind == "avg_pool_3":
        return ad.avg_pool3(x)
    if kind == "max_pool_3":
        return ad.max_pool3(x)
    if kind == "identity":
        return x
    if kind == "zero":
        return ad.Var(np.zeros_like(x.value))
    raise ValueError(f"unknown operation {kind!r}")


def forward(plan: NetworkPlan, params: dict[str, ad.Var], X: np.ndarray) -> ad.Var:
    """Logits for a batch; wraps plain arrays in Vars if given."""
    if params and not isinstance(next(iter(params.values())), ad.Var):
        params = {k: ad.Var(v) for k, v in params.items()}
    h = ad.matmul(ad.Var(X), params["stem.weight"])
    prev1 = h
    prev2 = h
    for cell in plan.cells:
        j = cell.index
        ext1 = ad.matmul(prev1, params[f"cell{j}.prev1.proj"])
        ext2 = ad.matmul(prev2, params[f"cell{j}.prev2.proj"])
        outs: list[ad.Var] = []
        for c, combo in enumerate(cell.combinations):
            def resolve(idx: int) -> ad.Var:
                if idx == -1:
                    return ext1
                if idx == -2:
                    return ext2
                return outs[idx]

            a = _op_forward(combo.op_1, resolve(combo.input_1), params, f"cell{j}.comb{c}.op0")
            b = _op_forward(combo.op_2, resolve(combo.input_2), params, f"cell{j}.comb{c}.op1")
            outs.append(ad.add(a, b))
        cell_out = ad.matmul(ad.concat(outs), params[f"cell{j}.out.proj"])
        prev2 = prev1
        prev1 = cell_out
    logits = ad.add_bias(
        ad.matmul(prev1, params["classifier.weight"]), params["classifier.bias"]
    )
    return logits


def _accuracy_from_params(
    plan: NetworkPlan, params: dict[str, np.ndarray], data: Dataset
) -> float:
    X = data.features[data.val_idx]
    y = data.labels[data.val_idx]
    logits = forward(plan, params, X).value
    return float((logits.argmax(axis=1) == y).mean())


def _mean_loss(plan: NetworkPlan, params: dict[str, ad.Var], data: Dataset) -> float:
    X = data.features[data.train_idx]
    y = data.labels[data.train_idx]
    return float(ad.cross_entropy(forward(plan, params, X), y).value)


def train(
    plan: NetworkPlan,
    data: Dataset,
    hyper: TrainHyper,
    genome: ModelGenome | None = None,
    init_overrides: dict[str, np.ndarray] | None = None,
) -> FloatModel:
    """Mini-batch SGD with cross-entropy; deterministic for a fixed seed.

    Returns a float32 model whose tensors carry their cell tags, with enough
    metadata (genome, profile, dataset, hyper) to rebuild the plan later.
    """
    d = data.dim
    C = data.num_classes
    raw = _init_params(plan, d, C, hyper.seed)
    if init_overrides:
        for name, value in init_overrides.items():
            if name in raw and raw[name].shape == value.shape:
                raw[name] = value.astype(np.float64).copy()
    params = {k: ad.Var(v) for k, v in raw.items()}
    rng = np.random.default_rng(hyper.seed + 1)
    train_idx = data.train_idx
    X = data.features
    y = data.labels
    initial_loss = _mean_loss(plan, params, data)
    lr = hyper.learning_rate
    wd = hyper.weight_decay
    for _ in range(hyper.epochs):
        order = train_idx[rng.permutation(train_idx.size)]
        for start in range(0, order.size, hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            for v in params.values():
                v.grad = None
            loss = ad.cross_entropy(forward(plan, params, X[batch]), y[batch])
            if not np.isfinite(loss.value):
                raise EvaluationError("training diverged: non-finite loss")
            ad.backward(loss)
            grads = [v.grad for v in params.values() if v.grad is not None]
            if hyper.grad_clip > 0 and grads:
                total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
                if total > hyper.grad_clip:
                    scale = hyper.grad_clip / total
                    for g in grads:
                        g *= scale
            for v in params.values():
                if v.grad is not None:
                    v.value -= lr * (v.grad + wd * v.value)
    final_loss = _mean_loss(plan, params, data)
    spec_by_name = {s.name: s for s in plan.param_specs(d, C)}
    tensors = [
        WeightTensor(name, spec_by_name[name].shape, var.value, spec_by_name[name].cell_index)
        for name, var in params.items()
    ]
    metadata = {
        "profile": plan.profile.to_json(),
        "dataset": dataset_descriptor_json(data),
        "hyper": hyper.to_json(),
        "initial_loss": repr(initial_loss),
        "final_loss": repr(final_loss),
    }
    if genome is not None:
        metadata["genome"] = genome_to_json(genome)
        metadata["genome_digest"] = genome_digest(genome)
    return FloatModel(tensors, metadata, float_width_bits=32)


def plan_from_model(model: FloatModel | QuantizedModel) -> NetworkPlan:
    """Rebuild the layer plan from the genome/profile JSON in model metadata."""
    if "genome" not in model.metadata or "profile" not in model.metadata:
        raise ValueError("model metadata lacks genome/profile entries")
    genome = genome_from_json(model.metadata["genome"])
    profile = StackingProfile.from_json(model.metadata["profile"])
    return assemble(genome, profile)


def float_accuracy(model: FloatModel, data: Dataset, plan: NetworkPlan | None = None) -> float:
    plan = plan or plan_from_model(model)
    params = {t.name: t.values.astype(np.float64).reshape(t.shape) for t in model.tensors}
    return _accuracy_from_params(plan, params, data)


def quantized_accuracy(
    qmodel: QuantizedModel, data: Dataset, plan: NetworkPlan | None = None
) -> float:
    """Validation accuracy of a quantized model using dequantized weights."""
    plan = plan or plan_from_model(qmodel)
    params: dict[str, np.ndarray] = {}
    for qt in qmodel.tensors:
        params[qt.name] = dequantize_tensor(qt).values.reshape(qt.shape)
    for t in qmodel.exempt_tensors:
        params[t.name] = t.values.astype(np.float64).reshape(t.shape)
    return _accuracy_from_params(plan, params, data)


def evaluate_quantized(
    model: FloatModel,
    policy,
    data: Dataset,
    bucket_size: int = DEFAULT_BUCKET_SIZE,
    exemptions: ExemptionRules | None = None,
    plan: NetworkPlan | None = None,
) -> EvalResult:
    """Quantize per the policy, then score the dequantized weights on the
    validation split. Size is the serialized quantized-container byte count."""
    plan = plan or plan_from_model(model)
    qmodel = apply_policy(model, policy, bucket_size, exemptions)
    size = len(quantized_model_bytes(qmodel))
    accuracy = quantized_accuracy(qmodel, data, plan)
    return EvalResult(accuracy, size, qmodel)


@dataclass(frozen=True)
class SurrogateSpec:
    """Closed-form stand-in for train+quantize, for fast oracle testing.

    accuracy(g) = base_accuracy + accuracy_gain * m(g), where m is the
    weighted fraction of operation genes (both cells, both slots, weight 1)
    and policy entries (weight policy_weight) equal to the planted genome's.
    Input indices are deliberately ignored, so the maximum base+gain is
    attained by every input rewiring of the planted structure. The policy
    weight is non-commensurate with the op weight so that trading an op
    match for a policy match never produces an exact fitness tie (ties
    resolve by age and would stall tournament selection on plateaus).
    size(g) = 64 + sum_j bits_j * (16 + 8 * units_j) with units_j counting
    learned-map units (sep_conv_5: 2, sep_conv_3: 1) in the cell structure
    at position j.
    """

    planted: ModelGenome
    cell_roles: tuple[str, ...]
    base_accuracy: float = 0.5
    accuracy_gain: float = 0.4
    policy_weight: float = 0.7

    def __post_init__(self) -> None:
        if len(self.planted.policy) != len(self.cell_roles):
            raise ValueError("planted policy length must match cell roles")

    @property
    def max_accuracy(self) -> float:
        return self.base_accuracy + self.accuracy_gain


_OP_UNITS = {"sep_conv_5": 2, "sep_conv_3": 1}


def surrogate_eval(genome: ModelGenome, spec: SurrogateSpec) -> EvalResult:
    matches = 0.0
    genes = 0.0
    for mine, theirs in ((genome.normal, spec.planted.normal), (genome.reduction, spec.planted.reduction)):
        for c_mine, c_theirs in zip(mine.combinations, theirs.combinations):
            genes += 2.0
            matches += float(c_mine.op_1 == c_theirs.op_1)
            matches += float(c_mine.op_2 == c_theirs.op_2)
    for b_mine, b_theirs in zip(genome.policy, spec.planted.policy):
        genes += spec.policy_weight
        matches += spec.policy_weight * float(b_mine == b_theirs)
    accuracy = spec.base_accuracy + spec.accuracy_gain * (matches / genes)
    size = 64
    for role, bits in zip(spec.cell_roles, genome.policy):
        cell = genome.reduction if role == "reduction" else genome.normal
        units = sum(
            _OP_UNITS.get(c.op_1, 0) + _OP_UNITS.get(c.op_2, 0) for c in cell.combinations
        )
        size += bits * (16 + 8 * units)
    return EvalResult(float(accuracy), int(size), None)


@dataclass
class SharedParameterCache:
    """Optional cross-genome weight reuse.

    Positional entries key trained tensors by (cell position, combination,
    slot, op kind, widths) and seed initialization of later trainings; a
    separate memo maps architecture digests to fully trained models so two
    genomes differing only in policy reuse identical trained weights.
    """

    positional: dict[tuple, np.ndarray] = field(default_factory=dict)
    trained: dict[str, FloatModel] = field(default_factory=dict)

    def position_key(self, plan: NetworkPlan, name: str) -> tuple | None:
        if name.startswith("stem.") or name.startswith("classifier."):
            return (name,)
        cell_id = int(name.split(".")[0][4:])
        cell = plan.cells[cell_id]
        if ".comb" in name:
            parts = name.split(".")
            c = int(parts[1][4:])
            s = int(parts[2][2:])
            op = (cell.combinations[c].op_1, cell.combinations[c].op_2)[s]
            return (cell_id, c, s, op, cell.width, parts[3])
        return (cell_id, name.split(".", 1)[1], cell.prev1_width, cell.prev2_width, cell.width)

    def overrides_for(self, plan: NetworkPlan, input_dim: int, num_classes: int) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for spec in plan.param_specs(input_dim, num_classes):
            key = self.position_key(plan, spec.name)
            if key is not None and key in self.positional:
                cached = self.positional[key]
                if cached.shape == spec.shape:
                    out[spec.name] = cached
        return out

    def store(self, plan: NetworkPlan, model: FloatModel) -> None:
        for t in model.tensors:
            key = self.position_key(plan, t.name)
            if key is not None:
                self.positional[key] = t.values.astype(np.float64).reshape(t.shape)
