"""Command-line surface: quantize models, run searches, export reports."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .containers import (
    load_float_model,
    load_quantized_model,
    save_float_model,
    save_quantized_model,
    sniff_container,
)
from .datasets import dataset_from_descriptor
from .evaluator import EvaluationError, float_accuracy, plan_from_model, quantized_accuracy
from .evolution import (
    MODE_POLICY_ONLY,
    SearchConfig,
    ToyEvaluator,
    build_evaluator,
    individual_eval_seed,
    run_search,
    sweep,
)
from .genome import genome_from_json
from .network import StackingProfile
from .objective import fitness, pareto_front
from .quantizer import (
    ExemptionRules,
    apply_policy,
    dequantize_tensor,
    theoretical_bits,
    theoretical_ratio,
)
from .reports import (
    history_points,
    plot_fitness_curve,
    plot_pareto,
    plot_sweep,
    read_history,
    write_curve_csv,
    write_pareto_csv,
)
from .tensors import FloatModel, WeightTensor, float_size_bits

MB = 10**6


class CliError(ValueError):
    """User-facing validation problem; maps to exit code 2."""


def _fmt_size(nbytes: int) -> str:
    return f"{nbytes} bytes ({nbytes / MB:.4f} MB)"


def _parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip() != ""]


def _load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc


def _require_seed(args, data: dict) -> dict:
    if args.seed is not None:
        data = dict(data)
        data["master_seed"] = int(args.seed)
    elif "master_seed" not in data:
        raise CliError("a seed is required: pass --seed or put master_seed in the config")
    return data


def _exemptions(args) -> ExemptionRules:
    names = frozenset(args.exempt_names.split(",")) if args.exempt_names else frozenset()
    cells = frozenset(_parse_int_list(args.exempt_cells)) if args.exempt_cells else frozenset()
    return ExemptionRules(names, cells)


def cmd_quantize(args) -> int:
    model = load_float_model(args.model)
    cells = model.cell_count
    if cells == 0:
        raise CliError("model has no cell tags; nothing to quantize")
    uniform_bits = None
    if args.policy:
        policy = _parse_int_list(args.policy)
        if len(policy) != cells:
            raise CliError(f"policy length mismatch: {len(policy)} entries for {cells} cells")
        if len(set(policy)) == 1:
            uniform_bits = policy[0]
    elif args.bits:
        uniform_bits = int(args.bits)
        policy = [uniform_bits] * cells
    else:
        raise CliError("pass --bits for a uniform policy or --policy for a per-cell list")
    exemptions = _exemptions(args)
    qmodel = apply_policy(model, policy, args.bucket_size, exemptions)
    nbytes = save_quantized_model(qmodel, args.out)
    f = model.float_width_bits
    float_bytes = float_size_bits(model) // 8
    quantized_n = sum(qt.value_count for qt in qmodel.tensors)
    if uniform_bits is not None:
        ratio = theoretical_ratio(args.bucket_size, f, uniform_bits)
    else:
        nominal = sum(
            theoretical_bits(qt.value_count, qt.bit_width, args.bucket_size, f)
            for qt in qmodel.tensors
        )
        ratio = (f * quantized_n) / nominal if nominal else float("nan")
    bound = max(
        (p.span * 2.0 ** -(qt.bit_width + 1) for qt in qmodel.tensors for p in qt.scales),
        default=0.0,
    )
    float_file = Path(args.model).stat().st_size
    print(f"float size: {_fmt_size(float_bytes)} payload, file {_fmt_size(float_file)}")
    print(f"quantized size: {_fmt_size(nbytes)}")
    print(f"theoretical ratio: {ratio:.3f}")
    print(f"actual ratio: {float_file / nbytes:.3f}")
    print(f"error bound (max over buckets): {bound!r}")
    print(f"wrote {args.out}")
    return 0


def cmd_dequantize(args) -> int:
    qmodel = load_quantized_model(args.model)
    tensors = [dequantize_tensor(qt) for qt in qmodel.tensors]
    tensors.extend(
        WeightTensor(t.name, t.shape, t.values.astype(np.float64), t.cell_index)
        for t in qmodel.exempt_tensors
    )
    model = FloatModel(tensors, qmodel.metadata, float_width_bits=64)
    nbytes = save_float_model(model, args.out)
    print(f"dequantized {len(qmodel.tensors)} tensors (+{len(qmodel.exempt_tensors)} exempt)")
    print(f"wrote {args.out}: {_fmt_size(nbytes)}")
    return 0


def _write_search_outputs(history, config: SearchConfig, evaluator, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    history.write_jsonl(out_dir / "history.jsonl")
    (out_dir / "best_genome.json").write_text(
        json.dumps(history.summary["best_genome"], indent=2) + "\n"
    )
    (out_dir / "summary.json").write_text(json.dumps(history.summary, indent=2) + "\n")
    best = history.best
    if best.result.quantized_model is not None:
        save_quantized_model(best.result.quantized_model, out_dir / "best_model.jsqq")
    if isinstance(evaluator, ToyEvaluator):
        model = evaluator.train_model(best.genome, individual_eval_seed(config.master_seed, best.id))
        save_float_model(model, out_dir / "best_float.jsqw")


def _print_summary(history) -> None:
    s = history.summary
    print(
        f"best: accuracy={s['best_accuracy']:.6f} "
        f"size={s['best_size_bytes']} bytes ({s['best_size_bytes'] / MB:.4f} MB) "
        f"fitness={s['best_fitness']:.6f}"
    )


def cmd_search(args) -> int:
    data = _require_seed(args, _load_config(args.config))
    config = SearchConfig.from_dict(data)
    evaluator = build_evaluator(config)
    history = run_search(config, evaluator)
    _write_search_outputs(history, config, evaluator, Path(args.out_dir))
    _print_summary(history)
    return 0


def cmd_search_policy(args) -> int:
    model = load_float_model(args.model)
    if model.cell_count == 0:
        raise CliError("model has no cell tags; cannot search a per-cell policy")
    if "genome" not in model.metadata or "profile" not in model.metadata:
        raise CliError("model metadata lacks genome/profile entries")
    data = _require_seed(args, _load_config(args.config))
    data["mode"] = MODE_POLICY_ONLY
    data["evaluator"] = "fixed"
    data["model_path"] = str(args.model)
    data["profile"] = StackingProfile.from_json(model.metadata["profile"]).to_dict()
    if "dataset" not in data:
        data["dataset"] = json.loads(model.metadata["dataset"])
    if args.seed_policy:
        policy = json.loads(Path(args.seed_policy).read_text())
        data.setdefault("seed_policies", []).append(policy)
    config = SearchConfig.from_dict(data)
    config = replace(config, base_genome=genome_from_json(model.metadata["genome"]))
    evaluator = build_evaluator(config)
    history = run_search(config, evaluator)
    out_dir = Path(args.out_dir)
    _write_search_outputs(history, config, evaluator, out_dir)
    (out_dir / "best_policy.json").write_text(
        json.dumps(history.summary["best_genome"]["policy"]) + "\n"
    )
    _print_summary(history)
    return 0


def cmd_eval(args) -> int:
    kind = sniff_container(args.model)
    size = Path(args.model).stat().st_size
    if kind == "quantized":
        model = load_quantized_model(args.model)
    else:
        model = load_float_model(args.model)
    if args.dataset_config:
        descriptor = json.loads(Path(args.dataset_config).read_text())
    elif "dataset" in model.metadata:
        descriptor = json.loads(model.metadata["dataset"])
    else:
        raise CliError("no dataset: model metadata lacks one and --dataset-config not given")
    data = dataset_from_descriptor(descriptor)
    plan = plan_from_model(model)
    if kind == "quantized":
        accuracy = quantized_accuracy(model, data, plan)
    else:
        accuracy = float_accuracy(model, data, plan)
    print(f"accuracy={accuracy:.6f} size={size} bytes ({size / MB:.4f} MB)")
    target = args.target_bytes or (int(args.target_mb * MB) if args.target_mb else None)
    if target:
        rec = fitness(accuracy, size, target)
        print(f"fitness={rec.fitness:.6f} (target {_fmt_size(target)})")
    return 0


def cmd_pareto(args) -> int:
    points: list[tuple[float, int]] = []
    for path in args.histories:
        points.extend(history_points(read_history(path)))
    if not points:
        raise CliError("no evaluated individuals found in the given histories")
    front = pareto_front(points)
    lines = ["accuracy,size_bytes"] + [f"{a!r},{s}" for a, s in front]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} ({len(front)} points)")
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    data = _require_seed(args, _load_config(args.config))
    grid = data.pop("grid", [])
    if not grid:
        raise CliError("empty sweep grid")
    base = SearchConfig.from_dict(data)
    curves = sweep(grid, base)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for (pop_size, sample_size), records in curves.items():
        path = out_dir / f"sweep_P{pop_size}_S{sample_size}.csv"
        write_curve_csv(records, path)
        print(f"wrote {path}")
    plot_sweep(curves, out_dir / "sweep.png")
    print(f"wrote {out_dir / 'sweep.png'}")
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_points: list[tuple[float, int]] = []
    for path in args.histories:
        records = read_history(path)
        stem = Path(path).stem
        write_curve_csv(records, out_dir / f"{stem}_curve.csv")
        plot_fitness_curve(records, out_dir / f"{stem}_curve.png", title=f"Search progress: {stem}")
        all_points.extend(history_points(records))
        print(f"wrote {out_dir / (stem + '_curve.csv')} and .png")
    if all_points:
        front = pareto_front(all_points)
        write_pareto_csv(front, out_dir / "pareto.csv")
        plot_pareto(all_points, front, out_dir / "pareto.png")
        print(f"wrote {out_dir / 'pareto.csv'} and pareto.png ({len(front)} front points)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evoquant",
        description="Evolutionary joint search of cell architectures and quantization policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a float model with a bit policy")
    p.add_argument("model", help="input float model (.jsqw)")
    p.add_argument("--out", required=True, help="output quantized model (.jsqq)")
    p.add_argument("--bits", type=int, help="uniform bit width for every cell")
    p.add_argument("--policy", help="comma-separated per-cell bit widths")
    p.add_argument("--bucket-size", type=int, default=256)
    p.add_argument("--exempt-names", help="comma-separated tensor names kept at full precision")
    p.add_argument("--exempt-cells", help="comma-separated cell indices kept at full precision")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("dequantize", help="reconstruct a float model from a quantized one")
    p.add_argument("model", help="input quantized model (.jsqq)")
    p.add_argument("--out", required=True, help="output float model (.jsqw)")
    p.set_defaults(func=cmd_dequantize)

    p = sub.add_parser("search", help="joint architecture + policy search")
    p.add_argument("--config", required=True, help="search config JSON")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("search-policy", help="policy-only search for a pretrained model")
    p.add_argument("model", help="pretrained float model (.jsqw) with cell tags")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--seed-policy", help="JSON file with a policy to seed the population")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_search_policy)

    p = sub.add_parser("eval", help="re-measure accuracy and size of a saved model")
    p.add_argument("model", help="model file (.jsqw or .jsqq)")
    p.add_argument("--dataset-config", help="dataset descriptor JSON (defaults to model metadata)")
    p.add_argument("--target-bytes", type=int, help="also print fitness against this target")
    p.add_argument("--target-mb", type=float, help="size target in MB (10^6 bytes)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pareto", help="non-dominated (accuracy, size) set from histories")
    p.add_argument("histories", nargs="+", help="history JSONL files")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("sweep", help="population/sample-size sweep")
    p.add_argument("--config", required=True, help="sweep config JSON with a \"grid\" entry")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render CSV tables and figures from histories")
    p.add_argument("--history", dest="histories", action="append", required=True,
                   help="history JSONL file (repeatable)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EvaluationError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
