"""
Command-line interface for vl-distill
Each command fronts one set of toolkit operations; results go to stdout as JSON or
text, failures as one JSON error line on stderr with a distinct exit code
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from src.core.embedding import FeatureKind, FeatureMatrix, labels_to_indices, stable_argmax
from src.core.errors import ConfigInvalid, InputMissing, VLDistillError
from src.data.manifest import ImageInputLoader, manifest_dataset
from src.data.splits import SplitDataset, draw_fewshot
from src.data.synthetic import synthetic_captions, synthetic_dataset
from src.enrichment.captions import CaptionSet, generate_captions
from src.enrichment.descriptions import (
    DescriptionCache,
    attach_label_texts,
    build_label_texts,
    generate_descriptions,
)
from src.enrichment.prompts import PromptStyle
from src.enrichment.tokenizer import default_token_counter
from src.llm.model_loader import load_client_from_config
from src.metrics.alignment import alignment_reports
from src.metrics.spectrum import spectrum_table
from src.persistence.feature_cache import cache_read, cache_write
from src.persistence.report import render_json, render_table
from src.persistence.run_manifest import (
    RunManifest,
    read_run_manifest,
    results_from_history,
    write_run_manifest,
)
from src.teacher.providers import (
    IMAGE_CACHE_NAME,
    CachedTeacher,
    SyntheticTeacherSpec,
    export_teacher_cache,
)
from src.training.config import RetrievalConfig, TrainConfig, finetune_config
from src.training.evaluate import evaluate, student_features
from src.training.retrieval import retrieval_fewshot
from src.training.student import StudentModel, build_student
from src.training.trainer import fewshot_finetune, train
from src.utils.config import Config, dump_json
from src.utils.logger import (
    RUN_LOG_NAME,
    attach_run_log,
    detach_run_log,
    get_logger,
    log_error,
    log_metric_report,
    set_log_level,
)

logger = get_logger(__name__)

UNEXPECTED_EXIT_CODE = 70
STUDENT_FILE = "student.pt"
MANIFEST_FILE = "run.json"
STUDENT_FEATURES_FILE = "student_features.vlmd"
SPEC_KEYS = ("num_classes", "embed_dim", "dispersion", "noise", "text_offset", "label_prefix")


# ---------------------------------------------------------------------------
# Config assembly

def load_run_config(args: argparse.Namespace) -> Config:
    """Config file, then environment, then CLI flags"""
    config = Config(args.config)
    if args.seed is not None:
        config.set("seed", args.seed)
    if args.teacher_cache is not None:
        config.set("teacher.cache_dir", args.teacher_cache)
    if args.out is not None:
        config.set("output.dir", args.out)
    if args.style is not None:
        config.set("enrichment.style", args.style)
    if args.shots is not None:
        config.set("fewshot.shots", args.shots)
    if args.alpha is not None:
        config.set("retrieval.alpha", args.alpha)
    if args.beta is not None:
        config.set("retrieval.beta", args.beta)
    if args.k is not None:
        config.set("losses.k_vlprox", args.k)
    if args.log_level is not None:
        config.set("log_level", args.log_level)
    ok, errors = config.validate(require_llm=args.command in ("enrich", "caption"))
    if not ok:
        raise ConfigInvalid("; ".join(errors))
    set_log_level(get_logger(), config.get("log_level", "INFO"))
    return config


def train_config(config: Config) -> TrainConfig:
    losses = dict(config.section("losses"))
    enabled = losses.pop("enabled", ["cls"])
    return TrainConfig.parse(config.section("train"), losses=enabled, loss=losses, seed=config.get("seed"))


def build_data(config: Config, resolve_texts: bool = True) -> Tuple[SplitDataset, Any]:
    """
    Dataset and teacher described by the config

    Synthetic datasets come with their synthetic teacher; a teacher cache directory,
    when configured, replaces it. Manifest datasets always use the cache.
    """
    ds = config.section("dataset")
    cache_dir = config.get("teacher.cache_dir")
    if ds.get("kind") == "synthetic":
        spec = SyntheticTeacherSpec.parse({k: ds[k] for k in SPEC_KEYS if k in ds}, seed=config.get("seed"))
        dataset, teacher = synthetic_dataset(
            spec,
            samples_per_class=ds.get("samples_per_class", 20),
            ood_fraction=ds.get("ood_fraction", 0.5),
            id_eval_fraction=ds.get("id_eval_fraction", 0.25),
            input_dim=ds.get("input_dim", 32),
            input_noise=ds.get("input_noise", 0.05),
        )
        if cache_dir:
            teacher = CachedTeacher(cache_dir)
    else:
        root = Path(ds["root"])
        dataset = manifest_dataset(str(root / "train.tsv"), str(root / "id_eval.tsv"), str(root / "ood_eval.tsv"),
                                   name=ds.get("name", root.name))
        teacher = CachedTeacher(cache_dir)

    if resolve_texts:
        style = PromptStyle(config.get("enrichment.style", "plain"))
        cache = DescriptionCache(config.get("enrichment.description_cache")) if style.enriched else None
        attach_label_texts(dataset.label_space, teacher, style, cache, config.get("enrichment.generator_id"),
                           counter=default_token_counter())
    return dataset, teacher


def input_source(config: Config, dataset: SplitDataset) -> Tuple[int, Optional[ImageInputLoader]]:
    """Student input width and, for image-backed samples, the loader that produces the inputs"""
    first = dataset.train[0]
    if first.inputs is not None:
        return first.inputs.shape[0], None
    ds = config.section("dataset")
    size = ds.get("image_size", 32)
    return 3 * size * size, ImageInputLoader(root=ds.get("image_root", ds.get("root", ".")), size=size)


def out_dir(config: Config) -> Path:
    return Path(config.get("output.dir", "./runs"))


def save_student(path: Path, student: StudentModel, input_dim: int, hidden: Sequence[int]):
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"state_dict": student.state_dict(), "input_dim": input_dim, "hidden": list(hidden),
                "embed_dim": student.embed_dim}, path)


def load_student(path: Path) -> StudentModel:
    if not path.is_file():
        raise InputMissing(f"Student checkpoint not found: {path}", path=str(path))
    state = torch.load(path, map_location="cpu")
    student = build_student(state["input_dim"], state["embed_dim"], state["hidden"], seed=None)
    student.load_state_dict(state["state_dict"])
    student.eval()
    return student


def _print_json(data: Any):
    sys.stdout.write(dump_json(data))


# ---------------------------------------------------------------------------
# Commands

def cmd_enrich(args: argparse.Namespace, config: Config) -> int:
    style = PromptStyle(config.get("enrichment.style"))
    if not style.enriched:
        raise ConfigInvalid("enrich needs an enriched style (--style original|succinct|detailed|distinct)")
    dataset, _ = build_data(config, resolve_texts=False)
    client = load_client_from_config(config.section("llm"))
    cache = DescriptionCache(config.get("enrichment.description_cache"))
    entries = generate_descriptions(dataset.label_space.all_labels, style, client, cache,
                                    workers=config.get("enrichment.workers", 4),
                                    progress=config.get("train.progress", False))
    counter = default_token_counter()
    texts = build_label_texts([e.label for e in entries], style, cache, client.client_id, counter)
    trimmed = sum(1 for e in entries if not texts[e.label].endswith(e.description))
    _print_json({"style": style.value, "generator_id": client.client_id, "labels": len(entries),
                 "cache": str(cache.path), "token_counter": counter.name, "trimmed": trimmed})
    return 0


def cmd_caption(args: argparse.Namespace, config: Config) -> int:
    dataset, _ = build_data(config, resolve_texts=False)
    path = out_dir(config) / "captions.jsonl"
    existing = CaptionSet.load(str(path)) if path.exists() else None
    captioner = load_client_from_config(config.section("llm"), captioner=True)
    captions = generate_captions(dataset.all_samples(), captioner, existing,
                                 workers=config.get("enrichment.workers", 4), save_path=str(path))
    _print_json({"captions": len(captions), "generator_id": captions.generator_id, "path": str(path)})
    return 0


def cmd_cache_teacher(args: argparse.Namespace, config: Config) -> int:
    config.set("teacher.cache_dir", None)
    dataset, teacher = build_data(config)
    texts = [text for per_style in dataset.label_space.descriptions.values() for text in per_style.values()]
    if config.section("dataset").get("kind") == "synthetic":
        texts += list(synthetic_captions(dataset, teacher, seed=config.get("seed")).captions.values())
    target = Path(args.out) if args.out else out_dir(config) / "teacher"
    export_teacher_cache(teacher, [s.sample_id for s in dataset.all_samples()], texts, str(target),
                         meta={"dataset": dataset.name})
    _print_json({"cache_dir": str(target), "samples": len(dataset.all_samples()), "texts": len(set(texts)),
                 "generator_id": teacher.generator_id})
    return 0


def _captions_for(config: Config, dataset: SplitDataset, teacher, cfg: TrainConfig) -> Optional[CaptionSet]:
    if "cap" not in cfg.active_losses:
        return None
    path = out_dir(config) / "captions.jsonl"
    if path.exists():
        return CaptionSet.load(str(path)).resolve_features(teacher)
    if config.section("dataset").get("kind") == "synthetic":
        return synthetic_captions(dataset, teacher, seed=config.get("seed"))
    return None


def cmd_train(args: argparse.Namespace, config: Config) -> int:
    output = out_dir(config)
    run_log = attach_run_log(get_logger(), str(output / RUN_LOG_NAME))
    try:
        return _train_run(config, output)
    finally:
        detach_run_log(get_logger(), run_log)


def _train_run(config: Config, output: Path) -> int:
    dataset, teacher = build_data(config)
    cfg = train_config(config)
    if cfg.eval_every == 0:
        cfg = TrainConfig.parse(cfg.model_dump(), eval_every=1)
    input_dim, loader = input_source(config, dataset)
    hidden = config.get("student.hidden", [64])
    student = build_student(input_dim, teacher.embed_dim, hidden, seed=cfg.seed)
    captions = _captions_for(config, dataset, teacher, cfg)

    result = train(student, teacher, dataset, cfg, captions=captions, input_loader=loader,
                   dump_dir=str(output / "diverged"))
    history = list(result.history)

    fewshot = config.section("fewshot")
    if fewshot.get("epochs", 0) > 0:
        ft_overrides = {k: v for k, v in fewshot.items() if k not in ("shots",)}
        ft_cfg = finetune_config(cfg, **ft_overrides)
        if ft_cfg.eval_every == 0:
            ft_cfg = TrainConfig.parse(ft_cfg.model_dump(), eval_every=1)
        ft = fewshot_finetune(student, teacher, dataset, fewshot["shots"], ft_cfg, captions=captions,
                              input_loader=loader, dump_dir=str(output / "diverged"))
        history += ft.history

    save_student(output / STUDENT_FILE, student, input_dim, hidden)
    features = student_features(student, dataset.all_samples(), loader)
    cache_write(str(output / STUDENT_FEATURES_FILE), features, generator_id=f"student:{dataset.name}")

    results = results_from_history(history)
    for split in ("train", "id_eval", "ood_eval"):
        report = evaluate(student, teacher, dataset, split, tau=cfg.loss.tau_cls, with_metrics=True,
                          input_loader=loader)
        results.metrics += [r.to_dict() for r in report.reports]
        for r in report.reports:
            log_metric_report(logger, r)

    manifest = RunManifest(
        name=config.get("output.name") or "+".join(cfg.losses),
        command="train",
        config=config.snapshot(),
        seeds={"seed": cfg.seed},
        teacher_generator_id=teacher.generator_id,
        epochs=[r.to_dict() for r in history],
        results=results,
    )
    write_run_manifest(str(output / MANIFEST_FILE), manifest)
    _print_json({"id": results.id_accuracy, "ood_zero_shot": results.ood_zero_shot,
                 "ood_fewshot": results.ood_fewshot, "manifest": str(output / MANIFEST_FILE)})
    return 0


def cmd_fewshot(args: argparse.Namespace, config: Config) -> int:
    dataset, teacher = build_data(config)
    output = out_dir(config)
    student = load_student(Path(args.student) if args.student else output / STUDENT_FILE)
    _, loader = input_source(config, dataset)
    fewshot = config.section("fewshot")
    overrides = {k: v for k, v in fewshot.items() if k not in ("shots",) and not (k == "epochs" and v == 0)}
    cfg = finetune_config(train_config(config), **overrides)
    result = fewshot_finetune(student, teacher, dataset, fewshot["shots"], cfg,
                              captions=_captions_for(config, dataset, teacher, cfg), input_loader=loader)
    _print_json({"shots": fewshot["shots"], "before": result.before, "after": result.after})
    return 0


def _support_and_queries(config: Config, dataset: SplitDataset):
    shots = config.get("fewshot.shots")
    draw = draw_fewshot(dataset, shots, seed=config.get("seed"))
    return draw, draw.queries(dataset)


def cmd_retrieval(args: argparse.Namespace, config: Config) -> int:
    dataset, teacher = build_data(config)
    student = load_student(Path(args.student) if args.student else out_dir(config) / STUDENT_FILE)
    _, loader = input_source(config, dataset)
    draw, queries = _support_and_queries(config, dataset)
    labels = list(dataset.label_space.ood_labels)
    cfg = RetrievalConfig.parse(config.section("retrieval"))
    query = student_features(student, queries, loader)
    probs = retrieval_fewshot(student, teacher, draw.samples(dataset), query, labels, cfg,
                              text=dataset.label_space.text_matrix(labels), input_loader=loader)
    predicted = stable_argmax(probs, axis=1)
    truth = labels_to_indices([s.label for s in queries], labels)
    _print_json({"alpha": cfg.alpha, "beta": cfg.beta, "shots": draw.shots, "queries": len(queries),
                 "accuracy": float(np.mean(predicted == truth))})
    return 0


def cmd_eval(args: argparse.Namespace, config: Config) -> int:
    dataset, teacher = build_data(config)
    student = load_student(Path(args.student) if args.student else out_dir(config) / STUDENT_FILE)
    _, loader = input_source(config, dataset)
    tau = train_config(config).loss.tau_cls
    output: Dict[str, Any] = {}
    for split in ("id_eval", "ood_eval"):
        samples = None
        if split == "ood_eval" and args.shots is not None:
            samples = _support_and_queries(config, dataset)[1]
        result = evaluate(student, teacher, dataset, split, samples=samples, tau=tau,
                          with_metrics=args.with_metrics, input_loader=loader)
        output[split] = result.to_dict()
    _print_json(output)
    return 0


def _teacher_image_cache(path: str) -> FeatureMatrix:
    source = Path(path)
    if source.is_dir():
        source = source / IMAGE_CACHE_NAME
    return cache_read(str(source)).features


def cmd_metrics(args: argparse.Namespace, config: Config) -> int:
    if not args.student_cache or not args.teacher_cache:
        raise ConfigInvalid("metrics needs --student-cache and --teacher-cache")
    student = cache_read(args.student_cache).features
    teacher = _teacher_image_cache(args.teacher_cache).select(student.ids)
    student = student.with_data(student.data, FeatureKind.STUDENT_VISUAL)
    text = cache_read(args.text_cache).features if args.text_cache else None
    k = (args.k,) if args.k is not None else (5,)
    reports = alignment_reports(student, teacher, args.split_tag, text, k_neigh=k, k_vlalign=k)
    for report in reports:
        sys.stdout.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
    return 0


def cmd_spectrum(args: argparse.Namespace, config: Config) -> int:
    if not args.text_caches:
        raise ConfigInvalid("spectrum needs at least one NAME=PATH text cache")
    texts: Dict[str, FeatureMatrix] = {}
    for item in args.text_caches:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        texts[name] = cache_read(path).features
    _print_json(spectrum_table(texts, top_n=args.top_n))
    return 0


def cmd_report(args: argparse.Namespace, config: Config) -> int:
    paths: List[Path] = []
    for item in args.runs or [str(out_dir(config))]:
        path = Path(item)
        paths.append(path / MANIFEST_FILE if path.is_dir() else path)
    manifests = [read_run_manifest(str(p)) for p in paths]
    sys.stdout.write(render_json(manifests) if args.json else render_table(manifests))
    return 0


COMMANDS = {
    "enrich": cmd_enrich,
    "caption": cmd_caption,
    "cache-teacher": cmd_cache_teacher,
    "train": cmd_train,
    "fewshot": cmd_fewshot,
    "retrieval": cmd_retrieval,
    "eval": cmd_eval,
    "metrics": cmd_metrics,
    "spectrum": cmd_spectrum,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vl-distill", description="Vision-language distillation toolkit")
    parser.add_argument("--config", help="Run config file (YAML)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--teacher-cache", dest="teacher_cache", help="Teacher feature cache (directory or file)")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--style", choices=[s.value for s in PromptStyle])
    parser.add_argument("--shots", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--k", type=int)
    parser.add_argument("--log-level", dest="log_level")

    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("enrich", "caption", "cache-teacher", "train"):
        sub.add_parser(name)
    for name in ("fewshot", "retrieval", "eval"):
        command = sub.add_parser(name)
        command.add_argument("--student", help="Student checkpoint (default: OUT/student.pt)")
        if name == "eval":
            command.add_argument("--with-metrics", dest="with_metrics", action="store_true")

    metrics = sub.add_parser("metrics")
    metrics.add_argument("--student-cache", dest="student_cache")
    metrics.add_argument("--text-cache", dest="text_cache")
    metrics.add_argument("--split-tag", dest="split_tag", default="cache")

    spectrum = sub.add_parser("spectrum")
    spectrum.add_argument("text_caches", nargs="*", metavar="NAME=PATH")
    spectrum.add_argument("--top-n", dest="top_n", type=int, default=20)

    report = sub.add_parser("report")
    report.add_argument("runs", nargs="*", help="Run directories or manifest files")
    report.add_argument("--json", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command

    Args:
        argv: Arguments (default: sys.argv[1:])

    Returns:
        Exit code: 0 ok, 2 invalid config, 3 missing input, 4 cache errors,
        1 other toolkit errors, 70 unexpected failures
    """
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args)
        return COMMANDS[args.command](args, config)
    except VLDistillError as e:
        log_error(logger, e, context=args.command)
        sys.stderr.write(json.dumps({"error": e.to_record(), "exit_code": e.exit_code}, sort_keys=True) + "\n")
        return e.exit_code
    except Exception as e:
        log_error(logger, e, context=args.command)
        record = {"code": "Unexpected", "message": f"{type(e).__name__}: {e}"}
        sys.stderr.write(json.dumps({"error": record, "exit_code": UNEXPECTED_EXIT_CODE}, sort_keys=True) + "\n")
        return UNEXPECTED_EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
