"""Command-line driver: extract, train-eval, prune, baseline, report.

Each subcommand reads the shared YAML run config, works inside
``<output_dir>/<language>/``, writes deterministic artifacts plus a
machine-readable ``<command>.summary.json``, and keeps volatile telemetry
(timings, hit rates) in ``*.stats.json`` files only.
"""

from __future__ import annotations

import functools
import hashlib
import json
from pathlib import Path

import click

from . import baseline as baseline_mod
from .config import RunConfig, load_config
from .dataset import SplitAssignment, load_manifest, stratified_split
from .errors import ConfigError, PipelineError
from .extraction import (AnswerCache, FeatureMatrix, extract_matrix, labels_for,
                         load_features_csv, save_features_csv)
from .forest import fit, load_model, predict, save_model
from .gateway import build_backend, lf_answer_sets
from .metrics import (error_report, f1_prune, imp_prune, macro_f1,
                      render_error_report, save_error_report_csv,
                      save_importances_csv, save_jaccard_csv, save_trace_csv,
                      split_xy)
from .registry import LFRegistry, load_registry


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _write_summary(run_dir: Path, command: str, cfg: RunConfig,
                   artifacts: list[Path], extras: dict) -> None:
    payload = {"command": command,
               "config_digest": cfg.digest(),
               "language": cfg.language,
               "artifacts": {p.name: _file_digest(p) for p in artifacts},
               **extras}
    _write_json(run_dir / f"{command}.summary.json", payload)


def _load_registry(cfg: RunConfig) -> LFRegistry:
    registry = load_registry(cfg.registry_path, batch="base")
    if cfg.added_registry_path is not None:
        added = load_registry(cfg.added_registry_path, batch="added")
        registry = LFRegistry.combine(registry, added)
    return registry


def _image_root(cfg: RunConfig) -> Path:
    return cfg.images_root if cfg.images_root is not None else cfg.manifest_path.parent


def _mock_vocab(registry: LFRegistry) -> dict:
    vocab = lf_answer_sets(registry)
    vocab.update(baseline_mod.baseline_answer_sets())
    return vocab


def _load_features(run_dir: Path) -> FeatureMatrix:
    path = run_dir / "features.csv"
    if not path.exists():
        raise ConfigError(f"{path} not found; run `promptlf extract` first")
    return load_features_csv(path)


def _load_split(cfg: RunConfig, run_dir: Path, manifest) -> SplitAssignment:
    path = run_dir / "split.txt"
    if path.exists():
        return SplitAssignment.load(path)
    split = stratified_split(manifest, cfg.val_fraction, cfg.split_seed)
    split.save(path)
    return split


def _wrap_errors(fn):
    @functools.wraps(fn)
    def inner(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PipelineError as exc:
            raise click.ClickException(str(exc)) from exc
    return inner


def _config_options(fn):
    fn = click.option("--seed", type=int, default=None,
                      help="Override forest, split, and mock seeds.")(fn)
    fn = click.option("--language", type=click.Choice(["en", "hi", "zh", "all"]),
                      default=None, help="Override the config language scope.")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="Run config YAML.")(fn)
    return fn


def _prepare(config_path: str, language: str | None, seed: int | None
             ) -> tuple[RunConfig, Path]:
    cfg = load_config(config_path).with_overrides(language=language, seed=seed)
    run_dir = cfg.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    return cfg, run_dir


@click.group()
@click.version_option(package_name="promptlf")
def main() -> None:
    """Prompted weak supervision pipeline for multilingual meme labeling."""


@main.command("extract")
@_config_options
@click.option("--only-batch", type=click.Choice(["base", "added"]), default=None,
              help="Restrict to base columns, or add only new-batch columns "
                   "on top of a cached base.")
@_wrap_errors
def cmd_extract(config_path: str, language: str | None, seed: int | None,
                only_batch: str | None) -> None:
    """Query the VLM for every (meme, LF) cell and write the feature CSV."""
    cfg, run_dir = _prepare(config_path, language, seed)
    manifest = load_manifest(cfg.manifest_path, split="train",
                             language_scope=cfg.language)
    registry = _load_registry(cfg)
    backend = build_backend(cfg.backend, answer_sets=_mock_vocab(registry))
    cache = AnswerCache(cfg.cache_path)
    matrix, stats = extract_matrix(manifest, registry, backend, cache,
                                   image_root=_image_root(cfg),
                                   only_batch=only_batch,
                                   error_threshold=cfg.error_threshold)
    features_path = run_dir / "features.csv"
    save_features_csv(matrix, features_path, config_snapshot=cfg.snapshot())
    _write_json(run_dir / "features.stats.json", stats.to_dict())
    _write_summary(run_dir, "extract", cfg,
                   [features_path, features_path.with_suffix(".meta.json")],
                   {"n_memes": matrix.n_memes, "n_features": matrix.n_features,
                    "registry_hash": matrix.registry_hash,
                    "only_batch": only_batch})
    click.echo(f"extracted {matrix.n_memes}x{matrix.n_features} cells "
               f"(cache hits {stats.cache_hits}, gateway calls {stats.gateway_calls}, "
               f"fallback rate {stats.to_dict()['fallback_rate']:.3f})")


@main.command("train-eval")
@_config_options
@_wrap_errors
def cmd_train_eval(config_path: str, language: str | None, seed: int | None) -> None:
    """Fit the forest on the stratified train part and evaluate."""
    cfg, run_dir = _prepare(config_path, language, seed)
    matrix = _load_features(run_dir)
    manifest = load_manifest(cfg.manifest_path, split="train",
                             language_scope=cfg.language)
    labels = labels_for(matrix, manifest)
    split = _load_split(cfg, run_dir, manifest)

    artifacts: list[Path] = [run_dir / "split.txt"]
    extras: dict = {}
    if split.val_ids:
        train_m, train_y, val_m, val_y = split_xy(matrix, labels, split)
    else:
        train_m, train_y = matrix, labels
        val_m = val_y = None
    model = fit(train_m, train_y, cfg.forest)
    model_path = run_dir / "model.json"
    save_model(model, model_path)
    artifacts.append(model_path)
    extras["model_digest"] = model.digest()
    click.echo(f"model digest {model.digest()}")

    if val_m is not None:
        report = macro_f1(val_y, predict(model, val_m), split_tag="validation")
        (run_dir / "eval_validation.txt").write_text(report.render(), encoding="utf-8")
        _write_json(run_dir / "eval_validation.json", report.to_dict())
        artifacts += [run_dir / "eval_validation.txt", run_dir / "eval_validation.json"]
        extras["validation_macro_f1"] = report.macro_f1
        click.echo(f"validation macro_f1 {report.macro_f1:.4f}")

    if cfg.test_features_path is not None and cfg.test_manifest_path is not None:
        test_matrix = load_features_csv(cfg.test_features_path)
        test_manifest = load_manifest(cfg.test_manifest_path, split="test",
                                      language_scope=cfg.language)
        test_labels = labels_for(test_matrix, test_manifest)
        report = macro_f1(test_labels, predict(model, test_matrix), split_tag="test")
        (run_dir / "eval_test.txt").write_text(report.render(), encoding="utf-8")
        _write_json(run_dir / "eval_test.json", report.to_dict())
        artifacts += [run_dir / "eval_test.txt", run_dir / "eval_test.json"]
        extras["test_macro_f1"] = report.macro_f1
        click.echo(f"test macro_f1 {report.macro_f1:.4f}")

    _write_summary(run_dir, "train-eval", cfg, artifacts, extras)


@main.command("prune")
@_config_options
@click.option("--method", type=click.Choice(["f1prune", "impprune"]), required=True)
@_wrap_errors
def cmd_prune(config_path: str, language: str | None, seed: int | None,
              method: str) -> None:
    """Run one pruning method and write its trace, matrix, and evaluation."""
    cfg, run_dir = _prepare(config_path, language, seed)
    matrix = _load_features(run_dir)
    manifest = load_manifest(cfg.manifest_path, split="train",
                             language_scope=cfg.language)
    labels = labels_for(matrix, manifest)
    split = _load_split(cfg, run_dir, manifest)

    if method == "f1prune":
        result = f1_prune(matrix, labels, split, cfg.forest)
    else:
        result = imp_prune(matrix, labels, split, cfg.forest, k_grid=cfg.k_grid)

    trace_path = run_dir / f"prune_{method}.trace.csv"
    save_trace_csv(result, trace_path)
    _write_json(run_dir / f"prune_{method}.json", result.to_dict())

    retained = matrix.drop_columns(result.removed_lf_ids)
    retained_path = run_dir / f"features_{method}.csv"
    save_features_csv(retained, retained_path, config_snapshot=cfg.snapshot())

    train_m, train_y, val_m, val_y = split_xy(matrix, labels, split)
    model = fit(train_m.drop_columns(result.removed_lf_ids), train_y, cfg.forest)
    save_model(model, run_dir / f"model_{method}.json")
    report = macro_f1(val_y, predict(model, val_m.drop_columns(result.removed_lf_ids)),
                      split_tag="validation")
    (run_dir / f"eval_{method}.txt").write_text(report.render(), encoding="utf-8")
    _write_json(run_dir / f"eval_{method}.json", report.to_dict())

    _write_summary(run_dir, f"prune-{method}", cfg,
                   [trace_path, run_dir / f"prune_{method}.json", retained_path,
                    run_dir / f"model_{method}.json", run_dir / f"eval_{method}.txt"],
                   {"removed": len(result.removed_lf_ids),
                    "retained": result.retained_count,
                    "base_score": result.base_score,
                    "final_score": result.final_score})
    click.echo(f"{method}: removed {len(result.removed_lf_ids)}/{matrix.n_features} "
               f"features, validation macro_f1 {result.base_score:.4f} -> "
               f"{result.final_score:.4f}")


@main.command("baseline")
@_config_options
@click.option("--mode", type=click.Choice(["direct", "reasoning"]), required=True)
@_wrap_errors
def cmd_baseline(config_path: str, language: str | None, seed: int | None,
                 mode: str) -> None:
    """Classify memes directly with the VLM and score against gold labels."""
    cfg, run_dir = _prepare(config_path, language, seed)
    manifest = load_manifest(cfg.manifest_path, split="train",
                             language_scope=cfg.language)
    registry = _load_registry(cfg)
    backend = build_backend(cfg.backend, answer_sets=_mock_vocab(registry))
    predictions = baseline_mod.classify_batch(manifest, backend, mode,
                                              image_root=_image_root(cfg))
    csv_path = run_dir / f"baseline_{mode}.csv"
    baseline_mod.save_predictions_csv(predictions, csv_path)
    baseline_mod.save_transcripts(predictions, run_dir / f"baseline_{mode}.raw.jsonl")
    report = baseline_mod.evaluate_baseline(predictions, manifest, split_tag="all")
    (run_dir / f"eval_baseline_{mode}.txt").write_text(report.render(), encoding="utf-8")
    _write_json(run_dir / f"eval_baseline_{mode}.json", report.to_dict())
    rate = baseline_mod.unparseable_rate(predictions)
    _write_summary(run_dir, f"baseline-{mode}", cfg,
                   [csv_path, run_dir / f"eval_baseline_{mode}.txt"],
                   {"macro_f1": report.macro_f1, "unparseable_rate": rate})
    click.echo(f"baseline {mode}: macro_f1 {report.macro_f1:.4f}, "
               f"unparseable rate {rate:.3f}")


@main.command("report")
@_config_options
@_wrap_errors
def cmd_report(config_path: str, language: str | None, seed: int | None) -> None:
    """Write the error-analysis listing and the visualization export bundle."""
    cfg, run_dir = _prepare(config_path, language, seed)
    matrix = _load_features(run_dir)
    manifest = load_manifest(cfg.manifest_path, split="train",
                             language_scope=cfg.language)
    registry = _load_registry(cfg)
    labels = labels_for(matrix, manifest)
    split = _load_split(cfg, run_dir, manifest)
    model_path = run_dir / "model.json"
    if not model_path.exists():
        raise ConfigError(f"{model_path} not found; run `promptlf train-eval` first")
    model = load_model(model_path)

    entries = error_report(model, matrix, labels, split, registry)
    (run_dir / "error_report.txt").write_text(render_error_report(entries),
                                              encoding="utf-8")
    save_error_report_csv(entries, run_dir / "error_report.csv")
    save_importances_csv(model, run_dir / "importances.csv")

    artifacts = [run_dir / "error_report.txt", run_dir / "error_report.csv",
                 run_dir / "importances.csv"]
    removed_sets = {}
    for method in ("f1prune", "impprune"):
        prune_path = run_dir / f"prune_{method}.json"
        if prune_path.exists():
            obj = json.loads(prune_path.read_text(encoding="utf-8"))
            removed_sets[method] = set(obj["removed_lf_ids"])
    if removed_sets:
        save_jaccard_csv(removed_sets, run_dir / "jaccard.csv")
        artifacts.append(run_dir / "jaccard.csv")

    _write_summary(run_dir, "report", cfg, artifacts,
                   {"misclassified": len(entries),
                    "jaccard_sets": sorted(removed_sets)})
    click.echo(f"report: {len(entries)} misclassified validation memes, "
               f"bundle in {run_dir}")


if __name__ == "__main__":
    main()
