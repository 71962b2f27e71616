"""Command-line pipeline: gen -> poison -> train -> eval -> report.

`all` runs the headline experiment end to end: it trains a clean model
and a poisoned model from the same config and produces the paired
comparison. Exit codes: 0 success, 1 usage/config error, 2 runtime
failure.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from . import __version__
from .config import ConfigError, RunConfig, emit_config, load_config
from .evaluation import (
    EvaluationError,
    evaluate_clean_vs_triggered,
    load_report_json,
    save_plot_series,
    save_report_csv,
    save_report_json,
    stratified_probes,
    trigger_sensitivity_scan,
)
from .nn import load_checkpoint, save_checkpoint, save_history, train as train_model
from .poison import (
    ManifestError,
    load_manifest,
    poison_dataset,
    save_manifest,
    split_dataset,
)
from .scenegen import SceneParamError, generate_dataset
from .trigger import TriggerError


USAGE_ERRORS = (ConfigError, ManifestError, SceneParamError, TriggerError, EvaluationError)
OUT_ROOT_ENV = "TROJANPAD_OUT_ROOT"


def _resolve_out(path: str) -> Path:
    root = os.environ.get(OUT_ROOT_ENV)
    p = Path(path)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _prepare_dir(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()) and not force:
        raise ConfigError(
            f"output directory {path} is not empty; pass --force to overwrite"
        )
    path.mkdir(parents=True, exist_ok=True)


def _prepare_file(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise ConfigError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)


@click.group()
@click.version_option(version=__version__)
def cli():
    """Trojan data-poisoning toolkit for a synthetic landing-zone classifier."""


config_opt = click.option(
    "--config", "config_path", required=True, type=click.Path(), help="Run config YAML."
)
force_opt = click.option("--force", is_flag=True, help="Overwrite existing outputs.")
seed_opt = click.option("--seed", type=int, default=None, help="Override master seed.")


def _load(config_path, seed):
    cfg = load_config(config_path)
    if seed is not None:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "master_seed": seed})
    return cfg


def _generate_split(cfg: RunConfig):
    examples = generate_dataset(
        cfg.scene.count,
        class_balance=cfg.scene.class_balance,
        master_seed=cfg.seed("scene"),
        size=cfg.scene.size,
    )
    return split_dataset(examples, ratios=cfg.split_ratios, seed=cfg.seed("split"))


@cli.command()
@config_opt
@click.option("--out", required=True, type=click.Path(), help="Dataset directory.")
@force_opt
@seed_opt
def gen(config_path, out, force, seed):
    """Generate the synthetic dataset and write images plus a split manifest."""
    cfg = _load(config_path, seed)
    out_dir = _resolve_out(out)
    _prepare_dir(out_dir, force)
    manifest = _generate_split(cfg)
    save_manifest(manifest, out_dir)
    click.echo(f"wrote {len(manifest.examples)} examples to {out_dir}")
    click.echo(f"content_hash: {manifest.content_hash()}")


@cli.command()
@config_opt
@click.option("--data", required=True, type=click.Path(), help="Clean dataset directory.")
@click.option("--out", required=True, type=click.Path(), help="Poisoned dataset directory.")
@force_opt
def poison(config_path, data, out, force):
    """Poison the training split of an existing dataset."""
    cfg = _load(config_path, None)
    out_dir = _resolve_out(out)
    _prepare_dir(out_dir, force)
    manifest = load_manifest(_resolve_out(data))
    poisoned = poison_dataset(manifest, cfg.poison_config())
    save_manifest(poisoned, out_dir)
    n = sum(e.poisoned for e in poisoned.examples)
    click.echo(f"poisoned {n} train examples into {out_dir}")
    click.echo(f"content_hash: {poisoned.content_hash()}")


@cli.command()
@config_opt
@click.option("--data", required=True, type=click.Path(), help="Dataset directory.")
@click.option("--out", required=True, type=click.Path(), help="Checkpoint path.")
@click.option("--history", "history_path", type=click.Path(), default=None)
@click.option("--role", default="clean", help="Seed label for this training run.")
@force_opt
def train(config_path, data, out, history_path, role, force):
    """Train the two-stage classifier on a dataset manifest."""
    cfg = _load(config_path, None)
    out_path = _resolve_out(out)
    _prepare_file(out_path, force)
    manifest = load_manifest(_resolve_out(data))
    clf = train_model(manifest, cfg.train_config(role))
    save_checkpoint(clf, out_path)
    if history_path:
        save_history(clf.history_, _resolve_out(history_path))
    final = clf.history_[-1]
    click.echo(
        f"trained {clf.param_count()} parameters over {clf.epoch_} epochs; "
        f"final val_acc {final['val_acc']:.3f}"
    )
    click.echo(f"checkpoint: {out_path}")


def _run_eval(cfg: RunConfig, clf, manifest, out_dir: Path, tag: str) -> None:
    report = evaluate_clean_vs_triggered(clf, manifest, cfg.trigger_spec())
    probes = stratified_probes(manifest.by_split("val"), cfg.eval.scan_probe_limit)
    report.scan = trigger_sensitivity_scan(
        clf, probes, cfg.candidate_specs(), threshold=cfg.eval.scan_threshold
    )
    save_report_json(report, out_dir / f"eval_{tag}.json")
    save_report_csv(report, out_dir / f"eval_{tag}.csv")
    save_plot_series(report, out_dir / f"eval_{tag}_classes.csv")
    click.echo(
        f"[{tag}] clean_acc {report.clean.accuracy:.3f} "
        f"triggered_acc {report.triggered.accuracy:.3f} "
        f"gap {report.accuracy_gap:.3f} asr {report.attack_success_rate:.3f} "
        f"scan {report.scan.verdict}"
    )


@cli.command("eval")
@config_opt
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--data", required=True, type=click.Path(), help="Dataset directory.")
@click.option("--out", required=True, type=click.Path(), help="Report directory.")
@click.option("--tag", default="model", help="Report filename tag.")
@force_opt
def eval_cmd(config_path, checkpoint, data, out, tag, force):
    """Evaluate a checkpoint on clean and triggered test data, then scan it."""
    cfg = _load(config_path, None)
    out_dir = _resolve_out(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"eval_{tag}.json"
    if target.exists() and not force:
        raise ConfigError(f"{target} exists; pass --force to overwrite")
    clf = load_checkpoint(_resolve_out(checkpoint))
    manifest = load_manifest(_resolve_out(data))
    _run_eval(cfg, clf, manifest, out_dir, tag)


@cli.command()
@click.argument("run_dir", type=click.Path())
def report(run_dir):
    """Consolidate a run directory's eval artifacts into report.md."""
    run = _resolve_out(run_dir)
    paths = {tag: run / f"eval_{tag}.json" for tag in ("clean", "poisoned")}
    missing = [str(p) for p in paths.values() if not p.is_file()]
    if missing:
        raise ConfigError(
            "missing eval artifacts: " + ", ".join(missing) + "; run `trojanpad all` "
            "or `trojanpad eval` with tags 'clean' and 'poisoned' first"
        )
    reports = {tag: load_report_json(p) for tag, p in paths.items()}

    lines = [
        "# Run report",
        "",
        "| metric | clean_model | poisoned_model |",
        "|---|---|---|",
    ]
    def row(name, fn):
        lines.append(
            f"| {name} | {fn(reports['clean']):.3f} | {fn(reports['poisoned']):.3f} |"
        )

    row("clean_accuracy", lambda r: r.clean.accuracy)
    row("triggered_accuracy", lambda r: r.triggered.accuracy)
    row("accuracy_gap", lambda r: r.accuracy_gap)
    row("attack_success_rate", lambda r: r.attack_success_rate)
    row("clean_precision", lambda r: r.clean.precision)
    row("clean_recall", lambda r: r.clean.recall)
    row("clean_f1", lambda r: r.clean.f1)
    lines.append(
        f"| scan_verdict | {reports['clean'].scan.verdict} "
        f"| {reports['poisoned'].scan.verdict} |"
    )
    lines.append("")
    (run / "report.md").write_text("\n".join(lines) + "\n")
    click.echo("\n".join(lines))


@cli.command("all")
@config_opt
@click.option("--out", required=True, type=click.Path(), help="Run directory.")
@force_opt
@seed_opt
@click.pass_context
def all_cmd(ctx, config_path, out, force, seed):
    """Full pipeline: data, poisoning, both models, both evals, report."""
    cfg = _load(config_path, seed)
    run = _resolve_out(out)
    _prepare_dir(run, force)
    (run / "config.yaml").write_text(emit_config(cfg))

    manifest = _generate_split(cfg)
    save_manifest(manifest, run / "data")
    click.echo(f"data content_hash: {manifest.content_hash()}")

    poisoned = poison_dataset(manifest, cfg.poison_config())
    save_manifest(poisoned, run / "poisoned")
    click.echo(f"poisoned content_hash: {poisoned.content_hash()}")

    clean_clf = train_model(manifest, cfg.train_config("clean"))
    save_checkpoint(clean_clf, run / "clean_model.ckpt")
    save_history(clean_clf.history_, run / "clean_history.csv")
    click.echo(f"clean model val_acc {clean_clf.history_[-1]['val_acc']:.3f}")

    poisoned_clf = train_model(poisoned, cfg.train_config("poisoned"))
    save_checkpoint(poisoned_clf, run / "poisoned_model.ckpt")
    save_history(poisoned_clf.history_, run / "poisoned_history.csv")
    click.echo(f"poisoned model val_acc {poisoned_clf.history_[-1]['val_acc']:.3f}")

    _run_eval(cfg, clean_clf, manifest, run, "clean")
    _run_eval(cfg, poisoned_clf, poisoned, run, "poisoned")
    ctx.invoke(report, run_dir=str(run))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except (click.UsageError, *USAGE_ERRORS) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except Exception as exc:  # runtime failure
        click.echo(f"runtime failure: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
