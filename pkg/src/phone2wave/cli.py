#!/usr/bin/env python3

import json
import shutil
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import typer
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn

from . import __version__
from .ablation import AXES, AblationRunner, mean_token_duration
from .config import ConfigManager, RunConfig
from .data import (
    build_manifest,
    check_corpus_config,
    corpus_read,
    corpus_write,
    generate_corpus,
    log_mel_distance,
    manifest_path,
    mel_target,
    split_corpus,
    write_manifest,
)
from .evaluate import evaluate
from .exceptions import ConfigurationError, Phone2WaveError
from .model import Phone2WaveModel
from .nn import load_checkpoint
from .reports import ReportManager
from .schedule import inference_schedule, schedule_from_config
from .train import (
    MetricsWriter,
    Trainer,
    checkpoint_path,
    latest_checkpoint,
    load_model_checkpoint,
    load_training_checkpoint,
)
from .wav import wav_write

app = typer.Typer(
    name="phone2wave",
    help="Train and run a desk-scale phoneme-to-waveform diffusion model on a synthetic tone corpus.",
    add_completion=False,
)
console = Console()

CORPUS_FILE = "corpus.p2wc"


def _load_config(
    config_file: Optional[Path],
    out: Optional[Path],
    seed: Optional[int],
    overrides: Optional[Dict[str, Any]],
    verbose: bool,
) -> Tuple[ConfigManager, RunConfig]:
    """Validate the full run config before anything touches the disk"""
    manager = ConfigManager(verbose=verbose, config_file=config_file, out_dir=out, seed=seed)
    try:
        return manager, manager.load(overrides)
    except ConfigurationError as e:
        console.print(f"❌ Invalid configuration: {e}", style="bold red")
        for path in e.field_paths:
            console.print(f"   field: {path}", style="red")
        raise typer.Exit(1)


def _fail(e: Exception, verbose: bool) -> None:
    console.print(f"❌ Error: {e}", style="bold red")
    if verbose:
        console.print_exception()
    raise typer.Exit(1)


def _load_corpus(path: Path, config: RunConfig, verbose: bool):
    if not path.exists():
        console.print(f"Error: Corpus file does not exist: {path}", style="bold red")
        raise typer.Exit(1)
    utterances = corpus_read(path, verbose=verbose)
    check_corpus_config(utterances, config.corpus)
    manifest = ConfigManager(verbose=verbose).load_json(manifest_path(path))
    if manifest is None:
        console.print(
            f"Warning: No manifest next to {path}; splitting at train_count={config.corpus.train_count}",
            style="yellow",
        )
    return split_corpus(utterances, manifest, config.corpus.train_count)


def _model_from_checkpoint(checkpoint: Path, verbose: bool) -> Tuple[RunConfig, Phone2WaveModel]:
    if not checkpoint.exists():
        console.print(f"Error: Checkpoint does not exist: {checkpoint}", style="bold red")
        raise typer.Exit(1)
    meta = load_checkpoint(checkpoint).meta
    try:
        config = ConfigManager(verbose=verbose).validate(meta["config"])
    except (ConfigurationError, KeyError) as e:
        console.print(f"❌ Checkpoint carries no usable run config: {e}", style="bold red")
        raise typer.Exit(1)
    model = Phone2WaveModel(config.model, seed=config.seed, verbose=verbose)
    load_model_checkpoint(checkpoint, model, verbose)
    return config, model


@app.command("gen-corpus")
def gen_corpus(
    config_file: Optional[Path] = typer.Option(None, "--config", help="JSON run config (default: desk defaults)"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory (default: run config out_dir)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for every random draw"),
    train_count: Optional[int] = typer.Option(None, "--train-count", help="Override number of training utterances"),
    holdout_count: Optional[int] = typer.Option(None, "--holdout-count", help="Override number of holdout utterances"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose debug output"),
) -> None:
    """Generate the synthetic tone corpus and its manifest."""
    overrides: Dict[str, Any] = {}
    if train_count is not None:
        overrides["corpus.train_count"] = train_count
    if holdout_count is not None:
        overrides["corpus.holdout_count"] = holdout_count
    manager, config = _load_config(config_file, out, seed, overrides, verbose)

    out_dir = Path(config.out_dir)
    corpus_file = out_dir / CORPUS_FILE
    try:
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
            task = progress.add_task("Generating utterances...", total=None)
            utterances = generate_corpus(config.corpus, config.seed, verbose=verbose)
            progress.update(task, description="Writing corpus...")
            checksum = corpus_write(utterances, corpus_file, config.corpus, verbose=verbose)
            write_manifest(build_manifest(config.corpus, config.seed, checksum, len(utterances)), manifest_path(corpus_file))
            manager.save(config, str(out_dir / "run_config.json"))
            progress.update(task, description="✅ Corpus complete!")
    except (OSError, Phone2WaveError) as e:
        _fail(e, verbose)

    console.print(f"💾 Corpus saved: {corpus_file} ({len(utterances)} utterances, crc32 {checksum})")
    console.print("🎉 Corpus generation completed successfully!", style="bold green")


@app.command()
def train(
    config_file: Optional[Path] = typer.Option(None, "--config", help="JSON run config"),
    corpus: Optional[Path] = typer.Option(None, "--corpus", help=f"Corpus file (default: <out>/{CORPUS_FILE})"),
    out: Optional[Path] = typer.Option(None, "--out", help="Run directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for every random draw"),
    steps: Optional[int] = typer.Option(None, "--steps", help="Override total training steps"),
    resume: bool = typer.Option(False, "--resume", help="Continue from the latest checkpoint in the run directory"),
    force: bool = typer.Option(False, "--force", help="Overwrite an existing run"),
    skip_eval: bool = typer.Option(False, "--skip-eval", help="Do not run the final evaluation"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose debug output"),
) -> None:
    """Train the model, writing checkpoints, a metrics CSV and a final evaluation report."""
    overrides = {"train.steps": steps} if steps is not None else None
    manager, config = _load_config(config_file, out, seed, overrides, verbose)
    out_dir = Path(config.out_dir)
    ckpt_dir = out_dir / "checkpoints"
    corpus = corpus or out_dir / CORPUS_FILE

    existing = latest_checkpoint(ckpt_dir) if ckpt_dir.exists() else None
    if existing is not None and not (resume or force):
        console.print(
            f"Error: {ckpt_dir} already holds checkpoints; pass --resume to continue or --force to overwrite",
            style="bold red",
        )
        raise typer.Exit(1)
    if resume and existing is None:
        console.print("Warning: --resume given but no checkpoint found, starting fresh", style="yellow")

    try:
        train_set, holdout = _load_corpus(corpus, config, verbose)
        if force and not resume and ckpt_dir.exists():
            shutil.rmtree(ckpt_dir)
            if verbose:
                console.print(f"[DEBUG] Removed previous checkpoints in {ckpt_dir}", style="dim")

        model = Phone2WaveModel(config.model, seed=config.seed, verbose=verbose)
        trainer = Trainer(config, model, train_set, verbose=verbose)
        metrics = MetricsWriter(out_dir / "metrics.csv", verbose=verbose)
        if resume and existing is not None:
            trainer.state = load_training_checkpoint(existing, model, verbose)
            console.print(f"🔄 Resumed from {existing} at step {trainer.state.step}", style="bold blue")
            metrics.start(resume_step=trainer.state.step)
        else:
            metrics.start()
        manager.save(config, str(out_dir / "run_config.json"))

        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
            task = progress.add_task("Training...", total=None)

            def show(m):
                progress.update(
                    task,
                    description=f"Training step {m.step + 1}/{config.train.steps}  eps {m.eps_loss:.4f}  dur {m.dur_loss:.3f}",
                )

            trainer.run(config.train.steps, metrics, ckpt_dir, on_step=show)
            progress.update(task, description="✅ Training complete!")
        console.print(f"💾 Checkpoint saved: {checkpoint_path(ckpt_dir, trainer.state.step)}")

        if not skip_eval and config.train.steps > 0 and holdout:
            with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
                task = progress.add_task("Evaluating on holdout...", total=None)
                report = evaluate(
                    model,
                    holdout,
                    schedule_from_config(config.schedule),
                    config.eval.steps_list,
                    config.mel,
                    seed=config.seed,
                    max_utterances=config.eval.max_utterances,
                    mean_duration=mean_token_duration(train_set),
                    verbose=verbose,
                )
                progress.update(task, description="✅ Evaluation complete!")
            reports = ReportManager(verbose=verbose)
            reports.set_evaluation(report)
            reports.save_report(str(out_dir / "eval_report.json"))
            reports.save_report(str(out_dir / "eval_report.csv"))
    except KeyboardInterrupt:
        console.print("\n❌ Training interrupted by user; rerun with --resume", style="bold red")
        raise typer.Exit(1)
    except (OSError, Phone2WaveError) as e:
        _fail(e, verbose)

    console.print("🎉 Training completed successfully!", style="bold green")


@app.command()
def synth(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint to synthesize with"),
    tokens: Optional[str] = typer.Option(None, "--tokens", help="Comma-separated token ids, e.g. 2,5,0,7,1"),
    index: Optional[int] = typer.Option(None, "--index", help="Utterance index in the corpus"),
    corpus: Optional[Path] = typer.Option(None, "--corpus", help="Corpus file used with --index"),
    steps: List[int] = typer.Option([], "--steps", help="Reverse steps; repeat for a sweep (default: training N)"),
    seed: int = typer.Option(0, "--seed", help="Seed for the reverse process"),
    out: Path = typer.Option(Path("out.wav"), "--out", help="Output WAV path"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose debug output"),
) -> None:
    """Synthesize a WAV from token ids or a corpus utterance using predicted durations."""
    if (tokens is None) == (index is None):
        console.print("Error: give exactly one of --tokens or --index", style="bold red")
        raise typer.Exit(1)
    if any(s < 1 for s in steps):
        console.print("Error: --steps must be at least 1", style="bold red")
        raise typer.Exit(1)

    try:
        config, model = _model_from_checkpoint(checkpoint, verbose)
        reference = None
        if tokens is not None:
            try:
                token_ids = np.asarray([int(t) for t in tokens.split(",") if t.strip()], dtype=np.int64)
            except ValueError:
                console.print(f"Error: --tokens must be comma-separated integers, got '{tokens}'", style="bold red")
                raise typer.Exit(1)
        else:
            train_set, holdout = _load_corpus(corpus or checkpoint.parent.parent / CORPUS_FILE, config, verbose)
            utterances = list(train_set) + list(holdout)
            if not 0 <= index < len(utterances):
                console.print(f"Error: --index {index} outside corpus of {len(utterances)}", style="bold red")
                raise typer.Exit(1)
            token_ids = utterances[index].tokens
            reference = utterances[index].waveform

        train_schedule = schedule_from_config(config.schedule)
        sweep = steps or [train_schedule.N]
        distances: Dict[str, Any] = {"seed": seed, "tokens": token_ids.tolist(), "steps": {}}
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
            task = progress.add_task("Synthesizing...", total=None)
            for n in sweep:
                progress.update(task, description=f"Synthesizing with {n} steps...")
                result = model.synthesize(
                    token_ids, inference_schedule(train_schedule, n), np.random.default_rng([seed, n])
                )
                target = out if len(sweep) == 1 else out.with_name(f"{out.stem}_{n}{out.suffix}")
                wav_write(result.waveform, config.corpus.sample_rate, target, verbose)
                entry: Dict[str, Any] = {
                    "file": target.name,
                    "frames": result.total_frames,
                    "durations": [float(d) for d in result.durations],
                }
                if reference is not None:
                    entry["log_mel_distance"] = log_mel_distance(
                        mel_target(result.waveform, config.mel), mel_target(reference, config.mel)
                    )
                distances["steps"][str(n)] = entry
                console.print(f"💾 WAV saved: {target} ({result.waveform.size} samples)")
            progress.update(task, description="✅ Synthesis complete!")

        sidecar = out.with_name(f"{out.stem}_distances.json")
        with open(sidecar, "w", encoding="utf-8") as f:
            json.dump(distances, f, indent=2, sort_keys=True)
            f.write("\n")
        console.print(f"💾 Distances saved: {sidecar}")
    except (OSError, Phone2WaveError) as e:
        _fail(e, verbose)

    console.print("🎉 Synthesis completed successfully!", style="bold green")


@app.command("evaluate")
def evaluate_command(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint to evaluate"),
    corpus: Optional[Path] = typer.Option(None, "--corpus", help=f"Corpus file (default: next to the run, {CORPUS_FILE})"),
    out: Optional[Path] = typer.Option(None, "--out", help="Report directory (default: the checkpoint's run)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for evaluation draws"),
    steps: List[int] = typer.Option([], "--steps", help="Reverse step counts; repeat for several"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose debug output"),
) -> None:
    """Evaluate an existing checkpoint on the holdout split."""
    try:
        config, model = _model_from_checkpoint(checkpoint, verbose)
        run_dir = checkpoint.parent.parent
        out_dir = out or run_dir
        steps_list = steps or config.eval.steps_list
        if any(not 1 <= s <= config.schedule.num_steps for s in steps_list):
            console.print(f"Error: --steps must lie in [1, {config.schedule.num_steps}]", style="bold red")
            raise typer.Exit(1)
        train_set, holdout = _load_corpus(corpus or run_dir / CORPUS_FILE, config, verbose)
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
            task = progress.add_task("Evaluating on holdout...", total=None)
            report = evaluate(
                model,
                holdout,
                schedule_from_config(config.schedule),
                steps_list,
                config.mel,
                seed=config.seed if seed is None else seed,
                max_utterances=config.eval.max_utterances,
                mean_duration=mean_token_duration(train_set),
                verbose=verbose,
            )
            progress.update(task, description="✅ Evaluation complete!")
        reports = ReportManager(verbose=verbose)
        reports.set_evaluation(report)
        reports.save_report(str(Path(out_dir) / "eval_report.json"))
        reports.save_report(str(Path(out_dir) / "eval_report.csv"))
    except (OSError, Phone2WaveError) as e:
        _fail(e, verbose)

    summary = report["summary"]
    console.print(f"📊 ε validation loss: {summary['eps_val_loss']:.4f}")
    console.print(f"📊 Noise baseline log-mel distance: {summary['noise_baseline']:.4f}")
    for n, values in summary["log_mel"].items():
        console.print(f"📊 {n} steps: teacher {values['teacher']:.4f}, predicted {values['predicted']:.4f}")
    console.print("🎉 Evaluation completed successfully!", style="bold green")


@app.command()
def ablate(
    axis: str = typer.Option(..., "--axis", help=f"One of {', '.join(AXES)}"),
    config_file: Optional[Path] = typer.Option(None, "--config", help="JSON run config"),
    corpus: Optional[Path] = typer.Option(None, "--corpus", help=f"Corpus file (default: <out>/{CORPUS_FILE})"),
    out: Optional[Path] = typer.Option(None, "--out", help="Run directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for every random draw"),
    steps: Optional[int] = typer.Option(None, "--steps", help="Override training steps per variant"),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Trained checkpoint for --axis steps"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose debug output"),
) -> None:
    """Train and evaluate one variant per setting of an ablation axis and print the comparison."""
    if axis not in AXES:
        console.print(f"Error: unknown axis '{axis}'; choose from {', '.join(AXES)}", style="bold red")
        raise typer.Exit(1)
    overrides = {"train.steps": steps} if steps is not None else None
    _, config = _load_config(config_file, out, seed, overrides, verbose)
    out_dir = Path(config.out_dir)

    try:
        model = None
        if checkpoint is not None:
            if axis != "steps":
                console.print("Warning: --checkpoint is only used with --axis steps", style="yellow")
            else:
                config, model = _model_from_checkpoint(checkpoint, verbose)
        train_set, holdout = _load_corpus(corpus or out_dir / CORPUS_FILE, config, verbose)
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
            task = progress.add_task(f"Ablating {axis}...", total=None)
            runner = AblationRunner(
                config,
                train_set,
                holdout,
                verbose=verbose,
                on_variant=lambda name: progress.update(task, description=f"Running variant {name}..."),
            )
            reports = runner.run(axis, model)
            progress.update(task, description="✅ Ablation complete!")
        reports.save_ablation_csv(str(out_dir / f"ablation_{axis}.csv"))
        reports.save_ablation_text(str(out_dir / f"ablation_{axis}.txt"), f"Ablation: {axis}")
        console.print(reports.ablation_table(f"Ablation: {axis}"))
    except (OSError, Phone2WaveError) as e:
        _fail(e, verbose)

    console.print("🎉 Ablation completed successfully!", style="bold green")


@app.command()
def version() -> None:
    """Show version information."""
    console.print(f"phone2wave version {__version__}")


if __name__ == "__main__":
    app()
