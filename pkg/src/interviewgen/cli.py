"""Command-line entry points for data generation, the three training
stages, evaluation, the data-scale experiment, a terminal chat loop and the
HTTP service."""
from __future__ import annotations

import json
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from .manager import DecodeConfig
from .model import AblationFlags, ModelConfig
from .synthetic import GeneratorConfig, generate_bundle, save_bundle


def _progress_printer(enabled: bool):
    if not enabled:
        return None

    def emit(payload: dict) -> None:
        click.echo(json.dumps(payload, sort_keys=True))

    return emit


def _stage_config(stage, data_dir, out, seed, preset, steps, eval_interval, batch,
                  lr, lam=0.8, unfreeze="none", shuffle_labels=False):
    from .training import StageConfig

    return StageConfig(
        stage=stage,
        data_dir=str(data_dir),
        out_dir=str(out),
        seed=seed,
        preset=preset,
        batch_size=batch,
        learning_rate=lr,
        max_steps=steps,
        eval_interval=eval_interval,
        adaption_factor=lam,
        unfreeze=unfreeze,
        shuffle_labels=shuffle_labels,
    )


@click.group()
def main():
    """Knowledge-grounded mock-interview question generation toolkit."""


@main.command("gen-data")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--resumes", type=int, default=100, show_default=True)
@click.option("--grounded", type=int, default=2000, show_default=True)
@click.option("--ungrounded", type=int, default=20000, show_default=True)
@click.option("--matching", type=int, default=4000, show_default=True)
@click.option("--fields-per-resume", type=int, default=22, show_default=True)
def gen_data(seed, out, resumes, grounded, ungrounded, matching, fields_per_resume):
    """Generate the synthetic corpora plus manifest into OUT."""
    config = GeneratorConfig(
        seed=seed,
        num_resumes=resumes,
        num_grounded_dialogs=grounded,
        num_ungrounded_dialogs=ungrounded,
        num_matching_pairs=matching,
        fields_per_resume=fields_per_resume,
    )
    bundle = generate_bundle(config)
    save_bundle(bundle, Path(out))
    click.echo(
        json.dumps(
            {
                "out": str(out),
                "resumes": len(bundle.resumes),
                "grounded": len(bundle.grounded),
                "ungrounded": len(bundle.ungrounded),
                "matching": len(bundle.matching),
            },
            sort_keys=True,
        )
    )


def _load_data(data_dir: str, preset: str):
    from .training import TrainingData

    return TrainingData.load(data_dir, ModelConfig.from_preset(preset).vocab_cap)


@main.command("pretrain-generator")
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--preset", type=click.Choice(["desk", "paper"]), default="desk", show_default=True)
@click.option("--steps", type=int, default=2000, show_default=True)
@click.option("--eval-interval", type=int, default=200, show_default=True)
@click.option("--batch", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--progress", is_flag=True, help="print machine-readable progress lines")
def pretrain_generator_cmd(data_dir, out, seed, preset, steps, eval_interval, batch, lr, progress):
    """Pre-train the dialog generator on the ungrounded corpus."""
    from .training import pretrain_generator

    data = _load_data(data_dir, preset)
    cfg = _stage_config("pretrain_generator", data_dir, out, seed, preset, steps,
                        eval_interval, batch, lr)
    result = pretrain_generator(cfg, data, progress=_progress_printer(progress))
    click.echo(json.dumps({"best": result.best.path, "val_loss": result.best.val_score}))


@main.command("pretrain-selector")
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--generator-checkpoint", type=click.Path(exists=True), default=None,
              help="base checkpoint supplying the shared word embeddings")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--preset", type=click.Choice(["desk", "paper"]), default="desk", show_default=True)
@click.option("--steps", type=int, default=800, show_default=True)
@click.option("--eval-interval", type=int, default=100, show_default=True)
@click.option("--batch", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--shuffle-labels", is_flag=True, help="control run with permuted labels")
@click.option("--progress", is_flag=True)
def pretrain_selector_cmd(data_dir, out, generator_checkpoint, seed, preset, steps,
                          eval_interval, batch, lr, shuffle_labels, progress):
    """Pre-train the knowledge selector on job-resume matching."""
    from .training import pretrain_selector

    data = _load_data(data_dir, preset)
    cfg = _stage_config("pretrain_selector", data_dir, out, seed, preset, steps,
                        eval_interval, batch, lr, shuffle_labels=shuffle_labels)
    result = pretrain_selector(cfg, data, generator_checkpoint=generator_checkpoint,
                               progress=_progress_printer(progress))
    click.echo(json.dumps({"best": result.best.path, "val_accuracy": result.best.val_score}))


@main.command("finetune")
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--generator-checkpoint", type=click.Path(exists=True), default=None)
@click.option("--selector-checkpoint", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--preset", type=click.Choice(["desk", "paper"]), default="desk", show_default=True)
@click.option("--steps", type=int, default=800, show_default=True)
@click.option("--eval-interval", type=int, default=100, show_default=True)
@click.option("--batch", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--lambda", "lam", type=float, default=0.8, show_default=True,
              help="adaption factor: one-hot weight in the smoothed target")
@click.option("--ablation", type=click.Choice(["no_pretrain", "no_km", "no_ks", "no_ls"]),
              multiple=True)
@click.option("--unfreeze", type=click.Choice(["none", "selector", "generator", "all"]),
              default="none", show_default=True)
@click.option("--progress", is_flag=True)
def finetune_cmd(data_dir, out, generator_checkpoint, selector_checkpoint, seed, preset,
                 steps, eval_interval, batch, lr, lam, ablation, unfreeze, progress):
    """Fine-tune the decoding manager on grounded dialogs."""
    from .training import finetune_manager

    data = _load_data(data_dir, preset)
    flags = AblationFlags.parse(ablation)
    cfg = _stage_config("finetune_manager", data_dir, out, seed, preset, steps,
                        eval_interval, batch, lr, lam=lam, unfreeze=unfreeze)
    result = finetune_manager(
        cfg,
        flags,
        data,
        generator_checkpoint=generator_checkpoint,
        selector_checkpoint=selector_checkpoint,
        progress=_progress_printer(progress),
    )
    click.echo(json.dumps({"best": result.best.path, "val_loss": result.best.val_score}))


@main.command("evaluate")
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoints", type=click.Path(exists=True), multiple=True,
              required=True, help="repeatable; top-5 by validation are averaged")
@click.option("--out", type=click.Path(), required=True)
@click.option("--preset", type=click.Choice(["desk", "paper"]), default="desk", show_default=True)
@click.option("--split", type=click.Choice(["test", "valid", "train"]), default="test",
              show_default=True)
@click.option("--limit", type=int, default=None)
@click.option("--beam", type=int, default=None, help="beam width; greedy when omitted")
def evaluate_cmd(data_dir, checkpoints, out, preset, split, limit, beam):
    """Decode the test split and report all automatic metrics."""
    from .training import evaluate_model

    data = _load_data(data_dir, preset)
    decode = DecodeConfig() if beam is None else DecodeConfig(strategy="beam", beam_width=beam)
    report = evaluate_model(list(checkpoints), data, split=split, decode=decode, limit=limit)
    out_path = Path(out)
    out_path.mkdir(parents=True, exist_ok=True)
    (out_path / "metric_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True), encoding="utf-8"
    )
    rows = ["metric\tvalue"]
    for k, v in sorted(report["mean_of_top_k"].items()):
        rows.append(f"{k}\t{v:.6f}")
    (out_path / "metric_report.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    from . import plots
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.2))
    items = sorted(report["mean_of_top_k"].items())
    ax.bar([k for k, _ in items], [v for _, v in items])
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(out_path / "metric_report.png", dpi=130)
    plt.close(fig)
    click.echo(json.dumps(report["mean_of_top_k"], sort_keys=True))


@main.command("experiment")
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--scales", default="1,0.5,0.25,0.125,0.1", show_default=True)
@click.option("--seeds", default="1,2,3", show_default=True)
@click.option("--preset", type=click.Choice(["desk", "paper"]), default="desk", show_default=True)
@click.option("--pretrain-generator-steps", type=int, default=1200, show_default=True)
@click.option("--pretrain-selector-steps", type=int, default=600, show_default=True)
@click.option("--finetune-steps", type=int, default=400, show_default=True)
@click.option("--eval-limit", type=int, default=100, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--progress", is_flag=True)
def experiment_cmd(data_dir, out, scales, seeds, preset, pretrain_generator_steps,
                   pretrain_selector_steps, finetune_steps, eval_limit, jobs, progress):
    """Data-scale sweep: pretrained vs no-pretraining across training scales."""
    from .training import ExperimentConfig, run_experiment_suite

    cfg = ExperimentConfig(
        data_dir=str(data_dir),
        out_dir=str(out),
        preset=preset,
        scales=tuple(float(s) for s in scales.split(",")),
        seeds=tuple(int(s) for s in seeds.split(",")),
        pretrain_generator_steps=pretrain_generator_steps,
        pretrain_selector_steps=pretrain_selector_steps,
        finetune_steps=finetune_steps,
        eval_limit=eval_limit,
        jobs=jobs,
    )
    result = run_experiment_suite(cfg, progress=_progress_printer(progress))
    click.echo(json.dumps({
        "records": result["records_path"],
        "summary": result["summary_path"],
        "figures": result["figures"],
    }))


@main.command("chat")
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--resume-id", default=None)
@click.option("--jd-id", default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-questions", type=int, default=0, help="stop after N questions (0 = until quit)")
@click.option("--beam", type=int, default=None)
@click.option("--lambda", "lam", type=float, default=0.8, show_default=True)
def chat_cmd(data_dir, checkpoint, resume_id, jd_id, seed, max_questions, beam, lam):
    """Terminal interview loop against a fine-tuned checkpoint."""
    from .service import engine_from_checkpoint

    decode = (
        DecodeConfig(adaption_factor=lam)
        if beam is None
        else DecodeConfig(strategy="beam", beam_width=beam, adaption_factor=lam)
    )
    engine = engine_from_checkpoint(checkpoint, data_dir, decode=decode)
    rng = np.random.default_rng(seed)
    if resume_id is None:
        resume_id = sorted(engine.resumes)[int(rng.integers(len(engine.resumes)))]
    if jd_id is None:
        jd_id = sorted(engine.jds)[int(rng.integers(len(engine.jds)))]
    session, _ = engine.create_session(resume_id, jd_id)
    click.echo(f"[session {session.id}] resume={resume_id} jd={jd_id}")
    click.echo(f"interviewer> {' '.join(session.transcript[-1].tokens)}")
    asked = 1
    while max_questions <= 0 or asked < max_questions:
        try:
            answer = click.prompt("you", prompt_suffix="> ")
        except (EOFError, click.Abort):
            break
        if answer.strip().lower() in {"quit", "exit"}:
            break
        try:
            _, question, _ = engine.submit_answer(session.id, answer)
        except Exception as exc:  # show and continue
            click.echo(f"error: {exc}")
            continue
        click.echo(f"interviewer> {' '.join(question)}")
        asked += 1
    click.echo("bye")


@main.command("serve")
@click.option("--data-dir", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--port", type=int, default=8008, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--lambda", "lam", type=float, default=0.8, show_default=True)
@click.option("--beam", type=int, default=None)
@click.option("--session-log-dir", type=click.Path(), default=None)
def serve_cmd(data_dir, checkpoint, port, host, lam, beam, session_log_dir):
    """Serve the interactive interview API (and the chat UI when built)."""
    import uvicorn

    from .service import create_app, engine_from_checkpoint

    decode = (
        DecodeConfig(adaption_factor=lam)
        if beam is None
        else DecodeConfig(strategy="beam", beam_width=beam, adaption_factor=lam)
    )
    engine = engine_from_checkpoint(
        checkpoint, data_dir, decode=decode,
        log_dir=Path(session_log_dir) if session_log_dir else None,
    )
    app = create_app(engine)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
