"""Command-line surface: corpus generation, training, guided sampling,
evaluation and plotting.

Each command archives its resolved configuration as
``<out>/resolved_config.json``; rerunning from that file with the same
seed reproduces every output byte for byte. Failures print one
machine-readable JSON line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluate, inference
from . import rng as rng_mod
from .charts import write_bar_chart, write_line_chart
from .config import GuidanceDefaults, RunConfig, ScheduleSettings
from .corpus import (
    Corpus,
    generate_corpus,
    load_corpus,
    read_utterance_csv,
    save_corpus,
    write_utterance_csv,
)
from .guidance import GuidanceParams
from .schedule import cosine_schedule
from .style import normalize_weights, one_hot_weights
from .training import train


class CommandError(Exception):
    pass


def _load_run_config(args) -> RunConfig:
    run = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        run.seed = args.seed
    train_overrides = {}
    for attr, key in (
        ("steps", "steps"),
        ("batch_size", "batch_size"),
        ("learning_rate", "learning_rate"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            train_overrides[key] = value
    if getattr(args, "no_style_condition", False):
        train_overrides["style_condition"] = False
    if getattr(args, "no_text_condition", False):
        train_overrides["text_condition"] = False
    if train_overrides:
        run.train = replace(run.train, **train_overrides)
    return run


def _guidance_from(run: RunConfig, args) -> GuidanceParams:
    g = run.guidance
    return GuidanceParams(
        eta=args.eta if args.eta is not None else g.eta,
        gamma=args.gamma if args.gamma is not None else g.gamma,
        tau=args.tau if args.tau is not None else g.tau,
        steps=args.steps if getattr(args, "steps", None) is not None else run.schedule.steps,
    )


def _archive_config(run: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    run.save(out_dir / "resolved_config.json")


def _corpus_for(args) -> Corpus:
    path = Path(args.corpus)
    if not (path / "manifest.json").exists():
        raise CommandError(f"{path} does not contain a corpus manifest")
    return load_corpus(path)


# commands -------------------------------------------------------------------


def cmd_gen_data(args) -> None:
    run = _load_run_config(args)
    out_dir = Path(args.out)
    _archive_config(run, out_dir)
    corpus = generate_corpus(run.corpus, run.seed)
    save_corpus(corpus, out_dir / "corpus")
    print(f"wrote {len(corpus.utterances)} utterances to {out_dir / 'corpus'}")


def cmd_train(args) -> None:
    run = _load_run_config(args)
    corpus = _corpus_for(args)
    out_dir = Path(args.out)
    _archive_config(run, out_dir)
    bundle = inference.bundle_from_config(run, corpus)
    start = 0
    if args.resume:
        from .training import load_checkpoint

        start = load_checkpoint(bundle, args.resume)
        if start >= run.train.steps:
            raise CommandError(f"checkpoint already at step {start}, nothing to train")
    final = train(bundle, corpus, run.train, out_dir, start_step=start, progress=not args.quiet)
    print(f"checkpoint: {final}")


def _resolve_mode_conditions(args, bundle, corpus, run, n_samples):
    """Returns (texts, conditions, mode_tag). Texts are phoneme-id arrays."""
    pick = rng_mod.substream(args.seed if args.seed is not None else run.seed, rng_mod.SAMPLE_STREAM, 999)
    val = corpus.split("val")
    texts = [val[int(i)].phoneme_ids for i in pick.integers(0, len(val), size=n_samples)]

    if args.unconditional:
        return texts, None, "unconditional"

    if args.mode == "control":
        k = bundle.bank.config.token_count
        if args.token_id is not None:
            weights = one_hot_weights(args.token_id, k)
        elif args.token_weights:
            weights = np.array([float(v) for v in args.token_weights.split(",")])
            if len(weights) != k:
                raise CommandError(f"need {k} token weights, got {len(weights)}")
            if not args.raw_weights:
                weights = normalize_weights(weights)
        else:
            raise CommandError("control mode needs --token-id or --token-weights")
        from .style import condition_from_weights

        c = condition_from_weights(bundle.bank, weights, raw=args.raw_weights).data[0]
        return texts, [c] * len(texts), "control"

    if args.mode == "transfer":
        if not args.reference:
            raise CommandError("transfer mode needs --reference pointing at an utterance CSV")
        _, prosody = read_utterance_csv(args.reference)
        c = inference.style_conditions(bundle, [prosody])[0]
        return texts, [c] * len(texts), "transfer"

    # diversified: style from a sampled or provided reference per sample
    if args.reference:
        _, prosody = read_utterance_csv(args.reference)
        refs = [prosody] * len(texts)
    else:
        refs = [val[int(i)].prosody for i in pick.integers(0, len(val), size=n_samples)]
    return texts, inference.style_conditions(bundle, refs), "diversified"


def cmd_sample(args) -> None:
    corpus = _corpus_for(args)
    bundle, run, _ = inference.load_trained(args.checkpoint, corpus)
    if getattr(args, "seed", None) is not None:
        run.seed = args.seed
    guidance = _guidance_from(run, args)
    run.guidance = GuidanceDefaults(eta=guidance.eta, gamma=guidance.gamma, tau=guidance.tau)
    if guidance.steps != bundle.schedule.step_count:
        bundle.schedule = cosine_schedule(guidance.steps, run.schedule.offset)
        run.schedule = ScheduleSettings(steps=guidance.steps, offset=run.schedule.offset)
    out_dir = Path(args.out)
    _archive_config(run, out_dir)

    texts, conditions, tag = _resolve_mode_conditions(args, bundle, corpus, run, args.num_samples)
    diagnostics: list | None = [] if args.diagnostics else None
    seed = args.seed if args.seed is not None else run.seed
    generated = inference.generate(bundle, texts, conditions, guidance, seed, diagnostics=diagnostics)

    scale = np.array([args.scale_pitch, args.scale_energy, args.scale_duration])[:, None]
    sample_dir = out_dir / "samples"
    sample_dir.mkdir(parents=True, exist_ok=True)
    for i, (ids, x) in enumerate(zip(texts, generated)):
        prosody = bundle.stats.denormalize(x) * scale
        write_utterance_csv(sample_dir / f"{tag}_{i:04d}.csv", ids, prosody)
    if diagnostics is not None:
        with open(out_dir / "diagnostics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "example", "sigma_cond", "sigma_cfg", "applied_ratio"])
            for t, diag in diagnostics:
                for b in range(len(diag.sigma_cond)):
                    writer.writerow(
                        [t, b] + [repr(float(v[b])) for v in (diag.sigma_cond, diag.sigma_cfg, diag.applied_ratio)]
                    )
    print(f"wrote {len(generated)} samples to {sample_dir}")


def cmd_eval(args) -> None:
    corpus = _corpus_for(args)
    bundle, run, _ = inference.load_trained(args.checkpoint, corpus)
    if getattr(args, "seed", None) is not None:
        run.seed = args.seed
    guidance = _guidance_from(run, args)
    if guidance.steps != bundle.schedule.step_count:
        bundle.schedule = cosine_schedule(guidance.steps, run.schedule.offset)
        run.schedule = ScheduleSettings(steps=guidance.steps, offset=run.schedule.offset)
    out_dir = Path(args.out)
    _archive_config(run, out_dir)
    seed = args.seed if args.seed is not None else run.seed
    val = corpus.split("val")
    generated = inference.reconstruct(bundle, val, guidance, seed)
    js = evaluate.js_report(generated, val)

    rows = [("js_divergence", name, value) for name, value in js.items()]
    descriptors = []
    for x in generated:
        try:
            descriptors.append(evaluate.descriptor(x))
        except ValueError:
            pass
    if descriptors:
        spread = np.stack(descriptors).std(axis=0).mean()
        rows.append(("descriptor_spread", "all", float(spread)))

    sweep_rows = []
    if args.eta_sweep is not None:
        etas = [float(v) for v in args.eta_sweep.split(",") if v.strip()]
        if not etas:
            raise CommandError("empty eta sweep")
        subset = val[: args.sweep_utterances]
        for eta in etas:
            params = GuidanceParams(eta=eta, gamma=guidance.gamma, tau=guidance.tau, steps=guidance.steps)
            swept = inference.reconstruct(bundle, subset, params, seed)
            cv = evaluate.mean_cv(swept)
            sweep_rows.append((eta, cv[0], cv[1], cv[2]))

    with open(out_dir / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "channel", "value"])
        for metric, channel, value in rows:
            writer.writerow([metric, channel, repr(float(value))])
    if sweep_rows:
        with open(out_dir / "cv_sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eta", "cv_pitch", "cv_energy", "cv_duration"])
            for eta, *cvs in sweep_rows:
                writer.writerow([repr(float(eta))] + [repr(float(v)) for v in cvs])

    if args.charts:
        chart_dir = out_dir / "charts"
        chart_dir.mkdir(exist_ok=True)
        write_bar_chart(
            chart_dir / "js_divergence.svg",
            list(js.keys()),
            [js[k] for k in js],
            "JS divergence vs held-out data",
        )
        if sweep_rows:
            write_line_chart(
                chart_dir / "cv_sweep.svg",
                [r[0] for r in sweep_rows],
                {
                    "pitch": [r[1] for r in sweep_rows],
                    "energy": [r[2] for r in sweep_rows],
                    "duration": [r[3] for r in sweep_rows],
                },
                "Coefficient of variation vs guiding scale",
                x_label="eta",
            )
    for metric, channel, value in rows:
        print(f"{metric}[{channel}] = {value:.4f}")


def cmd_plot(args) -> None:
    src = Path(args.input)
    if not src.exists():
        raise CommandError(f"no such file: {src}")
    with open(src, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not body:
        raise CommandError(f"{src} has no data rows")
    x = [float(r[0]) for r in body]
    series = {name: [float(r[i]) for r in body] for i, name in enumerate(header) if i > 0}
    write_line_chart(args.out, x, series, src.stem, x_label=header[0])
    print(f"wrote {args.out}")


def cmd_dump_schedule(args) -> None:
    schedule = cosine_schedule(args.steps, args.offset)
    schedule.dump_csv(args.out)
    print(f"wrote {args.steps}-step schedule to {args.out}")


# argument wiring -------------------------------------------------------------


def _add_guidance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eta", type=float, default=None, help="guiding scale")
    p.add_argument("--gamma", type=float, default=None, help="std-correction scale in [0,1]")
    p.add_argument("--tau", type=float, default=None, help="terminal temperature")
    p.add_argument("--steps", type=int, default=None, help="diffusion steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prosodiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic corpus")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train both denoisers and the style bank")
    p.add_argument("--config", default=None)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="training steps")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--no-style-condition", action="store_true", help="ablation: drop the style pathway")
    p.add_argument("--no-text-condition", action="store_true", help="ablation: zero text embeddings")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="guided sampling in one of three modes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["diversified", "transfer", "control"], default="diversified")
    p.add_argument("--num-samples", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--reference", default=None, help="utterance CSV supplying the style")
    p.add_argument("--token-id", type=int, default=None)
    p.add_argument("--token-weights", default=None, help="comma-separated weights over tokens")
    p.add_argument("--raw-weights", action="store_true", help="skip simplex normalisation of --token-weights")
    p.add_argument("--scale-pitch", type=float, default=1.0)
    p.add_argument("--scale-energy", type=float, default=1.0)
    p.add_argument("--scale-duration", type=float, default=1.0)
    p.add_argument("--unconditional", action="store_true", help="sample from the style-unconditional denoiser")
    p.add_argument("--diagnostics", action="store_true", help="write per-step rescale diagnostics CSV")
    _add_guidance_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="JS divergence report and CV-vs-eta sweep")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eta-sweep", default=None, help="comma-separated guiding scales")
    p.add_argument("--sweep-utterances", type=int, default=24)
    p.add_argument("--charts", action="store_true", help="emit SVG charts")
    _add_guidance_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render a CSV (step/value columns) as an SVG line chart")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("dump-schedule", help="write the beta/alpha tables as CSV")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--offset", type=float, default=0.008)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_schedule)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CommandError, ValueError, FileNotFoundError, KeyError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
