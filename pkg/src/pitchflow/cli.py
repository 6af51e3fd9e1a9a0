"""Command-line entry points: gen-corpus, train, synth, eval.

Every command takes --config and an optional --seed and --out; all
randomness descends from one seeded generator per command, so reruns with
identical arguments produce identical files.  Exit codes: 0 success,
1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from collections import namedtuple
from pathlib import Path

import numpy as np

from . import align
from .config import (ConfigError, InferenceConfig, load_config,
                     model_config_from_text, model_config_to_text)
from .corpus import CorpusError, generate_corpus, read_ground_truth
from .evaluate import (DiversityReport, EvalError, diversity_score,
                       estimate_logf0_from_mel, logf0_histogram,
                       distribution_distance, write_diversity_csv,
                       write_histogram_csv, write_histogram_gnuplot)
from .features import (AudioFormatError, FeatureError, ManifestError,
                       TextError, estimate_f0, load_wav, mel_spectrogram,
                       read_manifest, tokenize)
from .model import AcousticModel, ModelError, checkpoint
from .model.checkpoint import CheckpointError
from .optim import Adam, OptimizerError


class UsageError(ValueError):
    """Bad command-line input that argparse cannot catch itself."""


_USAGE_ERRORS = (ConfigError, TextError, UsageError)
_RUNTIME_ERRORS = (CheckpointError, ModelError, OptimizerError, CorpusError,
                   EvalError, AudioFormatError, FeatureError, ManifestError,
                   align.AlignmentError, OSError)

_Array = namedtuple("_Array", ("name", "data"))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser():
    parser = _Parser(prog="pitchflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the INI config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the seed from the config")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("gen-corpus", help="write a synthetic corpus")
    common(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="train a model variant")
    common(p)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="synthesize one utterance")
    common(p)
    p.add_argument("--ckpt", required=True, help="trained checkpoint")
    p.add_argument("--text", required=True)
    p.add_argument("--speaker", required=True, help="speaker id from the manifest")
    p.add_argument("--t-prior", type=float, default=None)
    p.add_argument("--t-dur", type=float, default=None)
    p.add_argument("--t-pitch", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="histograms, W1 distances and diversity")
    common(p)
    p.add_argument("--ckpt", action="append", required=True,
                   help="trained checkpoint (repeatable)")
    p.add_argument("--n-texts", type=int, default=6)
    p.add_argument("--n-seeds", type=int, default=4)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


# --- shared helpers --------------------------------------------------------

def _load_items(manifest_path):
    """Manifest rows with features: tokens, mel, contour, speaker vector."""
    items = []
    for entry in read_manifest(manifest_path):
        wave = load_wav(entry.audio)
        items.append({
            "tokens": tokenize(entry.text),
            "mel": mel_spectrogram(wave),
            "contour": estimate_f0(wave),
            "speaker_vec": entry.speaker_vec,
            "speaker": entry.speaker,
            "text": entry.text,
        })
    if not items:
        raise ManifestError(f"manifest {manifest_path} holds no usable items")
    return items


def _speaker_map(manifest_path):
    speakers = {}
    for entry in read_manifest(manifest_path):
        speakers.setdefault(entry.speaker, entry.speaker_vec)
    return speakers


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _restore(ckpt_path):
    loaded = checkpoint.load(ckpt_path)
    model_cfg = model_config_from_text(loaded["config_text"])
    model = AcousticModel(model_cfg, dtype=np.float32)
    checkpoint.restore_model(model, loaded)
    return model, loaded


# --- gen-corpus -------------------------------------------------------------

def cmd_gen_corpus(args):
    cfg = load_config(args.config).require("corpus")
    spec = cfg.corpus
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    out_dir = Path(args.out) if args.out else Path("corpus")
    manifest = generate_corpus(spec, out_dir)
    print(manifest)
    return 0


# --- train ------------------------------------------------------------------

def _validation_loss(model, val_items, seed):
    """Mean loss over the validation set with frozen noise draws."""
    rng = _rng(seed, 0x56414C)
    loss, _ = model.batch_loss(val_items, rng)
    return float(loss.data)


def cmd_train(args):
    cfg = load_config(args.config).require("model", "training", "data")
    train_cfg = cfg.training
    seed = args.seed if args.seed is not None else train_cfg.seed
    out_dir = Path(args.out) if args.out else Path(f"run_{cfg.model.variant}")
    out_dir.mkdir(parents=True, exist_ok=True)

    items = _load_items(cfg.data.train_manifest)
    val_items = _load_items(cfg.data.val_manifest)

    model = AcousticModel(cfg.model, dtype=np.float32)
    start_step = 0
    if args.resume:
        loaded = checkpoint.load(args.resume)
        resumed_cfg = model_config_from_text(loaded["config_text"])
        if resumed_cfg != cfg.model:
            raise CheckpointError(
                "checkpoint architecture does not match the [model] section")
        checkpoint.restore_model(model, loaded)
        start_step = loaded["step"]
    else:
        stride = max(1, len(items) // 8)
        model.initialize_from_batch(items[::stride])

    opt = Adam(model.params(), peak_lr=train_cfg.peak_lr,
               warmup_steps=train_cfg.warmup_steps, total_steps=train_cfg.steps,
               clip_value=train_cfg.grad_clip)
    opt.step_count = start_step

    config_text = model_config_to_text(cfg.model)
    meta = {"actnorm_initialized": "1", "variant": cfg.model.variant}
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"
    log_path = out_dir / "train_log.tsv"
    log_rows = ["step\tlearning_rate\ttotal\tmel_nll\tduration\tpitch_nll\tvalidation"]
    best_val = np.inf

    def save_ckpt(path, step):
        checkpoint.save(path, model.params(), config_text=config_text,
                        step=step, seed=seed, meta=meta)

    t0 = time.time()
    for step in range(start_step + 1, train_cfg.steps + 1):
        rng = _rng(seed, step)
        idx = rng.choice(len(items), size=min(train_cfg.batch_size, len(items)),
                         replace=False)
        loss, comps = model.batch_loss([items[i] for i in idx], rng)
        if not np.isfinite(loss.data):
            log_path.write_text("\n".join(log_rows) + "\n", encoding="utf-8")
            raise ModelError(
                f"loss diverged (non-finite) at step {step}; last good checkpoint kept")
        lr = opt.current_lr
        loss.backward()
        opt.step()

        validation = ""
        if step % train_cfg.val_interval == 0 or step == train_cfg.steps:
            val_loss = _validation_loss(model, val_items, seed)
            validation = f"{val_loss:.6f}"
            save_ckpt(last_path, step)
            if val_loss < best_val:
                best_val = val_loss
                save_ckpt(best_path, step)
        if step % train_cfg.log_interval == 0 or step == train_cfg.steps or validation:
            log_rows.append(
                f"{step}\t{lr:.6g}\t{float(loss.data):.6f}\t"
                f"{comps.get('mel_nll', float('nan')):.6f}\t"
                f"{comps.get('duration', float('nan')):.6f}\t"
                f"{comps.get('pitch_nll', float('nan')):.6f}\t{validation}")

    log_path.write_text("\n".join(log_rows) + "\n", encoding="utf-8")
    if not best_path.exists():  # steps < val_interval edge case
        save_ckpt(best_path, train_cfg.steps)
    minutes = (time.time() - t0) / 60.0
    print(f"trained {train_cfg.steps - start_step} steps in {minutes:.1f} min; "
          f"best validation {best_val:.4f}")
    print(best_path)
    return 0


# --- synth ------------------------------------------------------------------

def cmd_synth(args):
    cfg = load_config(args.config).require("model", "data")
    inference = cfg.inference if cfg.inference is not None else InferenceConfig()
    if cfg.model.variant == "baseline" and args.t_pitch is not None:
        raise ConfigError("variant 'baseline' has no pitch predictor; "
                          "the --t-pitch flag does not apply")
    model, loaded = _restore(args.ckpt)
    if model.config.variant != cfg.model.variant:
        raise CheckpointError(
            f"checkpoint variant {model.config.variant!r} does not match "
            f"config variant {cfg.model.variant!r}")

    speakers = _speaker_map(cfg.data.train_manifest)
    if args.speaker not in speakers:
        known = ", ".join(sorted(speakers))
        raise UsageError(f"unknown speaker id {args.speaker!r} (known: {known})")

    seed = args.seed if args.seed is not None else 0
    t_prior = args.t_prior if args.t_prior is not None else inference.t_prior
    t_dur = args.t_dur if args.t_dur is not None else inference.t_duration
    t_pitch = args.t_pitch if args.t_pitch is not None else inference.t_pitch

    tokens = tokenize(args.text)
    result = model.synthesize(tokens, speakers[args.speaker], _rng(seed, 0),
                              t_prior=t_prior, t_duration=t_dur, t_pitch=t_pitch)

    out_dir = Path(args.out) if args.out else Path("synth_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    mel_path = out_dir / "mel.ckpt"
    checkpoint.save(mel_path, [_Array("mel", result.mel.astype(np.float32))],
                    config_text="synthesized mel spectrogram", step=0, seed=seed,
                    meta={"kind": "mel", "frames": str(result.mel.shape[1])})
    contour_lines = ["frame\tlog_f0"]
    if result.contour is not None:
        contour_lines += [f"{i}\t{v:.6f}" for i, v in enumerate(result.contour)]
    (out_dir / "contour.tsv").write_text("\n".join(contour_lines) + "\n",
                                         encoding="utf-8")
    duration_lines = ["position\ttoken_id\tframes"]
    duration_lines += [f"{i}\t{tok}\t{int(d)}"
                       for i, (tok, d) in enumerate(zip(tokens, result.durations))]
    (out_dir / "durations.tsv").write_text("\n".join(duration_lines) + "\n",
                                           encoding="utf-8")
    print(mel_path)
    return 0


# --- eval -------------------------------------------------------------------

def _eval_texts(manifest_path, limit):
    texts = []
    for entry in read_manifest(manifest_path):
        if entry.text not in texts:
            texts.append(entry.text)
        if len(texts) >= limit:
            break
    return texts


def _system_label(model, used):
    label = model.config.variant
    if label in used:
        label = f"{label}#{sum(1 for u in used if u.split('#')[0] == label) + 1}"
    used.add(label)
    return label


def cmd_eval(args):
    cfg = load_config(args.config).require("data")
    inference = cfg.inference if cfg.inference is not None else InferenceConfig()
    if cfg.data.ground_truth is None:
        raise ConfigError("[data] section needs a ground_truth key for evaluation")
    if args.n_seeds < 3:
        raise UsageError("--n-seeds must be at least 3")
    seed = args.seed if args.seed is not None else 0
    out_dir = Path(args.out) if args.out else Path("eval_out")
    out_dir.mkdir(parents=True, exist_ok=True)

    speakers = _speaker_map(cfg.data.train_manifest)
    texts = _eval_texts(cfg.data.val_manifest, args.n_texts)
    truth = read_ground_truth(cfg.data.ground_truth)

    # ground-truth histograms per speaker
    speaker_order = sorted(speakers)
    histograms = []
    gt_hist = {}
    for speaker in speaker_order:
        contours = [c for utt, (_, c) in truth.items()
                    if utt.startswith(f"{speaker}_")]
        gt_hist[speaker] = logf0_histogram(contours, system="ground_truth",
                                           speaker=speaker)
        histograms.append(gt_hist[speaker])

    systems = {}
    used_labels = set()
    for ckpt_path in args.ckpt:
        model, _ = _restore(ckpt_path)
        systems[_system_label(model, used_labels)] = model

    temps = {"prior": inference.t_prior, "duration": inference.t_duration,
             "pitch": inference.t_pitch}
    w1_lines = ["system,speaker,w1_to_ground_truth"]
    diversity_reports = {}
    sweep_lines = ["system,t_pitch,mean_across_seed_std,max_across_seed_std"]

    for system_idx, (label, model) in enumerate(sorted(systems.items())):
        def render_mel(text, speaker, render_seed, t):
            rng = _rng(seed, system_idx, texts.index(text),
                       speaker_order.index(speaker), render_seed)
            result = model.synthesize(tokenize(text), speakers[speaker], rng,
                                      t_prior=t["prior"], t_duration=t["duration"],
                                      t_pitch=t["pitch"])
            return estimate_logf0_from_mel(result.mel)

        # histograms and W1 on the shared Mel read-back channel
        for speaker in speaker_order:
            contours = [render_mel(text, speaker, s, temps)
                        for text in texts for s in range(args.n_seeds)]
            hist = logf0_histogram(contours, system=label, speaker=speaker)
            histograms.append(hist)
            w1 = distribution_distance(hist, gt_hist[speaker])
            w1_lines.append(f"{label},{speaker},{w1:.6f}")

        diversity_reports[label] = diversity_score(
            render_mel, texts, speaker_order, range(args.n_seeds), temps)

        # native-contour temperature sweep for systems with a pitch predictor
        if model.pitch is not None:
            def render_native(text, speaker, render_seed, t):
                rng = _rng(seed, 0x505349, system_idx, texts.index(text),
                           speaker_order.index(speaker), render_seed)
                result = model.synthesize(tokenize(text), speakers[speaker], rng,
                                          t_prior=t["prior"],
                                          t_duration=t["duration"],
                                          t_pitch=t["pitch"])
                return result.contour

            for t_pitch in (0.0, 0.4, 0.8):
                sweep_temps = {"prior": inference.t_prior, "duration": 0.0,
                               "pitch": t_pitch}
                report = diversity_score(render_native, texts, speaker_order,
                                         range(args.n_seeds), sweep_temps)
                sweep_lines.append(f"{label},{t_pitch},{report.mean_std:.8f},"
                                   f"{report.max_std:.8f}")

    write_histogram_csv(out_dir / "histograms.csv", histograms)
    write_histogram_gnuplot(out_dir / "histograms.dat", histograms)
    write_diversity_csv(out_dir / "diversity.csv", diversity_reports)
    (out_dir / "w1.csv").write_text("\n".join(w1_lines) + "\n", encoding="utf-8")
    (out_dir / "pitch_temperature_sweep.csv").write_text(
        "\n".join(sweep_lines) + "\n", encoding="utf-8")

    for line in w1_lines[1:]:
        print(line)
    for label, report in sorted(diversity_reports.items()):
        print(f"diversity,{label},{report.mean_std:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
