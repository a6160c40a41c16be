"""Command-line surface: audio -> spectrogram -> features -> training ->
population analysis -> task distances.

Exit codes are a stable scripting contract: 0 success, 1 runtime or
numerical error, 2 usage error. Every command writes a manifest
(resolved config, input digests, seed) next to its outputs; JSON outputs
embed it, CSV outputs reference it in a comment header.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import defaults, figures, melfront, modanalysis, taskdist
from .errors import StrfkitError
from .gaborkit import bank_to_dict, bank_from_dict, load_bank, save_bank
from .learner import TrainConfig, train
from .manifest import RunManifest
from .melfront import MelConfig, load_mel_binary, load_mel_csv
from .strfconv import OutputMode, apply_bank, project, save_featuremap
from .tasks import TASKS, make_task

STATS_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1
DENDROGRAM_SCHEMA_VERSION = 1


def _write_json(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _mel_config_from_args(args) -> MelConfig:
    return MelConfig(
        n_mels=args.n_mels,
        f_min=args.f_min,
        f_max=args.f_max,
        window_length=args.window,
        hop_length=args.hop,
        fft_size=args.fft_size,
        log_floor=args.log_floor,
    )


def _load_mel(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == melfront.MEL_MAGIC:
        return load_mel_binary(path)
    return load_mel_csv(path)


def cmd_spectrogram(args, parser) -> int:
    cfg = _mel_config_from_args(args)
    w = melfront.load_wav(args.wav, expected_sample_rate=args.sample_rate)
    if args.normalize:
        w = melfront.instance_normalize(w, epsilon=args.epsilon)
    mel = melfront.mel_spectrogram(w, cfg)
    out = Path(args.out)
    manifest = RunManifest(
        command="spectrogram",
        config={
            **dataclasses.asdict(cfg),
            "normalize": args.normalize,
            "epsilon": args.epsilon,
            "format": args.format,
        },
    )
    manifest.add_input(args.wav)
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    manifest.write(manifest_path)
    if args.format == "binary":
        melfront.save_mel_binary(mel, out)
    else:
        melfront.save_mel_csv(mel, out, manifest_name=manifest_path.name)
    print(f"wrote {out} ({mel.n_frames} frames x {mel.n_mels} channels)")
    return 0


def cmd_apply(args, parser) -> int:
    mel = _load_mel(args.mel)
    bank = load_bank(args.bank)
    fm = apply_bank(mel, bank, method=args.method)
    mode = None if args.mode == "complex" else OutputMode.from_string(args.mode)
    out = Path(args.out)
    manifest = RunManifest(
        command="apply",
        config={"mode": args.mode, "method": args.method, "format": args.format},
    )
    manifest.add_input(args.mel)
    manifest.add_input(args.bank)
    if args.format == "strz":
        save_featuremap(fm, out, mode=mode)
        manifest.write(out.with_suffix(out.suffix + ".manifest.json"))
        print(f"wrote {out} ({fm.n_frames} x {fm.n_mels} x {fm.n_filters})")
    else:
        out.mkdir(parents=True, exist_ok=True)
        manifest.write(out / "manifest.json")
        header = "# manifest=manifest.json"
        for k in range(fm.n_filters):
            if mode is None:
                for part, arr in (("real", fm.values.real), ("imag", fm.values.imag)):
                    np.savetxt(
                        out / f"filter_{k:03d}_{part}.csv",
                        arr[:, :, k],
                        delimiter=",",
                        header=header[2:],
                    )
            else:
                np.savetxt(
                    out / f"filter_{k:03d}_{mode.value}.csv",
                    project(fm, mode)[:, :, k],
                    delimiter=",",
                    header=header[2:],
                )
        print(f"wrote {fm.n_filters} filter slices to {out}/")
    return 0


def cmd_train(args, parser) -> int:
    if args.filters <= 0:
        parser.error("--filters must be positive")
    if args.epochs <= 0:
        parser.error("--epochs must be positive")
    task_kwargs = {}
    if args.task_size is not None:
        task_kwargs["size"] = args.task_size
    task = make_task(args.task, **task_kwargs)
    cfg = TrainConfig(
        n_filters=args.filters,
        learning_rate=args.lr,
        n_epochs=args.epochs,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        seed=args.seed,
        output_mode=OutputMode.from_string(args.output_mode),
    )
    report = train(task, cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_doc = {
        "task": task.name,
        "task_size": task.size,
        "n_filters": cfg.n_filters,
        "learning_rate": cfg.learning_rate,
        "n_epochs": cfg.n_epochs,
        "batch_size": cfg.batch_size,
        "optimizer": cfg.optimizer,
        "output_mode": cfg.output_mode.value,
    }
    manifest = RunManifest(command="train", config=config_doc, seed=cfg.seed)
    manifest.write(out_dir / "manifest.json")
    save_bank(
        report.bank,
        out_dir / "bank.json",
        extra={"task_name": task.name, "manifest": manifest.to_dict()},
    )
    report_doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "task": task.name,
        "config": config_doc,
        "epoch_losses": report.epoch_losses,
        "epoch_accuracies": report.epoch_accuracies,
        "gradient_check": report.gradient_check,
        "initial_bank": bank_to_dict(report.initial_bank),
        "final_bank": bank_to_dict(report.bank),
        "readout": {
            "weights": report.readout.weights.tolist(),
            "bias": report.readout.bias.tolist(),
        },
        "manifest": manifest.to_dict(),
    }
    _write_json(out_dir / "report.json", report_doc)
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        fh.write("# manifest=manifest.json\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "accuracy"])
        for i, (lo, acc) in enumerate(
            zip(report.epoch_losses, report.epoch_accuracies), start=1
        ):
            writer.writerow([i, repr(lo), repr(acc)])
    print(
        f"trained {cfg.n_filters} filters on {task.name}: final accuracy "
        f"{report.epoch_accuracies[-1]:.3f}; wrote {out_dir}/bank.json"
    )
    return 0


def cmd_analyze(args, parser) -> int:
    bank = load_bank(args.bank)
    points = bank.modulation_points(canonical=True)
    omega_max = 0.5 * bank.frame_rate
    Omega_max = 0.5 * bank.channels_per_octave
    stats = modanalysis.population_stats(
        points,
        delta_t=args.delta_t,
        delta_f=args.delta_f,
        n_boot=args.bootstrap,
        seed=args.seed,
        omega_max=omega_max,
        Omega_max=Omega_max,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="analyze",
        config={
            "delta_t_hz": args.delta_t,
            "delta_f_cpo": args.delta_f,
            "n_bootstrap": args.bootstrap,
            "omega_max_hz": omega_max,
            "Omega_max_cpo": Omega_max,
            "channels_per_octave": bank.channels_per_octave,
            "frame_rate": bank.frame_rate,
        },
        seed=args.seed,
    )
    manifest.add_input(args.bank)
    manifest.write(out_dir / "manifest.json")
    doc = {
        "schema_version": STATS_SCHEMA_VERSION,
        **stats.to_dict(),
        "manifest": manifest.to_dict(),
    }
    _write_json(out_dir / "stats.json", doc)
    with open(out_dir / "points.csv", "w", newline="") as fh:
        fh.write("# manifest=manifest.json\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["omega_hz", "Omega_cpo", "sigma_t_s", "sigma_f_oct",
             "sigma_t_frames", "sigma_f_channels", "F", "gamma"]
        )
        for m, p in zip(points, bank.filters):
            writer.writerow(
                [repr(float(v)) for v in (m.omega, m.Omega, m.sigma_t_s,
                                          m.sigma_f_oct, p.sigma_t, p.sigma_f,
                                          p.F, p.gamma)]
            )
    try:
        density = modanalysis.kde_density(points, omega_max, Omega_max)
    except StrfkitError:
        density = None
    figures.population_figure(
        points,
        density,
        out_dir / "figure.svg",
        title=f"{Path(args.bank).stem}: learned modulation plane",
        delta_t=args.delta_t,
        delta_f=args.delta_f,
    )
    print(f"analyzed {len(points)} filters; wrote {out_dir}/stats.json")
    return 0


def cmd_distance(args, parser) -> int:
    if len(args.banks) < 2:
        parser.error("need at least 2 bank files to compare")
    pops = []
    names = []
    for path in args.banks:
        with open(path) as fh:
            doc = json.load(fh)
        bank = bank_from_dict(doc)
        name = doc.get("task_name") or Path(path).stem
        if name in names:  # keep names unique for the dendrogram
            name = f"{name}#{len(names)}"
        names.append(name)
        pops.append(
            taskdist.TaskPopulation(
                task_name=name,
                points=tuple(bank.modulation_points(canonical=True)),
            )
        )
    normalized, frame = taskdist.normalize_populations(pops)
    D = taskdist.pairwise_distances(
        normalized, lam=args.reg_lambda, max_iter=args.max_iter, tol=args.tol
    )
    root, table = taskdist.linkage_with_table(D, names)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="distance",
        config={
            "lambda": args.reg_lambda,
            "max_iter": args.max_iter,
            "tol": args.tol,
            "normalization": frame.to_dict(),
            "tasks": names,
        },
    )
    for path in args.banks:
        manifest.add_input(path)
    manifest.write(out_dir / "manifest.json")
    with open(out_dir / "distances.csv", "w", newline="") as fh:
        fh.write("# manifest=manifest.json\n")
        writer = csv.writer(fh)
        writer.writerow(["task"] + names)
        for name, row in zip(names, D):
            writer.writerow([name] + [repr(float(v)) for v in row])
    _write_json(
        out_dir / "dendrogram.json",
        {
            "schema_version": DENDROGRAM_SCHEMA_VERSION,
            "linkage": "average",
            "tree": root.to_dict(),
            "manifest": manifest.to_dict(),
        },
    )
    figures.dendrogram_figure(
        table, names, out_dir / "dendrogram.svg", title="task distances"
    )
    print(f"compared {len(names)} banks; wrote {out_dir}/distances.csv")
    return 0


def _add_mel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-mels", type=int, default=defaults.N_MELS)
    p.add_argument("--f-min", type=float, default=defaults.F_MIN_HZ)
    p.add_argument("--f-max", type=float, default=defaults.F_MAX_HZ)
    p.add_argument("--window", type=float, default=defaults.WINDOW_LENGTH_S,
                   help="window length in seconds")
    p.add_argument("--hop", type=float, default=defaults.HOP_LENGTH_S,
                   help="hop length in seconds")
    p.add_argument("--fft-size", type=int, default=None)
    p.add_argument("--log-floor", type=float, default=defaults.LOG_FLOOR)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strfkit",
        description="Gabor spectro-temporal receptive field toolkit",
    )
    parser.add_argument(
        "--show-defaults",
        action="store_true",
        help="print the table of numerical defaults and exit",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("spectrogram", help="WAV -> normalized log-mel file")
    p.add_argument("wav")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["binary", "csv"], default="binary")
    p.add_argument("--sample-rate", type=int, default=None,
                   help="expected sample rate; mismatch is an error")
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction,
                   default=True, help="instance-normalize the waveform first")
    p.add_argument("--epsilon", type=float, default=defaults.NORM_EPSILON)
    _add_mel_flags(p)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("apply", help="convolve a mel file with a bank")
    p.add_argument("mel")
    p.add_argument("bank")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="complex",
                   choices=["complex", "real", "imag", "magnitude", "concat_re_im"])
    p.add_argument("--format", choices=["strz", "csv"], default="strz")
    p.add_argument("--method", choices=["auto", "direct", "fft"], default="auto")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("train", help="fit a bank on a synthetic task")
    p.add_argument("--task", choices=sorted(TASKS), default="chirp-direction")
    p.add_argument("--filters", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-mode", default="magnitude",
                   choices=["real", "imag", "magnitude", "concat_re_im"])
    p.add_argument("--task-size", type=int, default=None,
                   help="number of samples in the synthetic dataset")
    p.add_argument("--out-dir", default="train_out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="population statistics of a bank")
    p.add_argument("bank")
    p.add_argument("--delta-t", type=float, default=defaults.DELTA_T_HZ,
                   help="low temporal-modulation threshold (Hz)")
    p.add_argument("--delta-f", type=float, default=defaults.DELTA_F_CPO,
                   help="low spectral-modulation threshold (cycles/octave)")
    p.add_argument("--bootstrap", type=int, default=defaults.N_BOOTSTRAP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="analyze_out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("distance", help="Sinkhorn distances between banks")
    p.add_argument("banks", nargs="+")
    p.add_argument("--lambda", dest="reg_lambda", type=float,
                   default=defaults.SINKHORN_LAMBDA)
    p.add_argument("--max-iter", type=int, default=defaults.SINKHORN_MAX_ITER)
    p.add_argument("--tol", type=float, default=defaults.SINKHORN_TOL)
    p.add_argument("--out-dir", default="distance_out")
    p.set_defaults(func=cmd_distance)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.show_defaults:
        for name, value in sorted(defaults.as_dict().items()):
            print(f"{name} = {value}")
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.func(args, parser)
    except (StrfkitError, OSError) as exc:
        print(f"strfkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
