"""Single entry point: emgforce <subcommand>.

Every run writes its fully-resolved configuration beside its outputs, all
randomness flows from explicit --seed flags, and repeated runs with the
same arguments produce byte-identical artifacts. Failures print one
machine-parsable line: error:<category>: <message>.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import dsp, evaluation, models, runtime, synth, training
from .config import FINGER_NAMES, GeneratorConfig, RuntimeConfig, TrainConfig

EXIT_CODES = {
    "usage": 2,
    "io": 3,
    "config": 4,
    "data": 5,
    "divergence": 6,
    "runtime": 7,
}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_run_config(out_path, args, extra=None):
    """Provenance file: the fully-resolved config next to the output."""
    doc = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    doc.update(extra or {})
    out_path = Path(out_path)
    if out_path.suffix:
        cfg_path = out_path.with_name(out_path.name + ".config.json")
    else:
        cfg_path = out_path / "run_config.json"
    _write_json(cfg_path, doc)


def _load_config_defaults(argv):
    """--config FILE supplies defaults; explicit flags override."""
    if "--config" not in argv:
        return argv, {}
    i = argv.index("--config")
    try:
        path = argv[i + 1]
    except IndexError:
        raise CliError("usage", "--config needs a file argument")
    try:
        with open(path) as fh:
            values = json.load(fh)
    except FileNotFoundError:
        raise CliError("io", f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError("config", f"invalid config file: {exc}")
    if not isinstance(values, dict):
        raise CliError("config", "config file must hold a JSON object")
    return argv[:i] + argv[i + 2 :], values


def _gen_cfg(args) -> GeneratorConfig:
    kw = {}
    if getattr(args, "crosstalk", None) is not None:
        kw["crosstalk"] = args.crosstalk
    if getattr(args, "noise_floor", None) is not None:
        kw["noise_floor_frac"] = args.noise_floor
    return GeneratorConfig(**kw)


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args):
    artifacts = frozenset(filter(None, (args.artifacts or "").split(",")))
    unknown = artifacts - {"dc", "mains", "drift"}
    if unknown:
        raise CliError("usage", f"unknown artifacts: {sorted(unknown)}")
    cohort = synth.generate_cohort(
        args.subjects, reps=args.reps, duration_s=args.duration,
        seed=args.seed, artifacts=artifacts, cfg=_gen_cfg(args),
    )
    synth.save_dataset(cohort, args.out)
    _write_run_config(Path(args.out), args)
    print(f"wrote {len(cohort.records)} records to {args.out}")
    return 0


def _load_subject(data_dir, subject):
    try:
        dataset = synth.load_dataset(data_dir)
    except FileNotFoundError:
        raise CliError("io", f"no dataset manifest under {data_dir}")
    records = [(r, l) for r, l in dataset.records if r.meta["subject"] == subject]
    if not records:
        raise CliError("data", f"subject {subject} not in dataset")
    return dataset, records


def _train_one_subject(data_dir, subject, model, cfg, out_path):
    _, records = _load_subject(data_dir, subject)
    data = training.build_subject_data(records)
    train_val, test = training.split_records(data.n_records, seed=cfg.split_seed)
    ckpt, report = training.train(
        data, model, cfg, train_val_records=train_val,
        meta={"subject": subject, "data_dir": str(data_dir),
              "test_records": [int(i) for i in test]},
    )
    training.save_checkpoint(ckpt, out_path)
    _write_json(str(out_path) + ".report.json", {
        "model": model,
        "subject": subject,
        "fold_val_mse": report.fold_val_mse,
        "mean_val_mse": report.mean_val_mse,
        "final_train_mse": report.final_train_mse,
        "epochs": report.epochs,
    })
    return subject, report


def cmd_train(args):
    cfg = TrainConfig(
        lr=args.lr, epochs=args.epochs, folds=args.folds,
        batch_size=args.batch_size, seed=args.seed, split_seed=args.seed,
        hidden=args.hidden,
    )
    try:
        if args.subject != "all":
            subject, report = _train_one_subject(
                args.data, int(args.subject), args.model, cfg, args.out
            )
            _write_run_config(Path(args.out), args)
            print(f"trained {args.model} for subject {subject}: "
                  f"cv mse {report.mean_val_mse:.5f}, "
                  f"final mse {report.final_train_mse:.5f}")
            return 0
        # fan out over every subject in the dataset; --out names a directory
        dataset = synth.load_dataset(args.data)
        subjects = sorted({r.meta["subject"] for r, _ in dataset.records})
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        jobs = [(args.data, s, args.model, cfg,
                 outdir / f"{args.model}_s{s:02d}.ckpt") for s in subjects]
        if args.jobs > 1:
            import concurrent.futures as cf

            with cf.ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_train_one_subject_star, jobs))
        else:
            results = [_train_one_subject(*job) for job in jobs]
        _write_run_config(outdir, args)
        for subject, report in sorted(results):
            print(f"trained {args.model} for subject {subject}: "
                  f"cv mse {report.mean_val_mse:.5f}, "
                  f"final mse {report.final_train_mse:.5f}")
        return 0
    except training.TrainingDiverged as exc:
        raise CliError("divergence", str(exc))
    except ValueError as exc:
        raise CliError("data", str(exc))


def _train_one_subject_star(job):
    return _train_one_subject(*job)


def _load_ckpt_and_test(args):
    try:
        ckpt = training.load_checkpoint(args.ckpt)
    except FileNotFoundError:
        raise CliError("io", f"checkpoint not found: {args.ckpt}")
    subject = ckpt.meta.get("subject")
    test_ids = ckpt.meta.get("test_records")
    if subject is None or test_ids is None:
        raise CliError("config", "checkpoint lacks subject/test_records metadata")
    _, records = _load_subject(args.data, subject)
    return ckpt, subject, [records[i] for i in test_ids]


def cmd_eval(args):
    ckpt, subject, test_records = _load_ckpt_and_test(args)
    outputs, labels = evaluation.direction_scores(ckpt, test_records)
    try:
        rep = evaluation.direction_report_from_scores(outputs, labels, kind=ckpt.kind)
    except evaluation.DegenerateColumn as exc:
        raise CliError("data", f"test split degenerate: {exc}")
    doc = {
        "emgforce_report": "eval",
        "model": ckpt.kind,
        "subject": subject,
        "n_windows": rep.n_windows,
        "fingers": [
            {"finger": FINGER_NAMES[f.finger], "auc": f.auc, "se": f.se,
             "accuracy": f.accuracy}
            for f in rep.fingers
        ],
        "outputs": [[float(v) for v in row] for row in outputs],
        "labels": [[float(v) for v in row] for row in labels],
    }
    _write_json(args.report, doc)
    _write_run_config(Path(args.report), args)
    for f in rep.fingers:
        print(f"L{f.finger + 1} {FINGER_NAMES[f.finger]:>6}: "
              f"auc {f.auc:.4f} se {f.se:.5f} acc {100 * f.accuracy:.2f}%")
    return 0


def _parse_grid(spec_str):
    try:
        start, stop, step = (float(v) for v in spec_str.split(":"))
    except ValueError:
        raise CliError("usage", f"grid must be start:stop:step, got {spec_str!r}")
    if not (0 < start <= stop and step > 0):
        raise CliError("usage", "grid must satisfy 0 < start <= stop, step > 0")
    return evaluation.default_grid(start, stop, step)


def cmd_sweep(args):
    ckpt, subject, test_records = _load_ckpt_and_test(args)
    grid = _parse_grid(args.grid)
    sweeps = evaluation.interpolation_sweep(ckpt, test_records, grid)
    fingers = []
    for j in range(5):
        comb = sweeps[j]["combined"]
        verdict = evaluation.fit_verdict(comb, args.rho_min, args.r2_min)
        fingers.append({
            "finger": FINGER_NAMES[j],
            "s": [float(v) for v in comb.s],
            "values": [float(v) for v in comb.values],
            "rho": verdict.rho,
            "r2": verdict.r2,
            "monotone": verdict.monotone,
            "linear": verdict.linear,
            "passed": verdict.passed,
        })
    doc = {
        "emgforce_report": "sweep",
        "model": ckpt.kind,
        "subject": subject,
        "rho_min": args.rho_min,
        "r2_min": args.r2_min,
        "fingers": fingers,
    }
    _write_json(args.report, doc)
    _write_run_config(Path(args.report), args)
    for f in fingers:
        status = "pass" if f["passed"] else "FAIL"
        print(f"{f['finger']:>6}: rho {f['rho']:.4f} r2 {f['r2']:.4f} {status}")
    return 0


def cmd_track(args):
    try:
        ckpt = training.load_checkpoint(args.ckpt)
    except FileNotFoundError:
        raise CliError("io", f"checkpoint not found: {args.ckpt}")
    if not args.scripted:
        raise CliError("usage", "interactive tracking runs through `serve`; pass --scripted")
    finger = FINGER_NAMES.index(args.finger)
    mixing = None
    subject = ckpt.meta.get("subject")
    data_seed = ckpt.meta.get("data_seed")
    if args.data is not None:
        # regenerate the checkpoint subject's mixing matrix from the dataset manifest
        try:
            dataset = synth.load_dataset(args.data)
        except FileNotFoundError:
            raise CliError("io", f"no dataset manifest under {args.data}")
        man = dataset.manifest
        mixing = synth.subject_mixing(
            synth.mixing_matrix(man["crosstalk"]), man["seed"], subject,
            man["subject_jitter"],
        )
    try:
        session = runtime.run_sine_session(
            args.freq, args.duration, ckpt, finger, seed=args.seed,
            mixing=mixing, feedback_gain=args.feedback_gain,
        )
    except (ValueError, runtime.SessionAborted) as exc:
        raise CliError("runtime", str(exc))
    m = session.metrics
    doc = {
        "emgforce_report": "track",
        "model": ckpt.kind,
        "subject": subject,
        "freq_hz": session.freq_hz,
        "finger": args.finger,
        "feedback_gain": args.feedback_gain,
        "metrics": {"rmse": m.rmse, "mape": m.mape, "r2": m.r2},
        "n_ticks": len(session.decoded),
        "faults": session.faults,
        "times": [float(v) for v in session.times],
        "target": [float(v) for v in session.target],
        "decoded": [float(v) for v in session.decoded],
    }
    if args.out:
        _write_json(args.out, doc)
        _write_run_config(Path(args.out), args)
    print(f"tracking {args.finger} at {args.freq} Hz for {args.duration:.0f}s: "
          f"rmse {m.rmse:.4f} mape {m.mape:.4f} r2 {m.r2:.4f}")
    return 0


def cmd_serve(args):
    from . import server

    try:
        host, port = args.bind.rsplit(":", 1)
        port = int(port)
    except ValueError:
        raise CliError("usage", f"--bind must be HOST:PORT, got {args.bind!r}")
    if not Path(args.ckpt).is_file():
        raise CliError("io", f"checkpoint not found: {args.ckpt}")
    if args.ui and not Path(args.ui).is_dir():
        raise CliError("io", f"UI directory not found: {args.ui}")
    service = server.DecodeService(args.ckpt, RuntimeConfig(), seed=args.seed)
    app = server.create_app(service, ui_dir=args.ui)
    service.start()
    try:
        import uvicorn

        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        service.stop()
    return 0


def cmd_report(args):
    in_dir = Path(args.inputs)
    if not in_dir.is_dir():
        raise CliError("io", f"not a directory: {in_dir}")
    evals, sweeps, tracks = [], [], []
    for path in sorted(in_dir.glob("**/*.json")):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (json.JSONDecodeError, UnicodeDecodeError):
            continue
        kind = doc.get("emgforce_report") if isinstance(doc, dict) else None
        if kind == "eval":
            evals.append(doc)
        elif kind == "sweep":
            sweeps.append(doc)
        elif kind == "track":
            tracks.append(doc)
    if not (evals or sweeps or tracks):
        raise CliError("data", f"no emgforce report files under {in_dir}")

    lines = []
    agg = {"direction": [], "fit": [], "tracking": []}
    model_order = [m for m in ("dd", "ln", "mlp", "cnn")
                   if any(e["model"] == m for e in evals + sweeps + tracks)]

    if evals:
        lines.append("Direction classification (pooled over subjects)")
        lines.append(f"{'Output':>8} {'Method':>7} {'AUC':>10} {'SE':>10} {'Accuracy':>9}")
        for j in range(5):
            for m in model_order:
                docs = [e for e in evals if e["model"] == m]
                if not docs:
                    continue
                outputs = np.concatenate([np.asarray(d["outputs"]) for d in docs])
                labels = np.concatenate([np.asarray(d["labels"]) for d in docs])
                auc, se = evaluation.auc_with_se(outputs[:, j], labels[:, j] > 0)
                correct = ((outputs[:, j] > 0) & (labels[:, j] > 0)) | (
                    (outputs[:, j] < 0) & (labels[:, j] < 0))
                acc = float(correct.mean())
                lines.append(f"{'L' + str(j + 1):>8} {m.upper():>7} "
                             f"{auc:>10.6f} {se:>10.6f} {100 * acc:>8.2f}%")
                agg["direction"].append(
                    {"finger": FINGER_NAMES[j], "model": m, "auc": auc,
                     "se": se, "accuracy": acc})
        lines.append("")

    if sweeps:
        lines.append("Interpolation fit classification")
        header = f"{'Network':>14}"
        errs, rates = f"{'Error Times':>14}", f"{'Correct rate':>14}"
        for m in model_order:
            docs = [s for s in sweeps if s["model"] == m]
            verdicts = [f["passed"] for d in docs for f in d["fingers"]]
            if not verdicts:
                continue
            n_err = sum(not v for v in verdicts)
            rate = 100.0 * (1 - n_err / len(verdicts))
            header += f" {m.upper():>8}"
            errs += f" {n_err:>8d}"
            rates += f" {rate:>7.0f}%"
            agg["fit"].append({"model": m, "n_sweeps": len(verdicts),
                               "error_times": n_err, "correct_rate": rate / 100})
        lines += [header, errs, rates, ""]

    if tracks:
        lines.append("Sine tracking")
        for d in sorted(tracks, key=lambda d: (d["model"], str(d["subject"]))):
            m = d["metrics"]
            lines.append(f"{d['model'].upper():>6} subject {d['subject']} "
                         f"{d['finger']:>6}: rmse {m['rmse']:.4f} "
                         f"mape {m['mape']:.4f} r2 {m['r2']:.4f}")
            agg["tracking"].append({"model": d["model"], "subject": d["subject"],
                                    "finger": d["finger"], **m})
        lines.append("")

    text = "\n".join(lines)
    print(text, end="")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        _write_json(str(args.out) + ".json", agg)
        _write_run_config(Path(args.out), args)
    return 0


def cmd_dsp(args):
    did = False
    if args.dump_coeffs:
        doc = dsp.dump_coeffs()
        if args.out:
            _write_json(args.out, doc)
        else:
            print(json.dumps(doc, indent=2, sort_keys=True))
        did = True
    if args.dump_features:
        if not args.data or not args.out:
            raise CliError("usage", "--dump-features needs --data DIR and --out DIR")
        dataset = synth.load_dataset(args.data)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        from . import features as feat

        header = [f"ch{c}_{name}" for c in range(12) for name in feat.FEATURE_NAMES]
        header += [f"label_{n}" for n in FINGER_NAMES]
        for rec, labels in dataset.records:
            x = training.record_features(rec.samples)
            meta = rec.meta
            rows = [",".join(header)]
            lab = ",".join(repr(float(v)) for v in labels.values)
            for row in x:
                rows.append(",".join(repr(float(v)) for v in row) + "," + lab)
            name = f"s{meta['subject']:02d}_g{meta['gesture']:02d}_r{meta['rep']}.features.csv"
            (outdir / name).write_text("\n".join(rows) + "\n")
        did = True
    if not did:
        raise CliError("usage", "nothing to do: pass --dump-coeffs or --dump-features")
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emgforce", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic labeled cohort")
    sp.add_argument("--subjects", type=int, default=20)
    sp.add_argument("--reps", type=int, default=3)
    sp.add_argument("--duration", type=float, default=30.0)
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--artifacts", default="", help="comma list of dc,mains,drift")
    sp.add_argument("--crosstalk", type=float, default=None)
    sp.add_argument("--noise-floor", type=float, default=None, dest="noise_floor")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="train per-subject models")
    tp.add_argument("--data", required=True)
    tp.add_argument("--subject", required=True,
                    help="subject index, or 'all' to fan out (--out names a dir)")
    tp.add_argument("--model", required=True, choices=list(models.KINDS))
    tp.add_argument("--seed", type=int, default=42)
    tp.add_argument("--lr", type=float, default=0.002)
    tp.add_argument("--epochs", type=int, default=15)
    tp.add_argument("--folds", type=int, default=10)
    tp.add_argument("--batch-size", type=int, default=64, dest="batch_size")
    tp.add_argument("--hidden", type=int, default=64)
    tp.add_argument("--jobs", type=int, default=1,
                    help="parallel workers when --subject all")
    tp.add_argument("--out", required=True)
    tp.set_defaults(func=cmd_train)

    ep = sub.add_parser("eval", help="direction classification on the held-out third")
    ep.add_argument("--ckpt", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--report", required=True)
    ep.set_defaults(func=cmd_eval)

    wp = sub.add_parser("sweep", help="interpolation sweep and fit verdicts")
    wp.add_argument("--ckpt", required=True)
    wp.add_argument("--data", required=True)
    wp.add_argument("--grid", default="0.1:1.0:0.1")
    wp.add_argument("--rho-min", type=float, default=0.99, dest="rho_min")
    wp.add_argument("--r2-min", type=float, default=0.95, dest="r2_min")
    wp.add_argument("--report", required=True)
    wp.set_defaults(func=cmd_sweep)

    kp = sub.add_parser("track", help="scripted sine-wave tracking session")
    kp.add_argument("--ckpt", required=True)
    kp.add_argument("--data", default=None,
                    help="dataset dir, to rebuild the subject's mixing matrix")
    kp.add_argument("--freq", type=float, default=0.1)
    kp.add_argument("--duration", type=float, default=60.0)
    kp.add_argument("--finger", default="index", choices=list(FINGER_NAMES))
    kp.add_argument("--scripted", action="store_true")
    kp.add_argument("--feedback-gain", type=float, default=0.15, dest="feedback_gain")
    kp.add_argument("--seed", type=int, default=7)
    kp.add_argument("--out", default=None)
    kp.set_defaults(func=cmd_track)

    vp = sub.add_parser("serve", help="run the live decode service")
    vp.add_argument("--ckpt", required=True)
    vp.add_argument("--bind", default="127.0.0.1:8765")
    vp.add_argument("--ui", default=None)
    vp.add_argument("--seed", type=int, default=7)
    vp.set_defaults(func=cmd_serve)

    rp = sub.add_parser("report", help="aggregate eval/sweep/track reports")
    rp.add_argument("--in", dest="inputs", required=True)
    rp.add_argument("--out", default=None)
    rp.set_defaults(func=cmd_report)

    dp = sub.add_parser("dsp", help="dump filter coefficients or feature tables")
    dp.add_argument("--dump-coeffs", action="store_true", dest="dump_coeffs")
    dp.add_argument("--dump-features", action="store_true", dest="dump_features")
    dp.add_argument("--data", default=None)
    dp.add_argument("--out", default=None)
    dp.set_defaults(func=cmd_dsp)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv, config_defaults = _load_config_defaults(argv)
        args = parser.parse_args(argv)
        if config_defaults:
            # config file fills any option still at its parser default;
            # flags given on the command line win
            subparser = parser._subparsers._group_actions[0].choices[args.command]
            defaults = {a.dest: a.default for a in subparser._actions}
            for key, value in config_defaults.items():
                if key in defaults and getattr(args, key, None) == defaults[key]:
                    setattr(args, key, value)
        return args.func(args)
    except CliError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except FileNotFoundError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]


if __name__ == "__main__":
    sys.exit(main())
