"""``gazescreen`` command line: one subcommand per pipeline stage plus ``pipeline`` end to end.

Exit codes: 0 success, 1 validation error (bad input, config or usage),
2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from gazescreen.errors import GazeScreenError, InvalidConfig, ValidationError

log = logging.getLogger("gazescreen")

COMMANDS = ("simulate", "ingest", "events", "render", "augment", "dataset", "train", "predict", "eval", "pipeline", "gradcheck")


class UnknownSubcommand(ValidationError):
    pass


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; here usage problems are validation errors.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _load_json(path) -> dict:
    """Read a JSON config; the bare name ``demo`` selects the packaged demo config."""
    if path is None:
        return {}
    if path == "demo" and not Path(path).exists():
        from gazescreen.pipeline import demo_config

        return demo_config()
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc


def _csv_inputs(path: Path) -> list[Path]:
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    files = [p for p in files if not p.name.endswith((".fixations.csv", ".saccades.csv"))]
    if not files:
        raise ValidationError(f"no gaze CSV files at {path}")
    return files


def _png_inputs(path: Path) -> list[Path]:
    files = sorted(path.glob("*.png")) if path.is_dir() else [path]
    if not files:
        raise ValidationError(f"no PNG files at {path}")
    return files


# ---------------------------------------------------------------- subcommands


def cmd_simulate(a) -> int:
    from gazescreen.gaze_io import save_recording
    from gazescreen.simulate import load_profile, simulate_cohort

    prof = load_profile(a.profile)
    recs = simulate_cohort(prof, a.n, a.seed, duration_ms=a.duration_ms, rate_hz=a.rate_hz)
    for rec in recs:
        save_recording(rec, a.out)
    print(f"{len(recs)} recordings -> {a.out}")
    return 0


def cmd_ingest(a) -> int:
    from gazescreen.gaze_io import read_recording, save_recording
    from gazescreen.render import RenderConfig

    canvas = RenderConfig.from_config(_load_json(a.config).get("render")).source_canvas
    files = _csv_inputs(Path(a.inp))
    recs = [read_recording(p) for p in files]
    for rec in recs:
        rec.validate(canvas)
    for p, rec in zip(files, recs):
        save_recording(rec, a.out, p.stem)
    print(f"{len(recs)} recordings validated -> {a.out}")
    return 0


def _detection(a):
    from gazescreen.events import DetectionParams
    from gazescreen.geometry import ViewingGeometry

    cfg = _load_json(a.config)
    params = DetectionParams.from_config(cfg.get("detection"))
    if getattr(a, "overlong", None):
        params = replace(params, overlong=a.overlong)
    return params, ViewingGeometry.from_config(cfg.get("geometry")), cfg


def cmd_events(a) -> int:
    from gazescreen.events import build_scanpath, fixations_csv, saccades_csv
    from gazescreen.gaze_io import read_recording

    params, geom, _ = _detection(a)
    files = _csv_inputs(Path(a.inp))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in files:
        sp = build_scanpath(read_recording(p), params, geom)
        (out / f"{p.stem}.fixations.csv").write_text(fixations_csv(sp.fixations))
        (out / f"{p.stem}.saccades.csv").write_text(saccades_csv(sp.saccades))
        print(f"{p.stem}: {len(sp.fixations)} fixations, {len(sp.saccades)} saccades")
    return 0


def cmd_render(a) -> int:
    from gazescreen.events import build_scanpath
    from gazescreen.gaze_io import read_recording
    from gazescreen.render import RenderConfig, image_filename, render_scanpath, save_png

    params, geom, cfg = _detection(a)
    block = dict(cfg.get("render") or {})
    if a.style:
        block["style"] = a.style
    if a.size:
        block["output_size"] = a.size
    rcfg = RenderConfig.from_config(block)
    files = _csv_inputs(Path(a.inp))
    recs = [read_recording(p) for p in files]
    for rec in recs:
        rec.validate(rcfg.source_canvas)
    for rec in recs:
        save_png(render_scanpath(build_scanpath(rec, params, geom), rcfg), Path(a.out) / image_filename(rec.participant_id, rcfg.style))
    print(f"{len(recs)} images -> {a.out}")
    return 0


def cmd_augment(a) -> int:
    from gazescreen.augment import augment_dir

    written = augment_dir(a.inp, a.out)
    print(f"{len(written)} augmented images -> {a.out}")
    return 0


def cmd_dataset(a) -> int:
    from gazescreen.dataset import DatasetManifest, build_manifest, split, subset

    if a.action == "build":
        m = build_manifest(a.inp, a.tag)
        path = m.save(a.out if a.out.endswith(".json") else Path(a.out) / "manifest.json")
        print(f"{len(m)} images -> {path}")
    elif a.action == "split":
        if a.seed is None:
            raise UsageError("dataset split requires --seed")
        m = DatasetManifest.load(a.manifest)
        tr, te = split(m, a.fraction, a.seed, a.unit)
        out = Path(a.out)
        tr.save(out / "train.json")
        te.save(out / "test.json")
        per = " ".join(f"{g.value}={tr.class_counts[g]}/{te.class_counts[g]}" for g in m.classes)
        print(f"{len(tr)}/{len(te)}")
        print(per)
    else:
        m = subset(DatasetManifest.load(a.manifest), a.classes.split(","))
        path = m.save(a.out if a.out.endswith(".json") else Path(a.out) / "manifest.json")
        print(f"{len(m)} images -> {path}")
    return 0


def _model_cfg(a, classes, block: dict):
    from gazescreen.model import ModelConfig

    block = dict(block)
    block.pop("class_sets", None)
    for key, val in (("depth", a.depth), ("input_size", a.input_size), ("width_multiplier", a.width)):
        if val is not None:
            block[key] = val
    block["classes"] = [g.value for g in classes]
    return ModelConfig.from_json(block)


def cmd_train(a) -> int:
    from gazescreen.dataset import DatasetManifest
    from gazescreen.model import TrainConfig, build_model, load_backbone, save_model, train

    cfg = _load_json(a.config)
    m = DatasetManifest.load(a.train)
    mcfg = _model_cfg(a, m.classes, cfg.get("model") or {})
    block = dict(cfg.get("train") or {}, seed=a.seed)
    if a.epochs is not None:
        block["epochs"] = a.epochs
    if a.lr is not None:
        block["learning_rate"] = a.lr
    tcfg = TrainConfig.from_json(block)
    model = build_model(mcfg, a.seed)
    if a.backbone:
        load_backbone(model, a.backbone)
    root = a.root or m.header.get("root") or Path(a.train).parent
    _, hist = train(model, m, tcfg, root=root)
    out = Path(a.out)
    path = save_model(model, out / "model.rcm")
    (out / "history.json").write_text(json.dumps({"loss": hist.loss, "accuracy": hist.accuracy, "phase": hist.phase}) + "\n")
    print(f"final train accuracy {hist.accuracy[-1]:.3f} -> {path}")
    return 0


def cmd_predict(a) -> int:
    from gazescreen.model import load_model, predict
    from gazescreen.render import load_png

    model = load_model(a.model)
    names = [g.value for g in model.classes]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["image", "pred", *names])
    for p in _png_inputs(Path(a.inp)):
        probs = predict(model, load_png(p))
        w.writerow([p.name, names[int(np.argmax(probs))], *(f"{v:.6f}" for v in probs)])
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "predictions.csv").write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def _matrix_from_predictions(path) -> "ConfusionMatrix":
    from gazescreen.evaluation import ConfusionMatrix
    from gazescreen.gaze_io import GroupLabel, canonical_order

    rows = list(csv.DictReader(Path(path).read_text().splitlines()))
    if not rows or not {"true", "pred"} <= set(rows[0]):
        raise ValidationError(f"{path}: need a header with 'true' and 'pred' columns and at least one row")
    true = [GroupLabel.parse(r["true"]) for r in rows]
    pred = [GroupLabel.parse(r["pred"]) for r in rows]
    classes = canonical_order(true + pred)
    idx = {g: i for i, g in enumerate(classes)}
    return ConfusionMatrix.from_labels(classes, [idx[g] for g in true], [idx[g] for g in pred])


def cmd_eval(a) -> int:
    from gazescreen.dataset import DatasetManifest
    from gazescreen.evaluation import accuracy, evaluate, format_accuracy, report

    if a.predictions:
        cm = _matrix_from_predictions(a.predictions)
        depth, tag = a.depth or 18, a.tag
    else:
        if not (a.model and a.test):
            raise UsageError("eval needs --model and --test, or --predictions")
        from gazescreen.model import load_model

        model = load_model(a.model)
        m = DatasetManifest.load(a.test)
        cm = evaluate(model, m, root=a.root or m.header.get("root") or Path(a.test).parent)
        depth, tag = model.config.depth, m.header.get("tag", a.tag)
    report(cm, {"depth": depth, "tag": tag}, a.out, heatmap=a.heatmap)
    print(format_accuracy(accuracy(cm)))
    return 0


def cmd_pipeline(a) -> int:
    from gazescreen.pipeline import run_pipeline

    raw = _load_json(a.config)
    if a.repeats is not None:
        raw["repeats"] = a.repeats
    if a.augment:
        raw["augment"] = True
    if a.inp:
        raw.setdefault("paths", {})["in"] = a.inp
    res = run_pipeline(raw, a.seed, a.out)
    sys.stdout.write(res["report"])
    return 0


def cmd_gradcheck(a) -> int:
    from gazescreen.model import ModelConfig, build_model, grad_check

    cfg = ModelConfig(depth=a.depth, n_classes=2, input_size=a.input_size, width_multiplier=a.width)
    model = build_model(cfg, a.seed)
    img = np.random.default_rng(a.seed).random((3, a.input_size, a.input_size))
    err = grad_check(model, img, 0, epsilon=a.epsilon, n_params=a.n_params, seed=a.seed)
    print(f"max relative error {err:.3e} over {a.n_params} parameters (tolerance {a.tol:g})")
    return 0 if err < a.tol else 2


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gazescreen", description="Gaze scan-path screening pipeline.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="synthetic gaze recordings for one bias profile")
    s.add_argument("--profile", required=True, help="control, depressive, anxious or a profile JSON")
    s.add_argument("--n", type=int, default=40)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--duration-ms", type=float, default=10000.0)
    s.add_argument("--rate-hz", type=float, default=120.0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("ingest", help="validate gaze CSVs and copy them in canonical form")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("events", help="fixation and saccade tables")
    s.add_argument("action", choices=["export"])
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--overlong", choices=["drop", "truncate"])
    s.set_defaults(fn=cmd_events)

    s = sub.add_parser("render", help="scan-path PNGs from gaze CSVs")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--style", choices=["overlay", "polyline"])
    s.add_argument("--size", type=int)
    s.add_argument("--overlong", choices=["drop", "truncate"])
    s.set_defaults(fn=cmd_render)

    s = sub.add_parser("augment", help="apply the nine-filter bank to every PNG")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_augment)

    s = sub.add_parser("dataset", help="manifests: build, split, subset")
    s.add_argument("action", choices=["build", "split", "subset"])
    s.add_argument("--in", dest="inp", help="image directory (build)")
    s.add_argument("--manifest", help="input manifest (split, subset)")
    s.add_argument("--tag", default="synthetic")
    s.add_argument("--fraction", type=float, default=0.8)
    s.add_argument("--seed", type=int)
    s.add_argument("--unit", default="participant", choices=["participant", "image"])
    s.add_argument("--classes", default="anxious,control,depressive")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_dataset)

    s = sub.add_parser("train", help="train a residual classifier on a manifest")
    s.add_argument("--train", required=True, help="training manifest")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="pipeline config; its model and train blocks are used")
    s.add_argument("--root", help="directory image paths are relative to (default: manifest dir)")
    s.add_argument("--depth", type=int)
    s.add_argument("--input-size", type=int)
    s.add_argument("--width", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--backbone", help=".rcm file whose non-head weights initialise the model")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("predict", help="class probabilities for PNGs")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_predict)

    s = sub.add_parser("eval", help="confusion matrix and accuracy report")
    s.add_argument("--model")
    s.add_argument("--test", help="test manifest")
    s.add_argument("--root")
    s.add_argument("--predictions", help="CSV with true,pred columns instead of a model")
    s.add_argument("--depth", type=int, help="architecture depth for the report row (--predictions)")
    s.add_argument("--tag", default="synthetic")
    s.add_argument("--heatmap", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("pipeline", help="simulate/ingest through eval in one run")
    s.add_argument("--config", required=True, help="pipeline config JSON, or 'demo' for the packaged one")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--in", dest="inp", help="gaze CSV directory instead of simulation")
    s.add_argument("--repeats", type=int, help="independent splits, seeds seed..seed+N-1")
    s.add_argument("--augment", action="store_true")
    s.set_defaults(fn=cmd_pipeline)

    s = sub.add_parser("gradcheck", help="finite-difference check of a fresh model")
    s.add_argument("--depth", type=int, default=8)
    s.add_argument("--input-size", type=int, default=32)
    s.add_argument("--width", type=float, default=0.125)
    s.add_argument("--epsilon", type=float, default=1e-4)
    s.add_argument("--n-params", type=int, default=200)
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_gradcheck)
    return p


def run_subcommand(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    first = next((t for t in argv if not t.startswith("-")), None)
    if first is None and ("-h" in argv or "--help" in argv):
        parser.print_help()
        return 0
    if first is None or first not in COMMANDS:
        sys.stderr.write(parser.format_usage())
        sys.stderr.write(f"gazescreen: unknown subcommand {first!r}; choose from {', '.join(COMMANDS)}\n")
        return 1
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.fn(args)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (GazeScreenError, OSError, RuntimeError) as exc:
        sys.stderr.write(f"runtime error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run_subcommand())


if __name__ == "__main__":
    main()
