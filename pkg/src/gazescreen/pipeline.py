"""End-to-end run: simulate/ingest -> events -> render -> augment -> dataset -> train -> eval."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from importlib import resources
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from gazescreen import augment as aug
from gazescreen.dataset import TAGS, DatasetManifest, build_manifest, split, subset
from gazescreen.errors import InvalidConfig
from gazescreen.evaluation import ConfusionMatrix, accuracy, evaluate, format_accuracy, matrix_csv, table_row
from gazescreen.events import DetectionParams, build_scanpath, fixations_csv, saccades_csv
from gazescreen.gaze_io import GroupLabel, canonical_order, read_recording, save_recording
from gazescreen.geometry import ViewingGeometry
from gazescreen.model import ModelConfig, TrainConfig, build_model, load_backbone, save_model, train
from gazescreen.render import RenderConfig, image_filename, load_png, render_scanpath, save_png
from gazescreen.simulate import load_profile, simulate_cohort

log = logging.getLogger(__name__)

BLOCKS = ("geometry", "detection", "render", "simulate", "augment", "dataset", "model", "train", "paths", "repeats")


@dataclass
class PipelineConfig:
    geometry: ViewingGeometry
    detection: DetectionParams
    render: RenderConfig
    train: TrainConfig
    class_sets: list[tuple[str, ...]]
    model_base: dict
    profiles: list[str] = field(default_factory=lambda: ["anxious", "control", "depressive"])
    n_per_profile: int = 40
    duration_ms: float = 10000.0
    rate_hz: float = 120.0
    augment: bool = False
    fraction: float = 0.8
    unit: str = "participant"
    tag: str = "synthetic"
    split_seed: int | None = None
    gaze_dir: str | None = None
    backbone: str | None = None
    repeats: int = 1

    @classmethod
    def from_json(cls, raw: dict) -> "PipelineConfig":
        """Validate every block up front so no stage starts on a bad config."""
        if not isinstance(raw, dict):
            raise InvalidConfig("pipeline config must be a JSON object")
        unknown = set(raw) - set(BLOCKS)
        if unknown:
            raise InvalidConfig(f"unknown config blocks: {sorted(unknown)}")
        sim = dict(raw.get("simulate") or {})
        ds = dict(raw.get("dataset") or {})
        mdl = dict(raw.get("model") or {})
        paths = dict(raw.get("paths") or {})
        for name, block, keys in (
            ("simulate", sim, {"profiles", "n", "duration_ms", "rate_hz"}),
            ("dataset", ds, {"fraction", "unit", "tag", "seed"}),
            ("paths", paths, {"in", "backbone"}),
        ):
            extra = set(block) - keys
            if extra:
                raise InvalidConfig(f"unknown {name} keys: {sorted(extra)}")

        class_sets = mdl.pop("class_sets", None)
        if class_sets is None:
            class_sets = [mdl.pop("classes", ["anxious", "control", "depressive"])]
        mdl.pop("classes", None)
        sets = [tuple(g.value for g in canonical_order(cs)) for cs in class_sets]
        for cs in sets:
            ModelConfig.from_json(dict(mdl, classes=list(cs)))

        cfg = cls(
            geometry=ViewingGeometry.from_config(raw.get("geometry")),
            detection=DetectionParams.from_config(raw.get("detection")),
            render=RenderConfig.from_config(raw.get("render")),
            train=TrainConfig.from_json(raw.get("train")),
            class_sets=sets,
            model_base=mdl,
            profiles=list(sim.get("profiles", ["anxious", "control", "depressive"])),
            n_per_profile=int(sim.get("n", 40)),
            duration_ms=float(sim.get("duration_ms", 10000.0)),
            rate_hz=float(sim.get("rate_hz", 120.0)),
            augment=bool(raw.get("augment", False)),
            fraction=float(ds.get("fraction", 0.8)),
            unit=str(ds.get("unit", "participant")),
            tag=str(ds.get("tag", "synthetic")),
            split_seed=None if ds.get("seed") is None else int(ds["seed"]),
            gaze_dir=paths.get("in"),
            backbone=paths.get("backbone"),
            repeats=int(raw.get("repeats", 1)),
        )
        if not 0 < cfg.fraction < 1 or cfg.unit not in ("participant", "image"):
            raise InvalidConfig("dataset.fraction must be in (0, 1) and unit participant|image")
        if cfg.n_per_profile < 1 or cfg.repeats < 1:
            raise InvalidConfig("simulate.n and repeats must be >= 1")
        if cfg.tag not in TAGS:
            raise InvalidConfig(f"dataset.tag must be one of {TAGS}")
        if cfg.gaze_dir is None:
            for p in cfg.profiles:
                load_profile(p)
        elif not sorted(Path(cfg.gaze_dir).glob("*.csv")):
            raise InvalidConfig(f"paths.in: no gaze CSV files in {cfg.gaze_dir}")
        return cfg


def demo_config() -> dict:
    """The shipped desk-scale demo: 40 per profile, 64 px overlays, depth-8 quarter-width model."""
    return json.loads(resources.files("gazescreen").joinpath("configs/demo.json").read_text())


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class RunLog:
    """JSON-lines stage log: stage name, wall time, output hashes."""

    def __init__(self, path: Path):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("")

    def stage(self, name: str, started: float, outputs: list[Path] = ()):
        rec = {
            "stage": name,
            "seconds": round(time.perf_counter() - started, 3),
            "outputs": {str(p.name): sha256(p) for p in outputs},
        }
        with open(self.path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        log.info("%s done in %.1fs (%d outputs)", name, rec["seconds"], len(rec["outputs"]))


def _slug(classes) -> str:
    return "".join(GroupLabel.parse(c).letter for c in classes)


def run_pipeline(raw_config: dict, seed: int, out: str | Path) -> dict:
    """Run every stage under ``out`` and return ``{slug: [ConfusionMatrix, ...]}`` plus the report text."""
    cfg = PipelineConfig.from_json(raw_config)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    runlog = RunLog(out / "run.jsonl")

    t = time.perf_counter()
    gaze_dir = out / "gaze"
    if cfg.gaze_dir is None:
        paths = []
        for name in cfg.profiles:
            prof = load_profile(name)
            for rec in simulate_cohort(prof, cfg.n_per_profile, seed, duration_ms=cfg.duration_ms, rate_hz=cfg.rate_hz):
                paths.append(save_recording(rec, gaze_dir))
        runlog.stage("simulate", t, paths)
    else:
        paths = []
        for src in sorted(Path(cfg.gaze_dir).glob("*.csv")):
            paths.append(save_recording(read_recording(src), gaze_dir, src.stem))
        runlog.stage("ingest", t, paths)

    t = time.perf_counter()
    img_dir = out / "images"
    ev_dir = out / "events"
    ev_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for p in sorted(gaze_dir.glob("*.csv")):
        rec = read_recording(p)
        rec.validate(cfg.render.source_canvas)
        sp = build_scanpath(rec, cfg.detection, cfg.geometry)
        (ev_dir / f"{p.stem}.fixations.csv").write_text(fixations_csv(sp.fixations))
        (ev_dir / f"{p.stem}.saccades.csv").write_text(saccades_csv(sp.saccades))
        written.append(save_png(render_scanpath(sp, cfg.render), img_dir / image_filename(rec.participant_id, cfg.render.style)))
    runlog.stage("events+render", t, written)

    if cfg.augment:
        t = time.perf_counter()
        extra = []
        for p in written:
            img = load_png(p)
            for op, variant in zip(aug.BANK, aug.augment_all(img)):
                extra.append(save_png(variant, img_dir / f"{p.stem}__{op.name}.png"))
        runlog.stage("augment", t, extra)

    t = time.perf_counter()
    manifest = build_manifest(img_dir, cfg.tag)
    manifest = DatasetManifest(manifest.entries, {"tag": cfg.tag, "root": "images"})
    mpath = manifest.save(out / "manifests" / "all.json")
    runlog.stage("dataset", t, [mpath])

    results: dict[str, list[ConfusionMatrix]] = {}
    lines = ["Architecture,Classes,Accuracy"]
    matrices = []
    for classes in cfg.class_sets:
        slug = _slug(classes)
        results[slug] = []
        for rep in range(cfg.repeats):
            t = time.perf_counter()
            run_seed = seed + rep
            sub = subset(manifest, classes)
            split_seed = run_seed if cfg.split_seed is None else cfg.split_seed + rep
            tr, te = split(sub, cfg.fraction, split_seed, cfg.unit)
            tag = f"{slug}" if cfg.repeats == 1 else f"{slug}-r{rep}"
            mdir = out / "manifests" / tag
            saved = [tr.save(mdir / "train.json"), te.save(mdir / "test.json")]
            mcfg = ModelConfig.from_json(dict(cfg.model_base, classes=list(classes)))
            model = build_model(mcfg, run_seed)
            if cfg.backbone:
                load_backbone(model, cfg.backbone)
            tcfg = replace(cfg.train, seed=run_seed)
            train(model, tr, tcfg, root=img_dir)
            saved.append(save_model(model, out / "models" / f"{tag}.rcm"))
            cm = evaluate(model, te, root=img_dir)
            results[slug].append(cm)
            lines.append(table_row(mcfg.depth, cfg.tag, classes, accuracy(cm)))
            matrices.append((tag, cm))
            runlog.stage(f"train+eval {tag}", t, saved)
        if cfg.repeats > 1:
            mean = float(np.mean([accuracy(c) for c in results[slug]]))
            lines.append(f"# mean over {cfg.repeats} splits,{slug},{format_accuracy(mean)}")

    text = "\n".join(lines) + "\n\n"
    for tag, cm in matrices:
        text += f"[{tag}]\n" + matrix_csv(cm) + "\n"
    (out / "report.txt").write_text(text)
    for tag, cm in matrices:
        (out / f"confusion_{tag}.csv").write_text(matrix_csv(cm))
    return {"matrices": results, "report": text}
