"""Staged pipeline with content-addressed caching.

Stages: extract -> train-agg -> encode -> train-svm -> evaluate -> report.
Every stage writes its artifacts under ``cache_dir/<stage>/<key>`` where
the key is a sha256 digest over the stage's own configuration plus the
keys of everything upstream (file inputs enter via their content digests).
Rerunning with identical configuration is therefore a no-op: the stage
logs a cache hit and recomputes nothing. A changed upstream field changes
the key, so stale artifacts are never silently reused; a cache directory
whose recorded key disagrees with its location raises StaleCacheError.

Stages run sequentially; inside ``extract`` the per-image work fans out to
a worker pool (``workers``). Reductions (reservoir updates, file output)
always consume results in manifest order, so runs are deterministic for a
fixed seed regardless of worker count; ``deterministic`` documents that
guarantee and is accepted for CLI symmetry.
"""

from __future__ import annotations

import hashlib
import json
import logging
import multiprocessing
import os
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .codebook import Codebook, kmeans_train
from .container import (
    TensorRecord,
    read_container_file,
    write_container_file,
)
from .dataset import (
    Manifest,
    PreprocessSpec,
    load_and_preprocess,
    load_manifest,
    read_mean_file,
)
from .descriptors import DescriptorSample, DescriptorSet, harvest
from .errors import MissingArtifactError, StaleCacheError
from .evaluation import average_precision, format_ap_table, mean_ap
from .features import LayerSubset, append_fc, concat_layers, encode_layer
from .gmm import GmmModel, gmm_train
from .network import forward, load_arch, validate_and_bind
from .svm import C_GRID, LinearModel, TrainConfig, decision_scores, l2_normalize_rows, train_ova
from .tensor import Tensor3

__all__ = [
    "PipelineConfig",
    "StageResult",
    "STAGES",
    "run_stage",
    "run_pipeline",
    "sweep",
    "extract_key",
    "agg_key",
    "encode_key",
    "svm_key",
    "evaluate_key",
]

log = logging.getLogger("convagg.pipeline")

STAGES = ("extract", "train-agg", "encode", "train-svm", "evaluate", "report")


@dataclass(frozen=True)
class PipelineConfig:
    manifest: str
    arch: str
    weights: str
    cache_dir: str
    mean_file: str | None = None
    layers: str = "last:5"
    encoder: str = "bow"  # bow | fv
    codebook_size: int = 500
    gmm_components: int = 64
    append_fc: tuple[int, ...] = ()
    fv_normalize: bool = False
    fv_scaling: str = "inverse"
    svm_c: str = "1.0"  # positive float, or "grid" for validation-mAP search
    feature_normalize: bool = True
    resize_mode: str = "warp"
    channel_order: str = "rgb"
    reservoir_capacity: int = 200_000
    kmeans_iters: int = 100
    gmm_iters: int = 100
    svm_epochs: int = 1000
    extract_layers: str = "all"
    ap_interpolation: str = "11point"
    workers: int = 1
    seed: int = 0
    deterministic: bool = False

    def __post_init__(self):
        if self.encoder not in ("bow", "fv"):
            raise ValueError(f"encoder must be bow or fv, got {self.encoder!r}")
        if self.svm_c != "grid":
            if float(self.svm_c) <= 0:
                raise ValueError("svm_c must be positive or 'grid'")
        object.__setattr__(self, "append_fc", tuple(int(v) for v in self.append_fc))

    def validate_paths(self):
        for name in ("manifest", "arch", "weights"):
            p = getattr(self, name)
            if not Path(p).is_file():
                raise FileNotFoundError(f"{name} file does not exist: {p}")
        if self.mean_file and not Path(self.mean_file).is_file():
            raise FileNotFoundError(f"mean file does not exist: {self.mean_file}")

    def mean(self) -> tuple[float, float, float]:
        return read_mean_file(self.mean_file) if self.mean_file else (0.0, 0.0, 0.0)

    def subset(self) -> LayerSubset:
        return LayerSubset.parse(self.layers)


@dataclass(frozen=True)
class StageResult:
    stage: str
    key: str
    path: Path
    hit: bool
    wall_s: float
    info: dict = field(default_factory=dict)

    def log_line(self) -> str:
        return (
            f"stage={self.stage} status={'hit' if self.hit else 'computed'} "
            f"wall_s={self.wall_s:.3f} key={self.key[:16]}"
        )


# ---------------------------------------------------------------------------
# digests and cache plumbing


def _digest(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _mean_payload(config: PipelineConfig):
    return list(config.mean())


def extract_key(config: PipelineConfig) -> str:
    return _digest({
        "stage": "extract",
        "manifest": _file_digest(config.manifest),
        "arch": _file_digest(config.arch),
        "weights": _file_digest(config.weights),
        "mean": _mean_payload(config),
        "resize_mode": config.resize_mode,
        "channel_order": config.channel_order,
        "reservoir_capacity": config.reservoir_capacity,
        "extract_layers": config.extract_layers,
        "seed": config.seed,
    })


def agg_key(config: PipelineConfig, layer: int) -> str:
    base = {
        "stage": "train-agg",
        "extract": extract_key(config),
        "layer": layer,
        "encoder": config.encoder,
        "seed": config.seed,
    }
    if config.encoder == "bow":
        base.update(size=config.codebook_size, iters=config.kmeans_iters)
    else:
        base.update(size=config.gmm_components, iters=config.gmm_iters)
    return _digest(base)


def encode_key(config: PipelineConfig) -> str:
    subset = _resolved_subset(config)
    payload = {
        "stage": "encode",
        "extract": extract_key(config),
        "aggs": [agg_key(config, l) for l in subset],
        "subset": list(subset),
        "append_fc": list(config.append_fc),
    }
    if config.encoder == "fv":
        payload.update(fv_normalize=config.fv_normalize, fv_scaling=config.fv_scaling)
    return _digest(payload)


def svm_key(config: PipelineConfig) -> str:
    return _digest({
        "stage": "train-svm",
        "encode": encode_key(config),
        "svm_c": config.svm_c,
        "svm_epochs": config.svm_epochs,
        "feature_normalize": config.feature_normalize,
        "seed": config.seed,
    })


def evaluate_key(config: PipelineConfig) -> str:
    return _digest({
        "stage": "evaluate",
        "svm": svm_key(config),
        "ap_interpolation": config.ap_interpolation,
    })


def _stage_dir(config: PipelineConfig, stage: str, key: str) -> Path:
    return Path(config.cache_dir) / stage / key[:16]


def _emit(result: StageResult, config: PipelineConfig) -> StageResult:
    line = result.log_line()
    log.info(line)
    log_path = Path(config.cache_dir) / "stage_log.txt"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
    return result


def _run_cached(config: PipelineConfig, stage: str, key: str, build) -> StageResult:
    """Run ``build(dir)`` unless a completed artifact for ``key`` exists."""
    final = _stage_dir(config, stage, key)
    meta_path = final / "meta.json"
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("key") != key:
            raise StaleCacheError(
                f"cache entry {final} records key {meta.get('key')!r}, expected {key!r}; "
                "remove the directory or change cache_dir"
            )
        return _emit(StageResult(stage, key, final, hit=True, wall_s=0.0,
                                 info=meta.get("info", {})), config)
    if final.exists():
        shutil.rmtree(final)  # partial artifact from an interrupted run

    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{stage}-", dir=final.parent))
    start = time.perf_counter()
    try:
        info = build(tmp) or {}
        wall = time.perf_counter() - start
        meta = {"stage": stage, "key": key, "wall_s": wall, "info": info}
        (tmp / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return _emit(StageResult(stage, key, final, hit=False, wall_s=wall, info=info), config)


def _require(config: PipelineConfig, stage: str, upstream: list[tuple[str, str]]):
    missing = [
        name for name, key in upstream
        if not (_stage_dir(config, name, key) / "meta.json").is_file()
    ]
    if missing:
        raise MissingArtifactError(
            f"stage {stage!r} is missing upstream artifacts from: {', '.join(missing)}; "
            f"run those stages first or use 'pipeline'"
        )


# ---------------------------------------------------------------------------
# extract


def _resolved_subset(config: PipelineConfig) -> tuple[int, ...]:
    desc = load_arch(config.arch)
    return config.subset().resolve(desc)


def _extract_taps(config: PipelineConfig, desc) -> tuple[int, ...]:
    all_layers = tuple(range(1, desc.num_layers() + 1))
    if config.extract_layers == "all":
        return all_layers
    chosen = LayerSubset.parse(config.extract_layers)
    if chosen.strategy != "list":
        raise ValueError("extract_layers must be 'all' or 'list:...'")
    for l in chosen.arg:
        if l not in all_layers:
            raise ValueError(f"extract layer {l} outside 1..{desc.num_layers()}")
    return tuple(sorted(set(chosen.arg)))


_POOL_STATE: dict = {}


def _pool_init(arch_path, weights_path, spec_kwargs, taps, root):
    from .container import read_container_file as _read

    desc = load_arch(arch_path)
    _POOL_STATE["model"] = validate_and_bind(desc, _read(weights_path))
    _POOL_STATE["spec"] = PreprocessSpec(**spec_kwargs)
    _POOL_STATE["taps"] = taps
    _POOL_STATE["root"] = root
    _POOL_STATE["spatial"] = set(desc.non_dense_indices())


def _pool_extract_one(rel_path: str):
    model = _POOL_STATE["model"]
    image = load_and_preprocess(Path(_POOL_STATE["root"]) / rel_path, _POOL_STATE["spec"])
    tapped = forward(model, image, _POOL_STATE["taps"])
    out = {}
    for l, tensor in tapped.items():
        if l in _POOL_STATE["spatial"]:
            out[l] = ("descriptors", harvest(tensor, l).vectors)
        else:
            out[l] = ("output", tensor.data.copy())
    return out


def run_extract(config: PipelineConfig) -> StageResult:
    config.validate_paths()
    key = extract_key(config)

    def build(outdir: Path):
        manifest = load_manifest(config.manifest)
        desc = load_arch(config.arch)
        spec = PreprocessSpec(
            target_rows=desc.input_rows, target_cols=desc.input_cols,
            channel_order=config.channel_order, mean=config.mean(),
            resize_mode=config.resize_mode,
        )
        taps = _extract_taps(config, desc)
        spatial = [l for l in taps if not desc.is_dense_layer(l)]
        dense = [l for l in taps if desc.is_dense_layer(l)]
        chain = desc.shape_chain()
        log.info("extract: %d images, taps %s", len(manifest.records), list(taps))
        for line in manifest.summary().splitlines():
            log.info("extract: %s", line)

        root = str(Path(config.manifest).parent)
        img_dir = outdir / "images"
        img_dir.mkdir(parents=True)
        reservoirs = {
            l: DescriptorSample(
                layer=l, dim=chain[l][2],
                capacity=config.reservoir_capacity, seed=[config.seed, l],
            )
            for l in spatial
        }

        spec_kwargs = dict(
            target_rows=spec.target_rows, target_cols=spec.target_cols,
            channel_order=spec.channel_order, mean=spec.mean,
            resize_mode=spec.resize_mode,
        )
        rel_paths = [rec.path for rec in manifest.records]
        if config.workers > 1:
            with multiprocessing.Pool(
                config.workers, initializer=_pool_init,
                initargs=(config.arch, config.weights, spec_kwargs, taps, root),
            ) as pool:
                results = pool.imap(_pool_extract_one, rel_paths, chunksize=1)
                _write_extract_results(manifest, results, img_dir, reservoirs, config)
        else:
            _pool_init(config.arch, config.weights, spec_kwargs, taps, root)
            results = (_pool_extract_one(p) for p in rel_paths)
            _write_extract_results(manifest, results, img_dir, reservoirs, config)

        sample_records = []
        for l in spatial:
            sample_records.append(TensorRecord(f"layer{l}.sample", reservoirs[l].descriptors))
        write_container_file(outdir / "samples.hfw", sample_records)

        return {
            "classes": list(manifest.classes),
            "spatial_layers": spatial,
            "dense_layers": dense,
            "images": [f"{i:05d}.hfw" for i in range(len(manifest.records))],
            "channels": {str(l): chain[l][2] for l in taps},
            "n_images": len(manifest.records),
        }

    return _run_cached(config, "extract", key, build)


def _write_extract_results(manifest, results, img_dir: Path, reservoirs, config):
    for idx, (rec, tensors) in enumerate(zip(manifest.records, results)):
        records = []
        for l, (kind, arr) in sorted(tensors.items()):
            records.append(TensorRecord(f"layer{l}.{kind}", arr))
            if kind == "descriptors" and rec.split == "train" and l in reservoirs:
                reservoirs[l].extend(DescriptorSet(layer=l, vectors=arr))
        write_container_file(img_dir / f"{idx:05d}.hfw", records)


# ---------------------------------------------------------------------------
# train-agg


def run_train_agg(config: PipelineConfig) -> StageResult:
    config.validate_paths()
    ex_key = extract_key(config)
    _require(config, "train-agg", [("extract", ex_key)])
    subset = _resolved_subset(config)
    samples_path = _stage_dir(config, "extract", ex_key) / "samples.hfw"
    samples = None  # loaded lazily, only on a cache miss

    results = []
    for layer in subset:
        key = agg_key(config, layer)

        def build(outdir: Path, layer=layer):
            nonlocal samples
            if samples is None:
                samples = read_container_file(samples_path)
            name = f"layer{layer}.sample"
            if name not in samples:
                raise MissingArtifactError(
                    f"extract artifact has no reservoir for layer {layer}; "
                    "was extract_layers restricted?"
                )
            pts = samples.get(name)
            if config.encoder == "bow":
                model = kmeans_train(
                    pts, config.codebook_size, max_iters=config.kmeans_iters,
                    seed=[config.seed, layer], layer=layer,
                )
                recs = [TensorRecord(f"layer{layer}.centroids", model.centroids)]
                info = {"layer": layer, "objective": model.objective_trace[-1],
                        "iters": len(model.objective_trace)}
            else:
                model = gmm_train(
                    pts, config.gmm_components, max_iters=config.gmm_iters,
                    seed=[config.seed, layer], layer=layer,
                )
                recs = [
                    TensorRecord(f"gmm{layer}.priors", model.priors),
                    TensorRecord(f"gmm{layer}.means", model.means),
                    TensorRecord(f"gmm{layer}.variances", model.variances),
                ]
                info = {"layer": layer, "log_likelihood": model.log_likelihood_trace[-1],
                        "iters": len(model.log_likelihood_trace)}
            write_container_file(outdir / "model.hfw", recs)
            return info

        results.append(_run_cached(config, "train-agg", key, build))

    combined_key = _digest({"stage": "train-agg", "layers": [r.key for r in results]})
    return StageResult(
        "train-agg", combined_key, Path(config.cache_dir) / "train-agg",
        hit=all(r.hit for r in results),
        wall_s=sum(r.wall_s for r in results),
        info={"layers": {str(l): r.key for l, r in zip(subset, results)}},
    )


def _load_agg_model(config: PipelineConfig, layer: int):
    cont = read_container_file(
        _stage_dir(config, "train-agg", agg_key(config, layer)) / "model.hfw"
    )
    if config.encoder == "bow":
        return Codebook(layer=layer, centroids=cont.get(f"layer{layer}.centroids"))
    return GmmModel(
        layer=layer,
        priors=cont.get(f"gmm{layer}.priors").astype(np.float64),
        means=cont.get(f"gmm{layer}.means").astype(np.float64),
        variances=cont.get(f"gmm{layer}.variances").astype(np.float64),
    )


# ---------------------------------------------------------------------------
# encode


def run_encode(config: PipelineConfig) -> StageResult:
    config.validate_paths()
    ex_key = extract_key(config)
    subset = _resolved_subset(config)
    upstream = [("extract", ex_key)] + [("train-agg", agg_key(config, l)) for l in subset]
    _require(config, "encode", upstream)
    key = encode_key(config)

    def build(outdir: Path):
        manifest = load_manifest(config.manifest)
        desc = load_arch(config.arch)
        dense_set = set(desc.dense_indices())
        for l in config.append_fc:
            if l not in dense_set:
                raise ValueError(f"append_fc layer {l} is not a dense layer of the descriptor")
        models = {l: _load_agg_model(config, l) for l in subset}
        img_dir = _stage_dir(config, "extract", ex_key) / "images"

        fv_kwargs = {}
        if config.encoder == "fv":
            fv_kwargs = dict(normalize=config.fv_normalize, scaling=config.fv_scaling)

        record_index = {rec.path: i for i, rec in enumerate(manifest.records)}
        layout = None
        n_rows = {}
        for split in ("train", "val", "test"):
            recs = manifest.split_records(split)
            n_rows[split] = len(recs)
            if not recs:
                continue  # container format has no empty tensors; loader fills in
            rows = []
            for rec in recs:
                cont = read_container_file(img_dir / f"{record_index[rec.path]:05d}.hfw")
                segments = {}
                for l in subset:
                    dset = DescriptorSet(layer=l, vectors=cont.get(f"layer{l}.descriptors"))
                    segments[l] = encode_layer(dset, models[l], **fv_kwargs)
                feat = concat_layers(segments, subset)
                if config.append_fc:
                    fc = [
                        (l, Tensor3(cont.get(f"layer{l}.output").reshape(1, 1, -1)))
                        for l in config.append_fc
                    ]
                    feat = append_fc(feat, fc)
                if layout is None:
                    layout = [(s.layer, s.encoder, s.dim) for s in feat.segments]
                rows.append(feat.concat())
            write_container_file(outdir / f"features_{split}.hfw", [
                TensorRecord("features", np.vstack(rows).astype(np.float32)),
                TensorRecord("labels", manifest.label_matrix(split)),
            ])
        return {
            "classes": list(manifest.classes),
            "segments": layout,
            "dim": int(sum(d for _, _, d in layout)) if layout else 0,
            "rows": n_rows,
        }

    return _run_cached(config, "encode", key, build)


# ---------------------------------------------------------------------------
# train-svm / evaluate / report


def _load_features(config: PipelineConfig, split: str):
    enc_dir = _stage_dir(config, "encode", encode_key(config))
    info = json.loads((enc_dir / "meta.json").read_text(encoding="utf-8"))["info"]
    classes = info["classes"]
    path = enc_dir / f"features_{split}.hfw"
    if not path.is_file():  # empty split was skipped at encode time
        return (np.zeros((0, info["dim"]), np.float32),
                np.zeros((0, len(classes)), np.float32), classes)
    cont = read_container_file(path)
    return cont.get("features"), cont.get("labels"), classes


def _scores_for(config, model: LinearModel, feats: np.ndarray) -> np.ndarray:
    f = feats.astype(np.float64)
    if config.feature_normalize:
        f = l2_normalize_rows(f)
    return decision_scores(model, f)


def _map_for(config, model, feats, labels) -> float:
    scores = _scores_for(config, model, feats)
    aps = []
    for ci in range(labels.shape[1]):
        if labels[:, ci].sum() > 0:
            aps.append(average_precision(scores[:, ci], labels[:, ci],
                                         interpolation=config.ap_interpolation))
    return mean_ap(aps)


def run_train_svm(config: PipelineConfig) -> StageResult:
    config.validate_paths()
    _require(config, "train-svm", [("encode", encode_key(config))])
    key = svm_key(config)

    def build(outdir: Path):
        feats, labels, classes = _load_features(config, "train")
        if feats.shape[0] < 2:
            raise ValueError("training split has fewer than 2 images")
        x = feats.astype(np.float64)
        if config.feature_normalize:
            x = l2_normalize_rows(x)

        if config.svm_c == "grid":
            vfeats, vlabels, _ = _load_features(config, "val")
            if vfeats.shape[0] == 0:
                raise ValueError("svm_c='grid' needs a non-empty validation split")
            best = None
            for c in C_GRID:
                cand = train_ova(x, labels, classes,
                                 TrainConfig(c=c, max_epochs=config.svm_epochs,
                                             seed=config.seed))
                val_map = _map_for(config, cand, vfeats, vlabels)
                if best is None or val_map > best[0] + 1e-12:
                    best = (val_map, c, cand)
            chosen_c, model = best[1], best[2]
            info_extra = {"val_map": best[0]}
        else:
            chosen_c = float(config.svm_c)
            model = train_ova(x, labels, classes,
                              TrainConfig(c=chosen_c, max_epochs=config.svm_epochs,
                                          seed=config.seed))
            info_extra = {}

        recs = []
        for ci, cname in enumerate(model.class_names):
            recs.append(TensorRecord(f"svm.{cname}.weights", model.weights[ci]))
            recs.append(TensorRecord(f"svm.{cname}.bias", np.array([model.biases[ci]])))
        write_container_file(outdir / "svm.hfw", recs)
        return {
            "classes": list(model.class_names),
            "c": chosen_c,
            "skipped": list(model.skipped),
            "feature_normalize": config.feature_normalize,
            **info_extra,
        }

    return _run_cached(config, "train-svm", key, build)


def _load_svm(config: PipelineConfig) -> tuple[LinearModel, dict]:
    sdir = _stage_dir(config, "train-svm", svm_key(config))
    meta = json.loads((sdir / "meta.json").read_text())["info"]
    cont = read_container_file(sdir / "svm.hfw")
    classes = meta["classes"]
    w = np.stack([cont.get(f"svm.{c}.weights").astype(np.float64) for c in classes])
    b = np.array([float(cont.get(f"svm.{c}.bias")[0]) for c in classes])
    model = LinearModel(tuple(classes), w, b,
                        TrainConfig(c=float(meta["c"]), seed=config.seed),
                        skipped=tuple(meta.get("skipped", ())))
    return model, meta


def run_evaluate(config: PipelineConfig) -> StageResult:
    config.validate_paths()
    _require(config, "evaluate",
             [("encode", encode_key(config)), ("train-svm", svm_key(config))])
    key = evaluate_key(config)

    def build(outdir: Path):
        model, _ = _load_svm(config)
        feats, labels, classes = _load_features(config, "test")
        if feats.shape[0] == 0:
            raise ValueError("test split is empty")
        scores = _scores_for(config, model, feats)
        aps, names = [], []
        for ci, cname in enumerate(classes):
            if labels[:, ci].sum() == 0:
                log.warning("evaluate: class %r has no positive test items, skipped", cname)
                continue
            names.append(cname)
            aps.append(average_precision(scores[:, ci], labels[:, ci],
                                         interpolation=config.ap_interpolation))
        table = format_ap_table(names, aps)
        (outdir / "ap_table.tsv").write_text(table, encoding="utf-8")
        report = {
            "classes": [{"name": n, "ap": a} for n, a in zip(names, aps)],
            "map": mean_ap(aps),
            "n_test": int(feats.shape[0]),
            "ap_interpolation": config.ap_interpolation,
        }
        (outdir / "report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
        log.info("evaluate: mAP=%.4f over %d classes", report["map"], len(aps))
        return {"map": report["map"], "n_classes": len(aps)}

    return _run_cached(config, "evaluate", key, build)


def run_report(config: PipelineConfig) -> StageResult:
    config.validate_paths()
    ev_key = evaluate_key(config)
    _require(config, "report", [("evaluate", ev_key)])
    key = _digest({"stage": "report", "evaluate": ev_key})

    def build(outdir: Path):
        ev_dir = _stage_dir(config, "evaluate", ev_key)
        report = json.loads((ev_dir / "report.json").read_text(encoding="utf-8"))
        shutil.copy(ev_dir / "ap_table.tsv", outdir / "ap_table.tsv")
        names = [c["name"] for c in report["classes"]]
        aps = [c["ap"] for c in report["classes"]]
        _plot_bars(names, aps, report["map"], outdir / "ap_bars.png")
        plots = 1
        sweep_dir = Path(config.cache_dir) / "sweeps"
        if sweep_dir.is_dir():
            for tsv in sorted(sweep_dir.glob("*.tsv")):
                rows = [
                    line.split("\t")
                    for line in tsv.read_text(encoding="utf-8").splitlines()[1:]
                    if line.strip()
                ]
                if rows:
                    _plot_sweep([r[0] for r in rows], [float(r[1]) for r in rows],
                                tsv.stem, outdir / f"{tsv.stem}.png")
                    shutil.copy(tsv, outdir / tsv.name)
                    plots += 1
        return {"map": report["map"], "plots": plots}

    return _run_cached(config, "report", key, build)


def _plot_bars(names, aps, map_value, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(names) + 2), 3.2))
    ax.bar(range(len(names)), aps, color="#4878d0")
    ax.axhline(map_value, color="#d65f5f", linestyle="--", label=f"mAP = {map_value:.3f}")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylabel("average precision")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_sweep(xs, ys, title, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    numeric = all(_is_number(x) for x in xs)
    if numeric:
        ax.plot([float(x) for x in xs], ys, marker="o")
    else:
        ax.plot(range(len(xs)), ys, marker="o")
        ax.set_xticks(range(len(xs)))
        ax.set_xticklabels(xs, rotation=45, ha="right")
    ax.set_ylabel("mAP")
    ax.set_title(title)
    ax.grid(True, linestyle=":")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _is_number(text) -> bool:
    try:
        float(text)
        return True
    except (TypeError, ValueError):
        return False


# ---------------------------------------------------------------------------
# drivers


_RUNNERS = {
    "extract": run_extract,
    "train-agg": run_train_agg,
    "encode": run_encode,
    "train-svm": run_train_svm,
    "evaluate": run_evaluate,
    "report": run_report,
}


def run_stage(stage: str, config: PipelineConfig) -> StageResult:
    if stage not in _RUNNERS:
        raise ValueError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
    return _RUNNERS[stage](config)


def run_pipeline(config: PipelineConfig) -> dict[str, StageResult]:
    """Run every stage in order; returns per-stage results."""
    config.validate_paths()
    manifest = load_manifest(config.manifest)
    for split in ("train", "val", "test"):
        if not manifest.split_records(split):
            raise ValueError(f"manifest split {split!r} is empty; end-to-end runs need all three")
    return {stage: run_stage(stage, config) for stage in STAGES}


def sweep(axis: str, values, config: PipelineConfig):
    """One pipeline run per value with shared cached upstream stages.

    axis is 'layer_subset' (values are subset strings) or 'codebook_size'
    (values are integers, rows emitted in ascending order). Returns
    (rows, results) where rows are (value, mAP) pairs; also writes a
    tab-separated table and a plot under <cache_dir>/sweeps/.
    """
    values = list(values)
    if not values:
        raise ValueError("sweep needs a non-empty value list")
    if axis == "codebook_size":
        values = sorted(int(v) for v in values)
        configs = [replace(config, codebook_size=v) for v in values]
    elif axis == "layer_subset":
        configs = [replace(config, layers=str(v)) for v in values]
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")

    run_extract(config)  # shared by every point
    rows, results = [], []
    for value, cfg in zip(values, configs):
        stage_results = {
            stage: run_stage(stage, cfg)
            for stage in ("train-agg", "encode", "train-svm", "evaluate")
        }
        map_value = stage_results["evaluate"].info["map"]
        rows.append((value, map_value))
        results.append(stage_results)
        log.info("sweep %s=%s -> mAP %.4f", axis, value, map_value)

    sweep_dir = Path(config.cache_dir) / "sweeps"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    tag = _digest({"axis": axis, "values": [str(v) for v in values],
                   "base": svm_key(config)})[:16]
    tsv = sweep_dir / f"sweep_{axis}_{tag}.tsv"
    lines = [f"{axis}\tmAP"] + [f"{v}\t{m:.6f}" for v, m in rows]
    tsv.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _plot_sweep([str(v) for v, _ in rows], [m for _, m in rows],
                f"mAP vs {axis}", sweep_dir / f"sweep_{axis}_{tag}.png")
    return rows, results
