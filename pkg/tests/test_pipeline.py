"""Staged pipeline: caching, idempotence, digest sensitivity, determinism."""

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from convagg.cli import build_config, main
from convagg.errors import MissingArtifactError, StaleCacheError
from convagg.pipeline import (
    PipelineConfig,
    agg_key,
    encode_key,
    evaluate_key,
    extract_key,
    run_pipeline,
    run_stage,
    svm_key,
    sweep,
    _stage_dir,
)
from convagg.toydata import generate_toy_dataset


@pytest.fixture(scope="session")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy-data")
    paths = generate_toy_dataset(root, n_images=18, seed=3)
    return paths


def make_config(toy, cache_dir, **overrides) -> PipelineConfig:
    base = dict(
        manifest=str(toy["manifest"]),
        arch=str(toy["arch"]),
        weights=str(toy["weights"]),
        mean_file=str(toy["mean"]),
        cache_dir=str(cache_dir),
        layers="last:2",
        encoder="bow",
        codebook_size=4,
        svm_c="1.0",
        seed=11,
    )
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture(scope="session")
def toy_run(toy, tmp_path_factory):
    cache = tmp_path_factory.mktemp("toy-cache")
    config = make_config(toy, cache)
    results = run_pipeline(config)
    return config, results


class TestPipeline:
    def test_end_to_end_completes(self, toy_run):
        config, results = toy_run
        assert set(results) == {"extract", "train-agg", "encode", "train-svm",
                                "evaluate", "report"}
        assert results["evaluate"].info["map"] > 0.5
        assert (results["evaluate"].path / "ap_table.tsv").is_file()
        assert (results["report"].path / "ap_bars.png").is_file()

    def test_rerun_is_all_cache_hits(self, toy_run):
        config, _ = toy_run
        again = run_pipeline(config)
        assert all(r.hit for r in again.values())
        assert all(r.wall_s == 0.0 for name, r in again.items() if name != "train-agg")

    def test_stage_log_lines(self, toy_run):
        config, _ = toy_run
        log = Path(config.cache_dir, "stage_log.txt").read_text().splitlines()
        assert any("stage=extract status=computed" in line for line in log)
        assert any("stage=evaluate status=hit" in line for line in log)
        for line in log:
            assert "wall_s=" in line and "key=" in line

    def test_missing_artifact_names_stage(self, toy, tmp_path):
        config = make_config(toy, tmp_path / "cold-cache")
        with pytest.raises(MissingArtifactError, match="encode"):
            run_stage("evaluate", config)

    def test_stale_cache_detected(self, toy, toy_run, tmp_path):
        config, _ = toy_run
        key = extract_key(config)
        stage_dir = _stage_dir(config, "extract", key)
        meta = json.loads((stage_dir / "meta.json").read_text())
        meta["key"] = "tampered"
        (stage_dir / "meta.json").write_text(json.dumps(meta))
        try:
            with pytest.raises(StaleCacheError):
                run_stage("extract", config)
        finally:
            meta["key"] = key
            (stage_dir / "meta.json").write_text(json.dumps(meta))

    def test_empty_split_rejected(self, toy, tmp_path):
        manifest = Path(toy["manifest"]).read_text()
        trimmed = "\n".join(l for l in manifest.splitlines() if "\tval\t" not in l)
        alt = tmp_path / "no_val.tsv"
        alt.write_text(trimmed)
        config = dataclasses.replace(
            make_config(toy, tmp_path / "cache"), manifest=str(alt))
        with pytest.raises(ValueError, match="val"):
            run_pipeline(config)


class TestDigests:
    def test_sensitivity_field_by_field(self, toy, tmp_path):
        base = make_config(toy, tmp_path / "cache")
        cases = {
            "resize_mode": ("center_crop", extract_key),
            "channel_order": ("bgr", extract_key),
            "reservoir_capacity": (999, extract_key),
            "seed": (99, extract_key),
            "codebook_size": (6, lambda c: agg_key(c, 4)),
            "kmeans_iters": (7, lambda c: agg_key(c, 4)),
            "encoder": ("fv", lambda c: agg_key(c, 4)),
            "layers": ("last:1", encode_key),
            "append_fc": ((), encode_key),  # placeholder, changed below
            "svm_c": ("2.0", svm_key),
            "feature_normalize": (False, svm_key),
            "svm_epochs": (77, svm_key),
            "ap_interpolation": ("all_points", evaluate_key),
        }
        for field, (value, key_fn) in cases.items():
            if field == "append_fc":
                continue  # toy arch has no dense layers to append
            changed = dataclasses.replace(base, **{field: value})
            assert key_fn(changed) != key_fn(base), field

    def test_downstream_keys_inherit_upstream_changes(self, toy, tmp_path):
        base = make_config(toy, tmp_path / "cache")
        changed = dataclasses.replace(base, seed=123)
        assert extract_key(changed) != extract_key(base)
        assert encode_key(changed) != encode_key(base)
        assert svm_key(changed) != svm_key(base)
        assert evaluate_key(changed) != evaluate_key(base)

    def test_input_file_content_changes_key(self, toy, tmp_path):
        base = make_config(toy, tmp_path / "cache")
        alt_manifest = tmp_path / "alt.tsv"
        alt_manifest.write_text(Path(toy["manifest"]).read_text() + "# tail comment\n")
        changed = dataclasses.replace(base, manifest=str(alt_manifest))
        assert extract_key(changed) != extract_key(base)

    def test_irrelevant_fields_do_not_change_keys(self, toy, tmp_path):
        base = make_config(toy, tmp_path / "cache")
        changed = dataclasses.replace(base, workers=2, deterministic=True)
        assert extract_key(changed) == extract_key(base)
        assert evaluate_key(changed) == evaluate_key(base)


class TestDeterminism:
    def test_feature_files_bitwise_identical(self, toy, toy_run, tmp_path):
        config1, _ = toy_run
        config2 = make_config(toy, tmp_path / "cache2")
        run_pipeline(config2)

        def digest(cfg, split):
            p = _stage_dir(cfg, "encode", encode_key(cfg)) / f"features_{split}.hfw"
            return hashlib.sha256(p.read_bytes()).hexdigest()

        for split in ("train", "val", "test"):
            assert digest(config1, split) == digest(config2, split)

    def test_worker_pool_matches_serial(self, toy, toy_run, tmp_path):
        config1, _ = toy_run
        config2 = make_config(toy, tmp_path / "cache-workers", workers=2)
        run_stage("extract", config2)
        d1 = _stage_dir(config1, "extract", extract_key(config1))
        d2 = _stage_dir(config2, "extract", extract_key(config2))
        assert (d1 / "samples.hfw").read_bytes() == (d2 / "samples.hfw").read_bytes()
        assert (d1 / "images" / "00000.hfw").read_bytes() == \
               (d2 / "images" / "00000.hfw").read_bytes()


class TestSweep:
    def test_codebook_size_rows(self, toy, toy_run):
        config, _ = toy_run
        rows, results = sweep("codebook_size", [8, 4], config)
        assert [v for v, _ in rows] == [4, 8]  # ascending
        assert all(0.0 <= m <= 1.0 for _, m in rows)
        tsvs = list((Path(config.cache_dir) / "sweeps").glob("sweep_codebook_size_*.tsv"))
        assert tsvs, "sweep table written"

    def test_layer_subset_shares_extract(self, toy, toy_run):
        config, _ = toy_run
        rows, results = sweep("layer_subset", ["single:4", "last:2"], config)
        assert len(rows) == 2
        # the shared upstream stays cached: extract dir count must be 1
        assert len(list((Path(config.cache_dir) / "extract").iterdir())) == 1

    def test_empty_values_rejected(self, toy_run):
        config, _ = toy_run
        with pytest.raises(ValueError):
            sweep("codebook_size", [], config)

    def test_unknown_axis(self, toy_run):
        config, _ = toy_run
        with pytest.raises(ValueError):
            sweep("bogus", [1], config)


class TestCli:
    def test_config_file_and_flag_override(self, toy, tmp_path):
        ini = tmp_path / "p.ini"
        ini.write_text(
            "[pipeline]\n"
            f"manifest = {toy['manifest']}\n"
            f"arch = {toy['arch']}\n"
            f"weights = {toy['weights']}\n"
            f"cache_dir = {tmp_path / 'cache'}\n"
            "codebook_size = 4\n"
            "layers = last:2\n"
        )
        import argparse

        ns = argparse.Namespace(config=str(ini), codebook_size=16)
        cfg = build_config(ns)
        assert cfg.codebook_size == 16  # flag wins
        assert cfg.layers == "last:2"  # file value survives

    def test_missing_required_option(self):
        import argparse

        with pytest.raises(ValueError, match="manifest"):
            build_config(argparse.Namespace(config=None))

    def test_main_stage_and_error_paths(self, toy, tmp_path, capsys):
        args = [
            "--manifest", str(toy["manifest"]), "--arch", str(toy["arch"]),
            "--weights", str(toy["weights"]), "--cache-dir", str(tmp_path / "c"),
            "--layers", "last:1", "--codebook-size", "4",
        ]
        assert main(["evaluate"] + args) == 1  # cold cache -> missing artifact
        err = capsys.readouterr().err
        assert "error:" in err
        assert main(["extract"] + args) == 0
        out = capsys.readouterr().out
        assert "stage=extract" in out
