"""Config parsing, precedence, and the command-line pipeline.

The pipeline test drives every subcommand in dependency order against
one tiny generated dataset; a ground-truth detections CSV (written from
the annotations) gives group/eval/render deterministic, non-trivial
inputs without needing a converged model.
"""

from __future__ import annotations

import contextlib
import io
from pathlib import Path

import pytest

from cadspot import cli
from cadspot.config import (
    ENV_OUT_DIR,
    ENV_THREADS,
    SCHEMA,
    ConfigError,
    apply_thread_limit,
    build_run_config,
    default_config_text,
    effective_values,
    load_run_config,
    parse_kv_text,
)
from cadspot.detect import read_detections_csv, write_detections_csv
from cadspot.primitives import Detection
from cadspot.synth import load_annotations

DEFAULTS = {key: default for key, (default, _) in SCHEMA.items()}


def run_cli(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main(list(argv))
    return code, out.getvalue(), err.getvalue()


# ------------------------------------------------------------ kv syntax


class TestParseKvText:
    def test_basic_lines(self):
        text = "a.b = 1\n\n# comment\nc=  two words \n"
        assert parse_kv_text(text) == {"a.b": "1", "c": "two words"}

    def test_value_may_contain_equals(self):
        # only the first '=' splits
        assert parse_kv_text("k = a=b") == {"k": "a=b"}

    def test_empty_value_allowed(self):
        assert parse_kv_text("checkpoint =") == {"checkpoint": ""}

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match=r"run\.cfg:2: expected 'key = value'"):
            parse_kv_text("a = 1\nbogus line\n", source="run.cfg")

    def test_empty_key(self):
        with pytest.raises(ConfigError, match=r"<config>:1: empty key"):
            parse_kv_text("= 1")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match=r":3: duplicate key 'a'"):
            parse_kv_text("a = 1\n# a = 2\na = 3\n")


# ----------------------------------------------------------- precedence


class TestEffectiveValues:
    def test_defaults_complete(self):
        assert effective_values(env={}) == DEFAULTS

    def test_precedence_chain(self):
        vals = effective_values(
            file_values={"out_dir": "from_file", "threshold": "0.7"},
            cli_overrides={"out_dir": "from_cli"},
            env={ENV_OUT_DIR: "from_env", ENV_THREADS: "3"},
        )
        assert vals["out_dir"] == "from_env"
        assert vals["threads"] == "3"
        assert vals["threshold"] == "0.7"  # file survives where nothing overrides
        assert vals["tau_p"] == DEFAULTS["tau_p"]

    def test_cli_beats_file(self):
        vals = effective_values(
            file_values={"rng_seed": "1"}, cli_overrides={"rng_seed": "2"}, env={}
        )
        assert vals["rng_seed"] == "2"

    def test_empty_env_value_ignored(self):
        vals = effective_values(
            cli_overrides={"out_dir": "from_cli"},
            env={ENV_OUT_DIR: "", ENV_THREADS: ""},
        )
        assert vals["out_dir"] == "from_cli"
        assert vals["threads"] == DEFAULTS["threads"]

    def test_env_touches_only_its_keys(self):
        vals = effective_values(env={ENV_OUT_DIR: "elsewhere"})
        changed = {k for k in vals if vals[k] != DEFAULTS[k]}
        assert changed == {"out_dir"}

    def test_unknown_file_key(self):
        with pytest.raises(ConfigError, match=r"config file: unknown config key 'typo'"):
            effective_values(file_values={"typo": "1"}, env={})

    def test_unknown_set_key(self):
        with pytest.raises(ConfigError, match=r"--set: unknown config key"):
            effective_values(cli_overrides={"predictor.depth": "3"}, env={})


# ---------------------------------------------------------- typed build


def build_with(**overrides: str):
    return build_run_config(effective_values(cli_overrides=overrides, env={}))


class TestBuildRunConfig:
    def test_default_snapshot(self):
        cfg = build_with()
        assert cfg.data_dir == Path("data")
        assert cfg.out_dir == Path("out")
        assert cfg.checkpoint == Path("out") / "predictor.ckpt"
        assert (cfg.rng_seed, cfg.threads) == (0, 0)
        assert (cfg.threshold, cfg.tau_p, cfg.tau_o, cfg.dedup_radius) == (
            0.6,
            2.0,
            0.5,
            2.0,
        )
        p = cfg.predictor
        assert (p.patch_size, p.down_sample, p.channels) == (256, 4, 15)
        assert p.hidden == ((16, 1), (32, 2), (64, 2), (64, 1))
        assert (p.learning_rate, p.lam) == (1e-4, 0.1)
        assert (p.epochs, p.batch_size, p.rng_seed) == (200, 8, 0)
        assert p.predict_offsets is True
        s = cfg.schedule
        assert (s.variant, s.sigma_max, s.sigma_min) == ("pgk", 3.0, 1.0)
        assert (s.total_epochs, s.alpha, s.switch_epoch) == (200, 0.3, None)
        assert (cfg.grid.patch_size, cfg.grid.stride) == (256, 256)
        sc = cfg.synth
        assert (sc.width, sc.height) == (256, 256)
        assert (sc.n_blocks, sc.n_walls, sc.n_scales) == (2, 1, 1)
        assert (sc.min_symbol_size, sc.max_symbol_size) == (12, 48)
        assert (sc.line_width, sc.noise_level, sc.rng_seed) == (1, 0.0, 0)

    def test_rng_seed_feeds_predictor_and_synth(self):
        cfg = build_with(rng_seed="5")
        assert cfg.predictor.rng_seed == 5
        assert cfg.synth.rng_seed == 5

    def test_epochs_is_also_the_schedule_length(self):
        cfg = build_with(**{"predictor.epochs": "60"})
        assert cfg.predictor.epochs == 60
        assert cfg.schedule.total_epochs == 60

    def test_explicit_checkpoint_kept(self):
        cfg = build_with(checkpoint="runs/a.ckpt")
        assert cfg.checkpoint == Path("runs/a.ckpt")

    def test_grid_stride_override(self):
        cfg = build_with(**{"grid.stride": "128"})
        assert cfg.grid.stride == 128

    def test_hidden_parses_width_by_stride(self):
        cfg = build_with(**{"predictor.hidden": "6x2, 8x2"})
        assert cfg.predictor.hidden == ((6, 2), (8, 2))

    def test_bool_spellings(self):
        for raw, want in (("yes", True), ("ON", True), ("0", False), ("off", False)):
            cfg = build_with(**{"predictor.predict_offsets": raw})
            assert cfg.predictor.predict_offsets is want

    @pytest.mark.parametrize(
        "key,raw,hint",
        [
            ("rng_seed", "two", "expected integer"),
            ("threshold", "high", "expected number"),
            ("predictor.predict_offsets", "maybe", "expected true/false"),
            ("predictor.hidden", "16", "expected e.g. 16x1,32x2"),
            ("predictor.hidden", "ax2", "expected e.g. 16x1,32x2"),
            ("predictor.hidden", "16x", "expected e.g. 16x1,32x2"),
        ],
    )
    def test_typed_value_errors(self, key, raw, hint):
        with pytest.raises(ConfigError, match=f"invalid value for {key}.*{hint}"):
            build_with(**{key: raw})

    def test_bad_variant(self):
        with pytest.raises(ConfigError, match="invalid value for schedule.variant"):
            build_with(**{"schedule.variant": "cosine"})

    def test_schedule_validation_wrapped(self):
        # fixed with the default unequal sigmas is inconsistent
        with pytest.raises(ConfigError, match="^schedule: ") as ei:
            build_with(**{"schedule.variant": "fixed"})
        assert "sigma" in str(ei.value)

    def test_naive_switch_needs_epoch(self):
        with pytest.raises(ConfigError, match="^schedule: .*switch_epoch"):
            build_with(**{"schedule.variant": "naive_switch"})

    def test_naive_switch_epoch_parsed(self):
        cfg = build_with(
            **{
                "schedule.variant": "naive_switch",
                "schedule.switch_epoch": "3",
                "predictor.epochs": "9",
            }
        )
        assert cfg.schedule.switch_epoch == 3

    def test_pgk_shape_parameter_checked(self):
        # (sigma_max - sigma_min) * alpha must stay below 1
        with pytest.raises(ConfigError, match="^schedule: "):
            build_with(**{"schedule.alpha": "0.5"})

    @pytest.mark.parametrize("key", ["threshold", "tau_p", "tau_o", "dedup_radius"])
    def test_positivity(self, key):
        with pytest.raises(ConfigError, match=f"{key} must be positive"):
            build_with(**{key: "0"})

    def test_threads_nonnegative(self):
        with pytest.raises(ConfigError, match="threads must be >= 0"):
            build_with(threads="-1")


class TestLoadRunConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="config file not found"):
            load_run_config(tmp_path / "nope.cfg", env={})

    def test_file_cli_env_chain(self, tmp_path):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("out_dir = from_file\nrng_seed = 4\n")
        cfg = load_run_config(
            cfg_path,
            cli_overrides={"rng_seed": "9"},
            env={ENV_OUT_DIR: str(tmp_path / "from_env")},
        )
        assert cfg.out_dir == tmp_path / "from_env"
        assert cfg.rng_seed == 9
        assert cfg.checkpoint == tmp_path / "from_env" / "predictor.ckpt"

    def test_predictor_errors_become_config_errors(self):
        # stride product disagrees with down_sample; raised by the
        # predictor config, surfaced under the same error type
        with pytest.raises(ConfigError, match="strides multiply to 1"):
            load_run_config(None, {"predictor.hidden": "6x1,8x1"}, env={})

    def test_default_text_round_trips(self):
        parsed = parse_kv_text(default_config_text(), source="defaults")
        assert parsed == DEFAULTS
        assert build_run_config(effective_values(parsed, env={})) == build_with()


def test_apply_thread_limit_smoke():
    apply_thread_limit(0)
    apply_thread_limit(2)


# ------------------------------------------------------------- pipeline


PIPELINE_CFG = """\
data_dir = {root}/data
out_dir = {root}/out
rng_seed = 7
predictor.patch_size = 64
predictor.down_sample = 4
predictor.hidden = 6x2,8x2
predictor.epochs = 2
predictor.batch_size = 2
predictor.learning_rate = 0.001
grid.patch_size = 64
synth.width = 64
synth.height = 64
synth.n_blocks = 1
synth.n_walls = 1
synth.n_scales = 1
synth.min_symbol_size = 12
synth.max_symbol_size = 36
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run synth/train/detect against one tiny config; also write a
    detections CSV holding the test-split ground truth."""
    mp = pytest.MonkeyPatch()
    mp.delenv(ENV_OUT_DIR, raising=False)
    mp.delenv(ENV_THREADS, raising=False)
    try:
        root = tmp_path_factory.mktemp("cli_pipeline")
        cfg = root / "run.cfg"
        cfg.write_text(PIPELINE_CFG.format(root=root))
        base = ("--config", str(cfg))

        logs = {}
        for split, count in (("train", "5"), ("val", "2"), ("test", "2")):
            code, out, _ = run_cli(*base, "synth", "--count", count, "--split", split)
            assert code == 0, out
            logs[f"synth_{split}"] = out

        code, out, _ = run_cli(*base, "train")
        assert code == 0, out
        logs["train"] = out

        test_dir = root / "data" / "test"
        images = sorted(p.name for p in test_dir.glob("*.png"))
        code, out, _ = run_cli(
            *base,
            "detect",
            *(str(test_dir / name) for name in images),
            "--dump-heatmaps",
        )
        assert code == 0, out
        logs["detect"] = out

        gt_csv = root / "gt.csv"
        by_image = {}
        for name in images:
            ann = load_annotations(test_dir / (Path(name).stem + ".json"))
            by_image[name] = [
                Detection(kp.type_id, kp.x, kp.y, 1.0) for kp in ann.keypoints
            ]
        write_detections_csv(by_image, gt_csv)

        yield {
            "base": base,
            "root": root,
            "out": root / "out",
            "test_dir": test_dir,
            "images": images,
            "gt_csv": gt_csv,
            "logs": logs,
        }
    finally:
        mp.undo()


class TestPipeline:
    def test_synth_writes_paired_files(self, pipeline):
        train_dir = pipeline["root"] / "data" / "train"
        assert sorted(p.name for p in train_dir.glob("*.png")) == [
            f"scene_{i:04d}.png" for i in range(5)
        ]
        assert len(list(train_dir.glob("*.json"))) == 5
        assert "wrote 5 scenes" in pipeline["logs"]["synth_train"]

    def test_synth_seeds_stable_under_count(self, pipeline):
        # scene i only depends on (root seed, split, i), so regenerating
        # a shorter prefix must reproduce the same bytes
        train_dir = pipeline["root"] / "data" / "train"
        before = (train_dir / "scene_0001.png").read_bytes()
        code, _, _ = run_cli(*pipeline["base"], "synth", "--count", "2")
        assert code == 0
        assert (train_dir / "scene_0001.png").read_bytes() == before

    def test_train_artifacts(self, pipeline):
        out = pipeline["out"]
        assert (out / "predictor.ckpt").is_file()
        report = (out / "train_report.csv").read_text().splitlines()
        assert report[0] == "epoch,sigma,train_loss,val_loss,seconds"
        assert len(report) == 3  # header + 2 epochs
        for fig in ("loss_curves.png", "schedule.png"):
            assert (out / fig).read_bytes()[:4] == b"\x89PNG"
        assert "trained 2 epochs (pgk)" in pipeline["logs"]["train"]

    def test_detect_csv_and_heatmaps(self, pipeline):
        out = pipeline["out"]
        parsed = read_detections_csv(out / "detections.csv")
        for dets in parsed.values():  # whatever the raw net found is in range
            for d in dets:
                assert 1 <= d.type_id <= 15
                assert 0.0 <= d.x < 64 and 0.0 <= d.y < 64
        for name in pipeline["images"]:
            pgm = out / "heatmaps" / (Path(name).stem + ".pgm")
            assert pgm.read_bytes()[:2] == b"P5"
        assert str(out / "detections.csv") in pipeline["logs"]["detect"]

    def test_group_matches_annotations(self, pipeline):
        import json

        code, out_text, _ = run_cli(
            *pipeline["base"],
            "group",
            str(pipeline["gt_csv"]),
            "--annotations",
            str(pipeline["test_dir"]),
        )
        assert code == 0
        doc = json.loads((pipeline["out"] / "symbols.json").read_text())
        assert sorted(doc["images"]) == pipeline["images"]
        for name in pipeline["images"]:
            ann = load_annotations(pipeline["test_dir"] / (Path(name).stem + ".json"))
            entry = doc["images"][name]
            assert len(entry["symbols"]) == len(ann.symbols_gt)
            assert entry["unmatched"] == []
            for sym in entry["symbols"]:
                assert sym["class"] in ("block", "wall", "scale")
                for kp in sym["keypoints"]:
                    assert set(kp) == {"x", "y", "type_id", "score"}
        assert "-> " in out_text

    def test_group_empty_csv(self, pipeline, tmp_path):
        import json

        empty = tmp_path / "empty.csv"
        empty.write_text("image,type_id,x,y,score\n")
        # separate out_dir so this does not clobber the pipeline's symbols.json
        code, out_text, _ = run_cli(
            *pipeline["base"], "--set", f"out_dir={tmp_path}", "group", str(empty)
        )
        assert code == 0
        assert "0 symbols over 0 image(s)" in out_text
        assert json.loads((tmp_path / "symbols.json").read_text()) == {"images": {}}

    def test_eval_against_annotation_dir(self, pipeline):
        code, out_text, _ = run_cli(
            *pipeline["base"],
            "eval",
            str(pipeline["gt_csv"]),
            str(pipeline["test_dir"]),
        )
        assert code == 0
        assert "P=1.0000 R=1.0000 F1=1.0000 APEK=0.0000" in out_text
        lines = (pipeline["out"] / "metrics.csv").read_text().splitlines()
        assert lines[0] == "class,precision,recall,f1,apek,support"

    def test_eval_against_detections_csv(self, pipeline):
        code, out_text, _ = run_cli(
            *pipeline["base"], "eval", str(pipeline["gt_csv"]), str(pipeline["gt_csv"])
        )
        assert code == 0
        assert "F1=1.0000 APEK=0.0000" in out_text

    def test_render_overlay(self, pipeline):
        name = pipeline["images"][0]
        code, out_text, _ = run_cli(
            *pipeline["base"],
            "render",
            str(pipeline["test_dir"] / name),
            "--detections",
            str(pipeline["gt_csv"]),
            "--symbols",
            str(pipeline["out"] / "symbols.json"),
        )
        assert code == 0
        svg = (pipeline["out"] / f"{Path(name).stem}_overlay.svg").read_text()
        assert svg.startswith("<svg")
        assert "data:image/png;base64," in svg
        assert "<circle" in svg and "<polygon" in svg
        assert "keypoints" in out_text

    def test_render_explicit_out_path(self, pipeline, tmp_path):
        target = tmp_path / "x.svg"
        name = pipeline["images"][0]
        code, _, _ = run_cli(
            *pipeline["base"],
            "render",
            str(pipeline["test_dir"] / name),
            "--out",
            str(target),
        )
        assert code == 0
        assert target.read_text().startswith("<svg")

    def test_ablate_table_and_figures(self, pipeline):
        code, out_text, _ = run_cli(*pipeline["base"], "ablate")
        assert code == 0, out_text
        out = pipeline["out"]
        lines = (out / "ablation.csv").read_text().splitlines()
        assert lines[0] == "schedule,offsets,final_val_loss,f1,apek"
        assert len(lines) == 9  # 4 schedules x offsets on/off
        labels = [line.split(",")[0] for line in lines[1:]]
        assert labels == [
            "pgk",
            "pgk",
            "fixed_s1",
            "fixed_s1",
            "fixed_s3",
            "fixed_s3",
            "naive_switch",
            "naive_switch",
        ]
        for line in lines[1:]:
            _, offsets, vloss, f1, apek = line.split(",")
            assert offsets in ("on", "off")
            assert float(vloss) > 0.0
            assert 0.0 <= float(f1) <= 1.0
            assert apek == "nan" or float(apek) >= 0.0
        for fig in ("ablation_losses.png", "schedules.png", "ablation_chart.png"):
            assert (out / fig).read_bytes()[:4] == b"\x89PNG"
        assert "ablation table ->" in out_text

    def test_env_out_dir_redirects_artifacts(self, pipeline, tmp_path, monkeypatch):
        env_out = tmp_path / "env_out"
        monkeypatch.setenv(ENV_OUT_DIR, str(env_out))
        code, out_text, _ = run_cli(
            *pipeline["base"], "eval", str(pipeline["gt_csv"]), str(pipeline["gt_csv"])
        )
        assert code == 0
        assert (env_out / "metrics.csv").is_file()
        assert str(env_out / "metrics.csv") in out_text


# ----------------------------------------------------------- exit codes


class TestCliErrors:
    def cfg(self, tmp_path: Path) -> tuple[str, ...]:
        path = tmp_path / "run.cfg"
        path.write_text(f"data_dir = {tmp_path}/data\nout_dir = {tmp_path}/out\n")
        return ("--config", str(path))

    def expect_error(self, argv: tuple[str, ...], fragment: str) -> None:
        code, _, err = run_cli(*argv)
        assert code == 1
        assert err.startswith("error: ")
        assert fragment in err

    def test_no_command_is_a_usage_error(self):
        with pytest.raises(SystemExit) as ei:
            cli.main([])
        assert ei.value.code == 2

    def test_set_without_equals(self, tmp_path):
        self.expect_error(
            self.cfg(tmp_path) + ("--set", "rng_seed", "synth", "--count", "1"),
            "--set expects KEY=VALUE, got 'rng_seed'",
        )

    def test_set_unknown_key(self, tmp_path):
        self.expect_error(
            self.cfg(tmp_path) + ("--set", "bogus=1", "synth", "--count", "1"),
            "unknown config key 'bogus'",
        )

    def test_missing_config_file(self, tmp_path):
        self.expect_error(
            ("--config", str(tmp_path / "nope.cfg"), "synth", "--count", "1"),
            "config file not found",
        )

    def test_synth_count_zero(self, tmp_path):
        self.expect_error(
            self.cfg(tmp_path) + ("synth", "--count", "0"), "--count must be >= 1"
        )

    def test_train_without_data(self, tmp_path):
        self.expect_error(
            self.cfg(tmp_path) + ("train",), "dataset split directory not found"
        )

    def test_detect_without_checkpoint(self, tmp_path):
        img = tmp_path / "a.png"
        img.write_bytes(b"")
        self.expect_error(
            self.cfg(tmp_path) + ("detect", str(img)), "checkpoint not found"
        )

    def test_detect_missing_image(self, pipeline, tmp_path):
        code, _, err = run_cli(*pipeline["base"], "detect", str(tmp_path / "no.png"))
        assert code == 1
        assert "image not found" in err

    def test_group_missing_csv(self, tmp_path):
        self.expect_error(
            self.cfg(tmp_path) + ("group", str(tmp_path / "no.csv")),
            "detections file not found",
        )

    def test_group_missing_annotation(self, pipeline, tmp_path):
        code, _, err = run_cli(
            *pipeline["base"],
            "group",
            str(pipeline["gt_csv"]),
            "--annotations",
            str(tmp_path),
        )
        assert code == 1
        assert "annotation not found" in err

    def test_eval_missing_predictions(self, tmp_path):
        self.expect_error(
            self.cfg(tmp_path) + ("eval", str(tmp_path / "no.csv"), str(tmp_path)),
            "predictions file not found",
        )

    def test_eval_missing_ground_truth(self, pipeline, tmp_path):
        code, _, err = run_cli(
            *pipeline["base"],
            "eval",
            str(pipeline["gt_csv"]),
            str(tmp_path / "nothing"),
        )
        assert code == 1
        assert "ground truth not found" in err

    def test_render_missing_image(self, tmp_path):
        self.expect_error(
            self.cfg(tmp_path) + ("render", str(tmp_path / "no.png")),
            "image not found",
        )

    def test_bad_csv_reported_not_raised(self, pipeline, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("image,type_id,x,y,score\na.png,1,2.0\n")
        code, _, err = run_cli(*pipeline["base"], "group", str(bad))
        assert code == 1
        assert "expected 5 fields" in err
