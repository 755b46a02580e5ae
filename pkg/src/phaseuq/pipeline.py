"""Staged experiment pipeline behind the command line.

Each stage reads tensors from earlier run directories and writes a fresh
run directory ``<stage>-NNN`` under the output root. Artifacts land in a
hidden staging directory first and the finished directory is renamed into
place, so an interrupted run never leaves a partial stage behind and
existing runs are never touched. Every run carries a ``manifest.txt``
(stage name, configuration hash, effective seeds, library versions);
timestamps and absolute paths stay out of it so identical invocations
produce byte-identical trees.
"""

from __future__ import annotations

import contextlib
import dataclasses
import math
import os
import platform
import shutil
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, PathsBlock, config_hash
from .errors import (
    ConfigError,
    DemoGateFailure,
    ExistingArtifact,
    FormatError,
    MissingArtifact,
    ShapeMismatch,
    ZeroMeanImage,
)
from .grid import ComplexRaster, RealRaster, resize_bicubic
from .learner import (
    ARCH_ID,
    Dataset,
    PredictiveEnsemble,
    PredictiveMap,
    RegressorParams,
    SamplePair,
    TrainConfig,
    forward,
    train_ensemble,
)
from .optics import (
    LedArrayGeometry,
    add_noise,
    design_patterns,
    forward_single_led,
    led_frequency,
    make_pupil,
    synthesize_multiplexed,
)
from .phantom import gaussian_bumps, resolution_target
from .preprocess import PatchGrid, estimate_noise, normalize_unit, stitch_alpha_blend
from .recon import MeasurementStack, SfpmConfig, dpc_reconstruct, sfpm_reconstruct
from .tensorfile import read_records, read_tensor, write_pgm16, write_records, write_tensor
from .uqstats import (
    CredibilityMap,
    averaged_credibility,
    credibility_map,
    credible_bound,
    decompose_uncertainty,
    reliability_diagram,
)

CHECKPOINT_RECORDS = ("k1", "b1", "k2", "b2", "k3", "b3", "k4", "b4")
ANALYSIS_MAPS = (
    "mean",
    "data_sigma",
    "model_sigma",
    "total_sigma",
    "credibility",
    "credible_bound",
    "abs_error",
)

# fixed verification levels for the built-in demo gate
DEMO_GATE_FRACTION = 0.99
DEMO_GATE_CREDIBILITY = 0.9


# ------------------------------------------------------------ run plumbing


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_lines(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in rows:
            fh.write(f"{key} {_fmt(value)}\n")


def _read_lines(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"{path} not found")
    out: dict[str, str] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition(" ")
            out[key] = value
    return out


def _begin_run(out_root, stage: str) -> tuple[Path, Path]:
    root = Path(out_root)
    root.mkdir(parents=True, exist_ok=True)
    last = 0
    for entry in root.iterdir():
        if entry.is_dir() and entry.name.startswith(stage + "-"):
            tail = entry.name[len(stage) + 1 :]
            if tail.isdigit():
                last = max(last, int(tail))
    final = root / f"{stage}-{last + 1:03d}"
    staging = Path(tempfile.mkdtemp(prefix=f".{stage}-", dir=root))
    return staging, final


def _commit_run(staging: Path, final: Path) -> Path:
    try:
        os.replace(staging, final)
    except OSError as exc:
        raise ExistingArtifact(f"run directory {final} already exists") from exc
    return final


@contextlib.contextmanager
def _staged_run(out_root, stage: str):
    """Yield a staging directory that vanishes unless the run commits."""
    staging, final = _begin_run(out_root, stage)
    try:
        yield staging, final
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise


def _settings_hash(cfg: ExperimentConfig) -> str:
    # input locations do not affect the artifacts, so they stay out of the hash
    return config_hash(dataclasses.replace(cfg, paths=PathsBlock()))


def _manifest(staging, stage, cfg, inputs=None, seeds=None, threads="unset") -> None:
    rows: list[tuple[str, object]] = [
        ("stage", stage),
        ("config_sha256", _settings_hash(cfg)),
    ]
    for key, path in sorted((inputs or {}).items()):
        rows.append((f"input_{key}", Path(path).name))
    for key, value in sorted((seeds or {}).items()):
        rows.append((f"seed_{key}", value))
    if threads != "unset":
        rows.append(("threads", "auto" if threads is None else threads))
    rows += [
        ("version_phaseuq", __version__),
        ("version_numpy", np.__version__),
        ("version_scipy", scipy.__version__),
        ("version_python", platform.python_version()),
    ]
    _write_lines(staging / "manifest.txt", rows)


def _load(run_dir, name: str) -> tuple[np.ndarray, dict[str, str]]:
    path = Path(run_dir) / name
    if not path.is_file():
        raise MissingArtifact(f"{path} not found")
    array, meta = read_tensor(path)
    info: dict[str, str] = {}
    for line in meta.splitlines():
        if line.strip():
            key, _, value = line.partition(" ")
            info[key] = value
    return array, info


def _save(staging, name, array, meta_rows=(), export_pgm=False) -> None:
    arr = np.asarray(array, dtype=np.float64)
    meta = "\n".join(f"{k} {_fmt(v)}" for k, v in meta_rows)
    write_tensor(Path(staging) / name, arr, meta)
    if export_pgm and arr.ndim == 2:
        write_pgm16(Path(staging) / (name.rsplit(".", 1)[0] + ".pgm"), arr)


def _require(block, name: str):
    if block is None:
        raise ConfigError(f"config block {name!r} is required for this stage")
    return block


def _geometry(cfg: ExperimentConfig) -> LedArrayGeometry:
    g = _require(cfg.geometry, "geometry")
    return LedArrayGeometry(
        g.rows, g.cols, g.pitch_led, g.height, g.wavelength, (g.center_row, g.center_col)
    )


def _hires_pitch(cfg: ExperimentConfig) -> float:
    o = _require(cfg.optics, "optics")
    return o.pitch_detector * o.n_detector / o.n_hires


# ------------------------------------------------------------ stages


def simulate_stage(cfg: ExperimentConfig, out_root, *, export_pgm: bool = False) -> Path:
    """Phantom, single-LED stack, and multiplexed pattern images."""
    geom = _geometry(cfg)
    opt = _require(cfg.optics, "optics")
    ph = _require(cfg.phantom, "phantom")
    hp = _hires_pitch(cfg)
    shape_hi = (opt.n_hires, opt.n_hires)
    shape_det = (opt.n_detector, opt.n_detector)

    if ph.kind == "gaussian-bumps":
        phi = gaussian_bumps(
            shape_hi, ph.count, ph.amplitude_lo, ph.amplitude_hi, ph.seed, pitch=hp
        )
    else:
        phi = resolution_target(shape_hi, ph.amplitude_hi, pitch=hp)
    obj = ComplexRaster(np.exp(1j * phi.data), hp)
    pupil = make_pupil(opt.na_obj, geom.wavelength, shape_det, opt.pitch_detector)

    noisy = cfg.noise.model != "none"
    leds = [led for led in range(geom.n_leds) if geom.led_na(led) <= opt.na_max + 1e-12]
    stack = []
    for led in leds:
        u, _ = led_frequency(geom, led)
        img = forward_single_led(obj, pupil, u, shape_det)
        if noisy:
            img = add_noise(img, (cfg.noise.model, cfg.noise.level), cfg.noise.seed + led)
        stack.append(img.data)

    patterns = design_patterns(geom, opt.na_obj, opt.na_max)
    mux = []
    for i, pattern in enumerate(patterns):
        img = synthesize_multiplexed(obj, pupil, pattern, geom, shape_det)
        if noisy:
            img = add_noise(
                img, (cfg.noise.model, cfg.noise.level), cfg.noise.seed + 100000 + i
            )
        mux.append(img.data)

    with _staged_run(out_root, "simulate") as (staging, final):
        _save(
            staging,
            "phantom_phase.puqt",
            phi.data,
            [("pitch", hp), ("kind", ph.kind)],
            export_pgm,
        )
        _save(
            staging,
            "led_stack.puqt",
            np.stack(stack),
            [("pitch", opt.pitch_detector), ("leds", " ".join(str(led) for led in leds))],
        )
        _save(
            staging,
            "multiplexed.puqt",
            np.stack(mux),
            [("pitch", opt.pitch_detector), ("patterns", " ".join(p.label for p in patterns))],
        )
        _manifest(
            staging, "simulate", cfg, seeds={"phantom": ph.seed, "noise": cfg.noise.seed}
        )
        return _commit_run(staging, final)


def sfpm_stage(cfg: ExperimentConfig, out_root, simulate_dir, *, export_pgm: bool = False) -> Path:
    """Iterative synthetic-aperture phase retrieval from the LED stack."""
    geom = _geometry(cfg)
    opt = _require(cfg.optics, "optics")
    arr, info = _load(simulate_dir, "led_stack.puqt")
    leds = [int(tok) for tok in info.get("leds", "").split()]
    if len(leds) != arr.shape[0]:
        raise FormatError(
            f"led_stack metadata lists {len(leds)} LEDs for {arr.shape[0]} images"
        )
    images = {led: RealRaster(arr[i], opt.pitch_detector) for i, led in enumerate(leds)}
    stack = MeasurementStack(images, geom, opt.na_obj)
    scfg = SfpmConfig(cfg.sfpm.epochs, cfg.sfpm.step, cfg.sfpm.order, cfg.sfpm.init)
    residuals: list[float] = []
    field = sfpm_reconstruct(stack, scfg, (opt.n_hires, opt.n_hires), residuals)
    phase = np.angle(field.data)

    with _staged_run(out_root, "sfpm") as (staging, final):
        _save(
            staging,
            "phase.puqt",
            phase,
            [("pitch", _hires_pitch(cfg)), ("method", "sfpm")],
            export_pgm,
        )
        _write_lines(
            staging / "residuals.txt", [(str(i), r) for i, r in enumerate(residuals)]
        )
        _manifest(staging, "sfpm", cfg, inputs={"simulate": simulate_dir})
        return _commit_run(staging, final)


def dpc_stage(cfg: ExperimentConfig, out_root, simulate_dir, *, export_pgm: bool = False) -> Path:
    """One-shot weak-phase reconstruction from the brightfield patterns."""
    geom = _geometry(cfg)
    opt = _require(cfg.optics, "optics")
    arr, info = _load(simulate_dir, "multiplexed.puqt")
    patterns = design_patterns(geom, opt.na_obj, opt.na_max)
    labels = info.get("patterns", "").split()
    if labels != [p.label for p in patterns]:
        raise FormatError("multiplexed stack does not match the configured pattern set")
    bf = [RealRaster(arr[i], opt.pitch_detector) for i in range(2)]
    pupil = make_pupil(opt.na_obj, geom.wavelength, arr.shape[1:], opt.pitch_detector)
    phase = dpc_reconstruct(bf, patterns[:2], pupil, geom)

    with _staged_run(out_root, "dpc") as (staging, final):
        _save(
            staging,
            "phase.puqt",
            phase.data,
            [("pitch", opt.pitch_detector), ("method", "dpc")],
            export_pgm,
        )
        _manifest(staging, "dpc", cfg, inputs={"simulate": simulate_dir})
        return _commit_run(staging, final)


def preprocess_stage(
    cfg: ExperimentConfig, out_root, simulate_dir, recon_dir, *, export_pgm: bool = False
) -> Path:
    """Normalized truth, background noise level, and training patches."""
    opt = _require(cfg.optics, "optics")
    hp = _hires_pitch(cfg)
    n = opt.n_hires

    phi, _ = _load(simulate_dir, "phantom_phase.puqt")
    truth_norm, scale, offset = normalize_unit(RealRaster(phi, hp))

    recon, _ = _load(recon_dir, "phase.puqt")
    if recon.shape != (n, n):
        recon = resize_bicubic(RealRaster(recon, 1.0), n, n).data
    # global phase offsets cancel inside the noise estimate, the scale must match
    recon_norm = (recon - offset) / scale

    mask = truth_norm.data <= cfg.analysis.background_threshold
    noise = estimate_noise(RealRaster(recon_norm, hp), mask)

    mux, _ = _load(simulate_dir, "multiplexed.puqt")
    channels = []
    for i in range(mux.shape[0]):
        mean = float(mux[i].mean())
        if mean <= 0.0:
            raise ZeroMeanImage(f"multiplexed channel {i} has non-positive mean")
        contrast = RealRaster(mux[i] / mean - 1.0, opt.pitch_detector)
        channels.append(resize_bicubic(contrast, n, n).data)
    inputs = np.stack(channels)

    grid = PatchGrid(
        cfg.train.patch, cfg.train.patch, cfg.train.stride, cfg.train.stride, n, n
    )
    positions = grid.positions()
    targets = np.stack(
        [truth_norm.data[r : r + grid.patch_h, c : c + grid.patch_w] for r, c in positions]
    )
    patch_inputs = np.stack(
        [inputs[:, r : r + grid.patch_h, c : c + grid.patch_w] for r, c in positions]
    )
    split = np.array([1.0 if k % 4 == 3 else 0.0 for k in range(len(positions))])

    with _staged_run(out_root, "preprocess") as (staging, final):
        _save(staging, "truth_normalized.puqt", truth_norm.data, [("pitch", hp)], export_pgm)
        _save(staging, "recon_normalized.puqt", recon_norm, [("pitch", hp)], export_pgm)
        _save(staging, "inputs_normalized.puqt", inputs, [("pitch", hp)])
        _save(
            staging,
            "background_mask.puqt",
            mask.astype(float),
            [("pitch", hp), ("threshold", cfg.analysis.background_threshold)],
            export_pgm,
        )
        _save(staging, "patches_inputs.puqt", patch_inputs, [("layout", "patch channel row col")])
        _save(staging, "patches_targets.puqt", targets, [("layout", "patch row col")])
        _save(
            staging,
            "patches_positions.puqt",
            np.asarray(positions, dtype=np.float64),
            [("layout", "patch (row col)")],
        )
        _save(staging, "patches_split.puqt", split, [("encoding", "0=train 1=validation")])
        _write_lines(staging / "norm.txt", [("scale", scale), ("offset", offset)])
        _write_lines(
            staging / "noise.txt",
            [("sigma_background", noise.sigma_background), ("pixel_count", noise.pixel_count)],
        )
        _manifest(
            staging, "preprocess", cfg, inputs={"simulate": simulate_dir, "recon": recon_dir}
        )
        return _commit_run(staging, final)


def train_stage(cfg: ExperimentConfig, out_root, preprocess_dir, *, threads=None) -> Path:
    """Fit the deep ensemble on the training patches, one checkpoint each."""
    t = cfg.train
    xs, _ = _load(preprocess_dir, "patches_inputs.puqt")
    ys, _ = _load(preprocess_dir, "patches_targets.puqt")
    split, _ = _load(preprocess_dir, "patches_split.puqt")
    if not (xs.shape[0] == ys.shape[0] == split.shape[0]):
        raise ShapeMismatch("patch tensors disagree on the sample count")
    pairs = [
        SamplePair(
            xs[k],
            ys[k],
            split="validation" if split[k] > 0.5 else "train",
            region="patch",
            frame=k,
            sample_id=f"patch-{k:04d}",
        )
        for k in range(xs.shape[0])
    ]
    dataset = Dataset(pairs)
    tcfg = TrainConfig(
        lr=t.lr,
        epochs=t.epochs,
        batch_size=t.batch_size,
        dropout_rate=t.dropout_rate,
        seed=t.seed,
        ensemble_size=t.ensemble_size,
    )
    models = train_ensemble(dataset, tcfg, threads=threads)

    with _staged_run(out_root, "train") as (staging, final):
        shash = _settings_hash(cfg)
        for p, params in enumerate(models):
            header = f"arch {ARCH_ID}\nmember {p}\nseed {t.seed + p}\nconfig_sha256 {shash}"
            records = [
                (name, arr, header if name == "k1" else "")
                for name, arr in zip(CHECKPOINT_RECORDS, params.as_list())
            ]
            write_records(staging / f"checkpoint_{p:03d}.puqt", records)
        _manifest(
            staging,
            "train",
            cfg,
            inputs={"preprocess": preprocess_dir},
            seeds={"train": t.seed},
            threads=threads,
        )
        return _commit_run(staging, final)


def _load_checkpoint(path) -> RegressorParams:
    records = read_records(path)
    names = [name for name, _, _ in records]
    if names != list(CHECKPOINT_RECORDS):
        raise FormatError(f"{path}: unexpected checkpoint records {names}")
    header = records[0][2]
    if f"arch {ARCH_ID}" not in header.splitlines():
        raise FormatError(f"{path}: checkpoint does not declare arch {ARCH_ID}")
    return RegressorParams(*[np.asarray(arr, dtype=np.float64) for _, arr, _ in records])


def predict_stage(cfg: ExperimentConfig, out_root, preprocess_dir, train_dir) -> Path:
    """Per-member predictive maps over all patches."""
    xs, _ = _load(preprocess_dir, "patches_inputs.puqt")
    paths = sorted(Path(train_dir).glob("checkpoint_*.puqt"))
    if not paths:
        raise MissingArtifact(f"no checkpoints found in {train_dir}")
    members = [_load_checkpoint(p) for p in paths]

    n_patches = xs.shape[0]
    mu = np.empty((len(members), n_patches) + xs.shape[2:])
    sigma = np.empty_like(mu)
    for p, params in enumerate(members):
        for k in range(n_patches):
            pred = forward(params, xs[k])
            mu[p, k] = pred.mu.data
            sigma[p, k] = pred.sigma

    with _staged_run(out_root, "predict") as (staging, final):
        layout = [("layout", "member patch row col")]
        _save(staging, "mu.puqt", mu, layout)
        _save(staging, "sigma.puqt", sigma, layout)
        _manifest(
            staging, "predict", cfg, inputs={"preprocess": preprocess_dir, "train": train_dir}
        )
        return _commit_run(staging, final)


def analyze_stage(
    cfg: ExperimentConfig, out_root, preprocess_dir, predict_dir, *, export_pgm: bool = False
) -> Path:
    """Uncertainty decomposition, credibility, bounds, and reliability."""
    a = cfg.analysis
    mu, _ = _load(predict_dir, "mu.puqt")
    sigma, _ = _load(predict_dir, "sigma.puqt")
    ys, _ = _load(preprocess_dir, "patches_targets.puqt")
    if mu.shape != sigma.shape or mu.shape[1:] != ys.shape:
        raise ShapeMismatch(f"predictions {mu.shape} do not match targets {ys.shape}")
    n_members, n_patches, h, w = mu.shape

    # per-pixel statistics ignore position, so the patch axis is folded
    # into one tall mosaic and unfolded again for the output tensors
    members = tuple(
        PredictiveMap(
            RealRaster(mu[p].reshape(n_patches * h, w), 1.0),
            RealRaster(np.log(sigma[p]).reshape(n_patches * h, w), 1.0),
        )
        for p in range(n_members)
    )
    ens = PredictiveEnsemble(members, "deep-ensemble")
    truth = RealRaster(ys.reshape(n_patches * h, w), 1.0)

    if a.policy == "background-noise":
        info = _read_lines(Path(preprocess_dir) / "noise.txt")
        sigma_bg = float(info["sigma_background"])
        epsilon = -sigma_bg * math.log1p(-a.target_p)
    else:
        epsilon = a.epsilon
        if not epsilon > 0.0:
            raise ConfigError("analysis.epsilon must be positive under the explicit policy")

    maps = decompose_uncertainty(ens)
    cmap = credibility_map(ens, epsilon)
    bound = credible_bound(ens, a.target_p)
    diagram = reliability_diagram(ens, truth, epsilon, a.delta_p)
    abs_error = np.abs(maps.mean.data - truth.data)

    with _staged_run(out_root, "analyze") as (staging, final):
        layout = [("layout", "patch row col")]
        folded = {
            "mean": maps.mean.data,
            "data_sigma": maps.data_sigma.data,
            "model_sigma": maps.model_sigma.data,
            "total_sigma": maps.total_sigma.data,
            "credibility": cmap.values.data,
            "credible_bound": bound.data,
            "abs_error": abs_error,
        }
        for name in ANALYSIS_MAPS:
            _save(staging, f"{name}.puqt", folded[name].reshape(n_patches, h, w), layout)
        diagram.to_csv(staging / "reliability.csv")
        rows = [
            ("policy", a.policy),
            ("epsilon", epsilon),
            ("target_p", a.target_p),
            ("delta_p", a.delta_p),
            ("avg_credibility", averaged_credibility(cmap, np.ones(truth.shape, dtype=bool))),
            ("populated_bins", len(diagram.populated)),
            ("max_gap", diagram.max_gap()),
        ]
        if a.policy == "background-noise":
            rows.insert(2, ("sigma_background", sigma_bg))
        _write_lines(staging / "analysis.txt", rows)
        _manifest(
            staging, "analyze", cfg, inputs={"preprocess": preprocess_dir, "predict": predict_dir}
        )
        return _commit_run(staging, final)


def stitch_stage(
    cfg: ExperimentConfig, out_root, preprocess_dir, analyze_dir, *, export_pgm: bool = False
) -> Path:
    """Blend per-patch maps back onto the full frame and summarize regions."""
    opt = _require(cfg.optics, "optics")
    hp = _hires_pitch(cfg)
    n = opt.n_hires
    pos, _ = _load(preprocess_dir, "patches_positions.puqt")
    positions = [(int(r), int(c)) for r, c in pos]
    bg, _ = _load(preprocess_dir, "background_mask.puqt")
    background = bg > 0.5

    stitched: dict[str, RealRaster] = {}
    for name in ANALYSIS_MAPS:
        maps, _ = _load(analyze_dir, f"{name}.puqt")
        if maps.shape[0] != len(positions):
            raise ShapeMismatch(
                f"{name} holds {maps.shape[0]} patches for {len(positions)} positions"
            )
        patches = [(RealRaster(maps[k], hp), positions[k]) for k in range(maps.shape[0])]
        stitched[name] = stitch_alpha_blend(patches, (n, n))

    info = _read_lines(Path(analyze_dir) / "analysis.txt")
    epsilon = float(info["epsilon"])
    # blending is convex so values stay in [0, 1] up to rounding
    cmap = CredibilityMap(
        RealRaster(np.clip(stitched["credibility"].data, 0.0, 1.0), hp), epsilon
    )

    def region_mean(mask: np.ndarray) -> float:
        return averaged_credibility(cmap, mask) if mask.any() else float("nan")

    frac_high = (
        float(np.mean(cmap.values.data[background] > DEMO_GATE_CREDIBILITY))
        if background.any()
        else float("nan")
    )

    with _staged_run(out_root, "stitch") as (staging, final):
        for name, raster in stitched.items():
            _save(staging, f"stitched_{name}.puqt", raster.data, [("pitch", hp)], export_pgm)
        _write_lines(
            staging / "summary.txt",
            [
                ("epsilon", epsilon),
                ("avg_credibility_full", region_mean(np.ones((n, n), dtype=bool))),
                ("avg_credibility_cell", region_mean(~background)),
                ("avg_credibility_background", region_mean(background)),
                ("background_fraction_high", frac_high),
                ("gate_credibility_level", DEMO_GATE_CREDIBILITY),
            ],
        )
        _manifest(
            staging, "stitch", cfg, inputs={"preprocess": preprocess_dir, "analyze": analyze_dir}
        )
        return _commit_run(staging, final)


def demo_stage(
    cfg: ExperimentConfig, out_root, *, threads=None, export_pgm: bool = False
) -> Path:
    """Full chain on one configuration, ending in a credibility gate.

    The gate requires the background credibility to be trustworthy: at
    least 99 percent of background pixels must sit above credibility 0.9
    under the background-noise epsilon policy. Failing the gate still
    commits the run directory so the artifacts can be inspected.
    """
    ph = _require(cfg.phantom, "phantom")
    with _staged_run(out_root, "demo") as (staging, final):
        sim = simulate_stage(cfg, staging, export_pgm=export_pgm)
        rec = sfpm_stage(cfg, staging, sim, export_pgm=export_pgm)
        pre = preprocess_stage(cfg, staging, sim, rec, export_pgm=export_pgm)
        tr = train_stage(cfg, staging, pre, threads=threads)
        prd = predict_stage(cfg, staging, pre, tr)
        ana = analyze_stage(cfg, staging, pre, prd, export_pgm=export_pgm)
        st = stitch_stage(cfg, staging, pre, ana, export_pgm=export_pgm)

        info = _read_lines(st / "summary.txt")
        frac = float(info["background_fraction_high"])
        passed = frac >= DEMO_GATE_FRACTION
        _write_lines(
            staging / "demo_report.txt",
            [
                ("gate", "pass" if passed else "fail"),
                ("gate_fraction_required", DEMO_GATE_FRACTION),
                ("gate_credibility_level", DEMO_GATE_CREDIBILITY),
                ("background_fraction_high", frac),
                ("avg_credibility_background", float(info["avg_credibility_background"])),
                ("avg_credibility_cell", float(info["avg_credibility_cell"])),
                ("epsilon", float(info["epsilon"])),
            ],
        )
        _manifest(
            staging,
            "demo",
            cfg,
            seeds={"phantom": ph.seed, "noise": cfg.noise.seed, "train": cfg.train.seed},
            threads=threads,
        )
        run = _commit_run(staging, final)
        if not passed:
            raise DemoGateFailure(
                f"only {frac:.4f} of background pixels reached credibility > "
                f"{DEMO_GATE_CREDIBILITY} (need {DEMO_GATE_FRACTION}); see {run}"
            )
        return run
