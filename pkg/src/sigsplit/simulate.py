"""Randomized experiment campaigns with seeded, reproducible reports.

Two experiment families: damped oscillators corrupted by impulsive
Gaussian-pulse noise, and B-spline spectra sitting on a blackbody background.
Each trial plants a known sparse component, composes the observed signal,
runs the pursuit, and scores the recovery. (cfg, seed) fully determines every
report field except runtimes.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import SampledSignal, SamplingGrid
from .dictionaries import (
    bspline_atoms,
    blackbody_atoms,
    gaussian_pulse_atoms,
    oscillator_atoms,
)
from .oblique import Dictionary, build_oblique_batch
from .pursuit import PursuitParams, nonneg_constraint, run_pursuit

NOISE_MODES = ("stddev", "variance")

# rms relative rounding error of a float64 value stored as float32
SINGLE_PRECISION_RMS = 2.0**-24 / np.sqrt(3.0)


@dataclass(frozen=True)
class OscillatorSetup:
    """Dictionary and planting parameters for the oscillator experiment.

    freq_min_gap > 1 draws planted frequencies with pairwise separation of at
    least that many grid steps, keeping the planted subspace well separated
    even when the full dictionary is numerically degenerate.
    """

    freq_lo: int = 1
    freq_hi: int = 100
    pulse_count: int = 100
    pulse_spacing: float = 0.005
    pulse_sharpness: float = 25000.0
    planted_pulses: int = 50
    coeff_lo: float = 0.1
    coeff_hi: float = 1.0
    pulse_amp_lo: float = 0.1
    pulse_amp_hi: float = 1.0
    freq_min_gap: int = 3


@dataclass(frozen=True)
class SpectrumSetup:
    """Dictionary and planting parameters for the spectrum experiment."""

    length_um: float = 3.0
    knot_spacing_um: float = 2.0**-4
    translate_step_um: float | None = None
    temperatures_k: tuple = (3000.0, 3500.0, 4000.0, 4500.0, 5000.0)
    background_normalize: str = "peak"
    coeff_lo: float = 0.0
    coeff_hi: float = 1.0


@dataclass(frozen=True)
class TrialConfig:
    """Everything one campaign trial depends on, besides its seed offset."""

    experiment: str
    grid: SamplingGrid
    sparsity: int
    seed: int
    noise_percent: float = 0.0
    noise_mode: str = "stddev"
    single_precision_data: bool = False
    oscillators: OscillatorSetup | None = None
    spectrum: SpectrumSetup | None = None
    max_rank: int | None = None
    delta: float | None = None
    delta_eta: float = 1.0
    accept_tol: float = 1e-8
    max_swap_stage: int = 2
    nonneg: bool = False
    pinv_rel_tol: float = 1e-12
    success_error_threshold: float = 1e-4
    success_requires_support: bool = True

    def __post_init__(self):
        if self.experiment not in ("oscillators", "spectrum"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.experiment == "oscillators" and self.oscillators is None:
            raise ValueError("oscillator experiment needs an OscillatorSetup")
        if self.experiment == "spectrum" and self.spectrum is None:
            raise ValueError("spectrum experiment needs a SpectrumSetup")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
        if self.noise_percent < 0:
            raise ValueError("noise_percent must be >= 0")
        if self.sparsity < 1:
            raise ValueError("sparsity must be >= 1")


@dataclass(frozen=True)
class TrialReport:
    """Recovery metrics of a single trial."""

    seed: int
    true_support: tuple[int, ...]
    recovered_support: tuple[int, ...]
    support_exact: bool
    relative_l2_error: float
    residual: float
    swaps: int
    stage: int
    runtime_ms: float
    termination: str
    recon_min: float
    recon_max: float
    success: bool


@dataclass(frozen=True)
class CampaignReport:
    """Aggregate over seeded trials; deterministic given the config."""

    experiment: str
    n_trials: int
    success_count: int
    error_p50: float
    error_p90: float
    error_max: float
    config_hash: str
    noise_mode: str
    trials: tuple[TrialReport, ...]

    @property
    def success_rate(self) -> float:
        return self.success_count / self.n_trials


def round_to_single(f: SampledSignal) -> SampledSignal:
    """Emulate data stored in 32-bit precision: round and widen back."""
    return SampledSignal(f.values.astype(np.float32).astype(np.float64), f.grid)


def add_noise(
    f: SampledSignal, p: float, mode: str, rng: np.random.Generator
) -> SampledSignal:
    """Zero-mean normal perturbation scaled per sample by the data value.

    mode "stddev": sigma_t = (p/100) |f_t|; mode "variance":
    sigma_t^2 = (p/100) |f_t|. p = 0 returns the input unchanged.
    """
    if p < 0:
        raise ValueError("p must be >= 0")
    if mode not in NOISE_MODES:
        raise ValueError(f"mode must be one of {NOISE_MODES}")
    if p == 0.0:
        return f
    mag = np.abs(f.values)
    sigma = (p / 100.0) * mag if mode == "stddev" else np.sqrt((p / 100.0) * mag)
    return SampledSignal(f.values + sigma * rng.standard_normal(f.values.shape), f.grid)


def noise_delta(
    f: SampledSignal, p: float, mode: str, single_precision: bool, eta: float
) -> float:
    """Residual stopping level matched to the configured noise scale.

    Computes eta times the expected l2 norm of the perturbation: the
    per-sample noise sigma summed in quadrature, plus the single-precision
    rounding floor when the data are stored in 32 bits.
    """
    mag = np.abs(f.values)
    noise_sq = 0.0
    if p > 0:
        sigma = (p / 100.0) * mag if mode == "stddev" else np.sqrt((p / 100.0) * mag)
        noise_sq += float(np.dot(sigma, sigma))
    if single_precision:
        noise_sq += float(SINGLE_PRECISION_RMS**2 * np.dot(mag, mag))
    return eta * float(np.sqrt(noise_sq))


@lru_cache(maxsize=8)
def _oscillator_dicts(setup: OscillatorSetup, grid: SamplingGrid):
    v = oscillator_atoms(range(setup.freq_lo, setup.freq_hi + 1), grid)
    wperp = gaussian_pulse_atoms(
        setup.pulse_count, setup.pulse_spacing, setup.pulse_sharpness, grid
    )
    return v, wperp


@lru_cache(maxsize=8)
def _spectrum_dicts(setup: SpectrumSetup, grid: SamplingGrid):
    v = bspline_atoms(
        setup.length_um, setup.knot_spacing_um, grid, setup.translate_step_um
    )
    wperp = blackbody_atoms(setup.temperatures_k, grid, setup.background_normalize)
    return v, wperp


def experiment_dictionaries(cfg: TrialConfig) -> tuple[Dictionary, Dictionary]:
    """Component dictionary and nuisance-subspace spanners for a config."""
    if cfg.experiment == "oscillators":
        return _oscillator_dicts(cfg.oscillators, cfg.grid)
    return _spectrum_dicts(cfg.spectrum, cfg.grid)


@dataclass(frozen=True)
class PlantedInstance:
    """One composed trial signal together with its ground truth."""

    f: SampledSignal
    component_v: SampledSignal
    component_wperp: SampledSignal
    support: tuple[int, ...]
    coeffs: np.ndarray


def _draw_support(rng: np.random.Generator, m: int, k: int, min_gap: int) -> np.ndarray:
    """Sorted k-subset of range(m); with min_gap > 1, pairwise gaps >= min_gap.

    Uses the standard bijection between gapped subsets and plain ones, so the
    draw stays uniform over the admissible supports.
    """
    if min_gap <= 1:
        return np.sort(rng.choice(m, size=k, replace=False))
    shrunk = m - (k - 1) * (min_gap - 1)
    if shrunk < k:
        raise ValueError(f"cannot place {k} atoms with gap {min_gap} in range {m}")
    base = np.sort(rng.choice(shrunk, size=k, replace=False))
    return base + np.arange(k) * (min_gap - 1)


def plant_instance(cfg: TrialConfig, seed: int) -> PlantedInstance:
    """Compose the observed signal for one trial: planted part, nuisance, noise."""
    rng = np.random.default_rng(seed)
    v_dict, wperp_dict = experiment_dictionaries(cfg)
    m = len(v_dict)
    if cfg.sparsity > m:
        raise ValueError(f"sparsity {cfg.sparsity} exceeds dictionary size {m}")
    min_gap = cfg.oscillators.freq_min_gap if cfg.experiment == "oscillators" else 1
    support = _draw_support(rng, m, cfg.sparsity, min_gap)
    if cfg.experiment == "oscillators":
        setup = cfg.oscillators
        coeffs = rng.uniform(setup.coeff_lo, setup.coeff_hi, size=cfg.sparsity)
        pulse_idx = rng.choice(len(wperp_dict), size=setup.planted_pulses, replace=False)
        amps = rng.uniform(setup.pulse_amp_lo, setup.pulse_amp_hi, size=setup.planted_pulses)
        nuisance = wperp_dict.atoms[:, pulse_idx] @ amps
    else:
        setup = cfg.spectrum
        coeffs = rng.uniform(setup.coeff_lo, setup.coeff_hi, size=cfg.sparsity)
        nuisance = wperp_dict.atoms.sum(axis=1)
    planted = v_dict.atoms[:, support] @ coeffs
    f = SampledSignal(planted + nuisance, cfg.grid)
    f = add_noise(f, cfg.noise_percent, cfg.noise_mode, rng)
    if cfg.single_precision_data:
        f = round_to_single(f)
    return PlantedInstance(
        f=f,
        component_v=SampledSignal(planted, cfg.grid),
        component_wperp=SampledSignal(nuisance, cfg.grid),
        support=tuple(int(i) for i in support),
        coeffs=coeffs,
    )


def pursuit_params_for(cfg: TrialConfig, f: SampledSignal) -> PursuitParams:
    """Pursuit knobs for a trial; delta defaults to the noise-matched level."""
    delta = cfg.delta
    if delta is None:
        delta = noise_delta(
            f, cfg.noise_percent, cfg.noise_mode, cfg.single_precision_data, cfg.delta_eta
        )
    max_rank = cfg.max_rank if cfg.max_rank is not None else cfg.sparsity
    return PursuitParams(
        max_rank=max_rank,
        sparsity=cfg.sparsity if cfg.sparsity <= max_rank else None,
        delta=delta,
        accept_tol=cfg.accept_tol,
        max_swap_stage=cfg.max_swap_stage,
        constraint=nonneg_constraint() if cfg.nonneg else None,
    )


def _score_trial(cfg: TrialConfig, seed: int) -> TrialReport:
    instance = plant_instance(cfg, seed)
    v_dict, wperp_dict = experiment_dictionaries(cfg)
    params = pursuit_params_for(cfg, instance.f)
    started = time.perf_counter()
    result = run_pursuit(v_dict, wperp_dict, instance.f, params)
    runtime_ms = (time.perf_counter() - started) * 1e3
    recovered = tuple(sorted(result.selected))
    support_exact = recovered == instance.support
    planted_norm = instance.component_v.norm()
    error = float(
        np.linalg.norm(result.component_v.values - instance.component_v.values)
        / planted_norm
    )
    success = error <= cfg.success_error_threshold and (
        support_exact or not cfg.success_requires_support
    )
    recon = result.component_v.values
    return TrialReport(
        seed=seed,
        true_support=instance.support,
        recovered_support=recovered,
        support_exact=support_exact,
        relative_l2_error=error,
        residual=result.final_residual,
        swaps=result.swaps_performed,
        stage=result.stage_reached,
        runtime_ms=runtime_ms,
        termination=result.termination.value,
        recon_min=float(recon.min()),
        recon_max=float(recon.max()),
        success=success,
    )


def run_oscillator_trial(cfg: TrialConfig, seed: int) -> TrialReport:
    """Plant a sparse oscillator register under pulse noise and recover it."""
    if cfg.experiment != "oscillators":
        raise ValueError("config is not an oscillator experiment")
    return _score_trial(cfg, seed)


def run_spectrum_trial(cfg: TrialConfig, seed: int) -> TrialReport:
    """Plant a B-spline spectrum on a blackbody background and recover it."""
    if cfg.experiment != "spectrum":
        raise ValueError("config is not a spectrum experiment")
    return _score_trial(cfg, seed)


def config_hash(cfg: TrialConfig) -> str:
    payload = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def run_campaign(cfg: TrialConfig, n_trials: int) -> CampaignReport:
    """Run trials at seeds cfg.seed + 0 .. cfg.seed + n_trials - 1 and aggregate."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    runner = run_oscillator_trial if cfg.experiment == "oscillators" else run_spectrum_trial
    trials = tuple(runner(cfg, cfg.seed + i) for i in range(n_trials))
    errors = np.array([t.relative_l2_error for t in trials])
    return CampaignReport(
        experiment=cfg.experiment,
        n_trials=n_trials,
        success_count=sum(t.success for t in trials),
        error_p50=float(np.percentile(errors, 50)),
        error_p90=float(np.percentile(errors, 90)),
        error_max=float(errors.max()),
        config_hash=config_hash(cfg),
        noise_mode=cfg.noise_mode,
        trials=trials,
    )


@dataclass(frozen=True)
class ConditioningComparison:
    """Full-dictionary batch projection versus pursuit on one instance."""

    batch_error: float
    pursuit_error: float
    condition_number: float
    numeric_rank: int
    seed: int


def conditioning_comparison(cfg: TrialConfig, seed: int | None = None) -> ConditioningComparison:
    """Contrast the ill-posed whole-space projection with the adaptive pursuit."""
    seed = cfg.seed if seed is None else seed
    instance = plant_instance(cfg, seed)
    v_dict, wperp_dict = experiment_dictionaries(cfg)
    projector, report = build_oblique_batch(v_dict, wperp_dict, rel_tol=cfg.pinv_rel_tol)
    batch_recovered = projector.apply(instance.f)
    planted_norm = instance.component_v.norm()
    batch_error = float(
        np.linalg.norm(batch_recovered.values - instance.component_v.values) / planted_norm
    )
    trial = _score_trial(cfg, seed)
    return ConditioningComparison(
        batch_error=batch_error,
        pursuit_error=trial.relative_l2_error,
        condition_number=report.condition_number,
        numeric_rank=report.numeric_rank,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# persistence

def campaign_to_dict(report: CampaignReport, cfg: TrialConfig) -> dict:
    return {
        "experiment": report.experiment,
        "config": asdict(cfg),
        "config_hash": report.config_hash,
        "noise_mode": report.noise_mode,
        "n_trials": report.n_trials,
        "success_count": report.success_count,
        "success_rate": report.success_rate,
        "error_percentiles": {
            "p50": report.error_p50,
            "p90": report.error_p90,
            "max": report.error_max,
        },
        "digest": campaign_digest(report),
        "trials": [asdict(t) for t in report.trials],
    }


def campaign_digest(report: CampaignReport) -> str:
    """Hash over everything except runtime fields."""
    trials = []
    for t in report.trials:
        d = asdict(t)
        d.pop("runtime_ms")
        trials.append(d)
    payload = json.dumps(
        {
            "experiment": report.experiment,
            "config_hash": report.config_hash,
            "success_count": report.success_count,
            "trials": trials,
        },
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_campaign(report: CampaignReport, cfg: TrialConfig, out_dir) -> tuple[Path, Path]:
    """Write campaign.json (full) and trials.csv (flat per-trial table)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "campaign.json"
    json_path.write_text(json.dumps(campaign_to_dict(report, cfg), indent=2, default=str) + "\n")
    csv_path = out / "trials.csv"
    columns = [
        "seed",
        "support_exact",
        "relative_l2_error",
        "residual",
        "swaps",
        "stage",
        "runtime_ms",
        "termination",
        "recon_min",
        "recon_max",
        "success",
        "true_support",
        "recovered_support",
    ]
    with csv_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for t in report.trials:
            row = [
                str(t.seed),
                str(int(t.support_exact)),
                f"{t.relative_l2_error:.12g}",
                f"{t.residual:.12g}",
                str(t.swaps),
                str(t.stage),
                f"{t.runtime_ms:.3f}",
                t.termination,
                f"{t.recon_min:.12g}",
                f"{t.recon_max:.12g}",
                str(int(t.success)),
                ";".join(map(str, t.true_support)),
                ";".join(map(str, t.recovered_support)),
            ]
            fh.write(",".join(row) + "\n")
    return json_path, csv_path


def write_signal_csv(signal: SampledSignal, path) -> None:
    """Two-column CSV: grid value, sample value."""
    points = signal.grid.points()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("grid,value\n")
        for x, y in zip(points, signal.values):
            fh.write(f"{x:.17g},{y:.17g}\n")


def read_signal_csv(path) -> SampledSignal:
    """Parse a two-column (grid, value) CSV; header row optional.

    Raises ValueError with a line number on malformed rows or a non-uniform
    grid.
    """
    grid_vals: list[float] = []
    samples: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 2 columns, got {len(parts)}")
            if lineno == 1:
                try:
                    float(parts[0])
                except ValueError:
                    continue  # header row
            try:
                x, y = float(parts[0]), float(parts[1])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            grid_vals.append(x)
            samples.append(y)
    if len(grid_vals) < 2:
        raise ValueError("signal CSV needs at least 2 samples")
    grid_arr = np.asarray(grid_vals)
    steps = np.diff(grid_arr)
    if steps.min() <= 0 or (steps.max() - steps.min()) > 1e-9 * max(abs(grid_arr[-1]), 1.0):
        raise ValueError("grid column must be uniformly increasing")
    grid = SamplingGrid(float(grid_arr[0]), float(grid_arr[-1]), len(grid_vals))
    return SampledSignal(np.asarray(samples), grid)


# ---------------------------------------------------------------------------
# campaign presets mirrored by the TOML files under presets/

def desk_oscillator_config(seed: int = 416001) -> TrialConfig:
    """Reduced-scale oscillator campaign: 20 of 100 frequencies, 50 of 100 pulses."""
    return TrialConfig(
        experiment="oscillators",
        grid=SamplingGrid(0.0, 1.0, 2001),
        sparsity=20,
        seed=seed,
        single_precision_data=True,
        oscillators=OscillatorSetup(),
        success_error_threshold=1e-4,
        success_requires_support=True,
    )


def paper_oscillator_config(seed: int = 416002) -> TrialConfig:
    """Full-scale oscillator campaign: 100 of 405 frequencies, 200 of 400 pulses."""
    return TrialConfig(
        experiment="oscillators",
        grid=SamplingGrid(0.0, 1.0, 2001),
        sparsity=100,
        seed=seed,
        single_precision_data=True,
        oscillators=OscillatorSetup(
            freq_lo=1,
            freq_hi=405,
            pulse_count=400,
            pulse_spacing=0.0025,
            pulse_sharpness=1e5,
            planted_pulses=200,
            freq_min_gap=1,
        ),
        success_error_threshold=1e-4,
        success_requires_support=True,
    )


def desk_spectrum_config(seed: int = 416003) -> TrialConfig:
    """Reduced-scale spectrum campaign: 12 of 51 splines, 1% noise."""
    return TrialConfig(
        experiment="spectrum",
        grid=SamplingGrid(3.0 / 3000, 3.0, 3000),
        sparsity=12,
        seed=seed,
        noise_percent=1.0,
        noise_mode="stddev",
        delta_eta=0.6,
        spectrum=SpectrumSetup(),
        success_error_threshold=0.03,
        success_requires_support=False,
    )


def paper_spectrum_config(seed: int = 416004) -> TrialConfig:
    """Full-scale spectrum campaign: 70 of 483 splines, 1% noise."""
    return TrialConfig(
        experiment="spectrum",
        grid=SamplingGrid(1.0 / 1000, 3.0, 3000),
        sparsity=70,
        seed=seed,
        noise_percent=1.0,
        noise_mode="stddev",
        delta_eta=0.6,
        spectrum=SpectrumSetup(translate_step_um=3.0 / 480),
        success_error_threshold=0.03,
        success_requires_support=False,
    )
