"""Command-line front end: decomposition, campaigns, conditioning, export.

Configs are TOML files with [experiment], [pursuit], [noise], and [output]
tables; command-line flags override file values. Unknown keys are rejected.
Reports echo the effective config so runs are reproducible from the output
alone.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .core import SamplingGrid
from .dictionaries import AtomSpec, dictionary_to_csv
from .pursuit import TerminationReason
from .simulate import (
    OscillatorSetup,
    SpectrumSetup,
    TrialConfig,
    campaign_digest,
    conditioning_comparison,
    config_hash,
    desk_oscillator_config,
    desk_spectrum_config,
    experiment_dictionaries,
    pursuit_params_for,
    read_signal_csv,
    run_campaign,
    save_campaign,
    write_signal_csv,
)
from .pursuit import run_pursuit

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RANK_BUDGET = 2
EXIT_CONSTRAINT = 3

_EXPERIMENT_KEYS = {
    "kind",
    "grid_start",
    "grid_stop",
    "grid_count",
    "sparsity",
    "seed",
    "single_precision",
}
_OSCILLATOR_KEYS = {
    "freq_lo",
    "freq_hi",
    "pulse_count",
    "pulse_spacing",
    "pulse_sharpness",
    "planted_pulses",
    "coeff_lo",
    "coeff_hi",
    "pulse_amp_lo",
    "pulse_amp_hi",
    "freq_min_gap",
}
_SPECTRUM_KEYS = {
    "length_um",
    "knot_spacing_um",
    "translate_step_um",
    "temperatures_k",
    "background_normalize",
    "coeff_lo",
    "coeff_hi",
}
_PURSUIT_KEYS = {
    "delta",
    "delta_eta",
    "max_rank",
    "accept_tol",
    "max_swap_stage",
    "nonneg",
    "pinv_rel_tol",
}
_NOISE_KEYS = {"percent", "mode"}
_OUTPUT_KEYS = {"dir", "trials", "success_threshold", "success_requires_support", "success_rate"}


class ConfigError(ValueError):
    """Bad config file or flag combination."""


def _check_keys(table: dict, allowed: set, name: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")


def load_config_file(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from None
    _check_keys(data, {"experiment", "pursuit", "noise", "output"}, "top level")
    exp = data.get("experiment", {})
    kind = exp.get("kind", "oscillators")
    family_keys = _OSCILLATOR_KEYS if kind == "oscillators" else _SPECTRUM_KEYS
    _check_keys(exp, _EXPERIMENT_KEYS | family_keys, "experiment")
    _check_keys(data.get("pursuit", {}), _PURSUIT_KEYS, "pursuit")
    _check_keys(data.get("noise", {}), _NOISE_KEYS, "noise")
    _check_keys(data.get("output", {}), _OUTPUT_KEYS, "output")
    return data


def trial_config_from_file(data: dict, default_kind: str | None = None) -> TrialConfig:
    """Build a TrialConfig from parsed TOML, starting from the desk presets."""
    exp = dict(data.get("experiment", {}))
    kind = exp.pop("kind", default_kind or "oscillators")
    if kind == "oscillators":
        cfg = desk_oscillator_config()
    elif kind == "spectrum":
        cfg = desk_spectrum_config()
    else:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    grid = cfg.grid
    if {"grid_start", "grid_stop", "grid_count"} & set(exp):
        grid = SamplingGrid(
            float(exp.pop("grid_start", grid.start)),
            float(exp.pop("grid_stop", grid.stop)),
            int(exp.pop("grid_count", grid.count)),
        )
    top = {}
    for key, conv in (("sparsity", int), ("seed", int), ("single_precision", bool)):
        if key in exp:
            top["single_precision_data" if key == "single_precision" else key] = conv(exp.pop(key))
    if kind == "oscillators":
        setup = replace(cfg.oscillators, **{k: type(getattr(cfg.oscillators, k))(v) for k, v in exp.items()})
        cfg = replace(cfg, grid=grid, oscillators=setup, **top)
    else:
        if "temperatures_k" in exp:
            exp["temperatures_k"] = tuple(float(t) for t in exp["temperatures_k"])
        setup = replace(cfg.spectrum, **exp)
        cfg = replace(cfg, grid=grid, spectrum=setup, **top)
    pur = data.get("pursuit", {})
    updates = {}
    if "delta" in pur:
        updates["delta"] = float(pur["delta"])
    if "delta_eta" in pur:
        updates["delta_eta"] = float(pur["delta_eta"])
    if "max_rank" in pur:
        updates["max_rank"] = int(pur["max_rank"])
    if "accept_tol" in pur:
        updates["accept_tol"] = float(pur["accept_tol"])
    if "max_swap_stage" in pur:
        updates["max_swap_stage"] = int(pur["max_swap_stage"])
    if "nonneg" in pur:
        updates["nonneg"] = bool(pur["nonneg"])
    if "pinv_rel_tol" in pur:
        updates["pinv_rel_tol"] = float(pur["pinv_rel_tol"])
    noise = data.get("noise", {})
    if "percent" in noise:
        updates["noise_percent"] = float(noise["percent"])
    if "mode" in noise:
        updates["noise_mode"] = str(noise["mode"])
    out = data.get("output", {})
    if "success_threshold" in out:
        updates["success_error_threshold"] = float(out["success_threshold"])
    if "success_requires_support" in out:
        updates["success_requires_support"] = bool(out["success_requires_support"])
    return replace(cfg, **updates)


def apply_flag_overrides(cfg: TrialConfig, args: argparse.Namespace) -> TrialConfig:
    """Flag values beat config-file values."""
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.noise is not None:
        updates["noise_percent"] = args.noise
    if args.noise_mode is not None:
        updates["noise_mode"] = args.noise_mode
    if args.delta is not None:
        updates["delta"] = args.delta
    if args.max_rank is not None:
        updates["max_rank"] = args.max_rank
    if args.sparsity is not None:
        updates["sparsity"] = args.sparsity
    if args.swap_stages is not None:
        updates["max_swap_stage"] = args.swap_stages
    if args.nonneg:
        updates["nonneg"] = True
    if args.single_precision:
        updates["single_precision_data"] = True
    return replace(cfg, **updates) if updates else cfg


def _resolve_config(args: argparse.Namespace, default_kind: str) -> tuple[TrialConfig, dict]:
    data = load_config_file(Path(args.config)) if args.config else {}
    cfg = trial_config_from_file(data, default_kind)
    cfg = apply_flag_overrides(cfg, args)
    return cfg, data.get("output", {})


def _effective_config_dict(cfg: TrialConfig) -> dict:
    payload = asdict(cfg)
    payload["config_hash"] = config_hash(cfg)
    return payload


def cmd_decompose(args: argparse.Namespace) -> int:
    try:
        cfg, _ = _resolve_config(args, default_kind="oscillators")
        signal = read_signal_csv(args.signal)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cfg = replace(cfg, grid=signal.grid)
    v_dict, wperp_dict = experiment_dictionaries(cfg)
    params = pursuit_params_for(cfg, signal)
    result = run_pursuit(v_dict, wperp_dict, signal, params)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_signal_csv(result.component_v, out_dir / "component_v.csv")
    write_signal_csv(result.component_wperp, out_dir / "component_wperp.csv")
    labels = [
        label.token() if isinstance(label, AtomSpec) else str(label)
        for label in (v_dict.labels[i] for i in result.selected)
    ]
    report = {
        "selected_indices": list(result.selected),
        "selected_labels": labels,
        "coefficients": [float(c) for c in result.coeffs],
        "final_residual": result.final_residual,
        "iterations": result.iterations,
        "swaps_performed": result.swaps_performed,
        "stage_reached": result.stage_reached,
        "termination": result.termination.value,
        "coeff_drift": result.coeff_drift,
        "effective_config": _effective_config_dict(cfg),
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, default=str) + "\n")
    print(
        f"selected {len(result.selected)} atoms, residual {result.final_residual:.6e}, "
        f"termination {result.termination.value}"
    )
    if result.termination == TerminationReason.RANK_BUDGET_EXHAUSTED:
        return EXIT_RANK_BUDGET
    if result.termination == TerminationReason.CONSTRAINT_BLOCKED:
        return EXIT_CONSTRAINT
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, kind: str) -> int:
    try:
        cfg, output_table = _resolve_config(args, default_kind=kind)
        if cfg.experiment != kind:
            raise ConfigError(
                f"config is for {cfg.experiment!r} but the subcommand expects {kind!r}"
            )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    n_trials = args.trials if args.trials is not None else int(output_table.get("trials", 20))
    report = run_campaign(cfg, n_trials)
    for t in report.trials:
        print(
            f"trial seed={t.seed} support_exact={int(t.support_exact)} "
            f"err={t.relative_l2_error:.6e} residual={t.residual:.6e} "
            f"swaps={t.swaps} termination={t.termination} success={int(t.success)}"
        )
    print(f"success rate {report.success_rate:.3f} ({report.success_count}/{report.n_trials})")
    print(f"digest {campaign_digest(report)}")
    out_dir = args.out_dir or output_table.get("dir")
    if out_dir:
        json_path, csv_path = save_campaign(report, cfg, out_dir)
        print(f"wrote {json_path} and {csv_path}")
    threshold = args.success_rate
    if threshold is None:
        threshold = float(output_table.get("success_rate", 0.9))
    return EXIT_OK if report.success_rate >= threshold else EXIT_RANK_BUDGET


def cmd_conditioning(args: argparse.Namespace) -> int:
    try:
        cfg, _ = _resolve_config(args, default_kind="oscillators")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    comparison = conditioning_comparison(cfg)
    payload = {
        "batch_error": comparison.batch_error,
        "pursuit_error": comparison.pursuit_error,
        "condition_number": comparison.condition_number,
        "numeric_rank": comparison.numeric_rank,
        "seed": comparison.seed,
        "effective_config": _effective_config_dict(cfg),
    }
    print(
        f"batch_error {comparison.batch_error:.6e}  pursuit_error {comparison.pursuit_error:.6e}  "
        f"condition_number {comparison.condition_number:.6e}  rank {comparison.numeric_rank}"
    )
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "conditioning.json").write_text(json.dumps(payload, indent=2, default=str) + "\n")
    return EXIT_OK


def cmd_export_dictionary(args: argparse.Namespace) -> int:
    try:
        cfg, _ = _resolve_config(args, default_kind="oscillators")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    v_dict, wperp_dict = experiment_dictionaries(cfg)
    chosen = v_dict if args.which == "atoms" else wperp_dict
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dictionary_to_csv(chosen, out)
    print(f"wrote {len(chosen)} atoms to {out}")
    return EXIT_OK


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--seed", type=int, help="campaign base seed")
    parser.add_argument("--noise", type=float, help="noise percent p")
    parser.add_argument("--noise-mode", choices=("stddev", "variance"), dest="noise_mode")
    parser.add_argument("--delta", type=float, help="residual stopping level")
    parser.add_argument("--max-rank", type=int, dest="max_rank", help="selection budget r")
    parser.add_argument("--sparsity", type=int, help="planted sparsity K")
    parser.add_argument("--swap-stages", type=int, dest="swap_stages", help="max swap stage")
    parser.add_argument("--nonneg", action="store_true", help="non-negative reconstruction")
    parser.add_argument(
        "--single-precision",
        action="store_true",
        dest="single_precision",
        help="round data to 32-bit before processing",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigsplit",
        description="Separate signals into sparse component and nuisance subspaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="decompose a CSV signal from a config's dictionaries")
    p.add_argument("--signal", required=True, help="two-column (grid, value) CSV")
    p.add_argument("--out-dir", default="out", dest="out_dir")
    _add_common_flags(p)

    for kind in ("oscillators", "spectrum"):
        p = sub.add_parser(f"simulate-{kind}", help=f"run the {kind} campaign")
        p.add_argument("--trials", type=int)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument(
            "--success-rate",
            type=float,
            dest="success_rate",
            help="exit 0 iff campaign success rate reaches this value",
        )
        _add_common_flags(p)

    p = sub.add_parser("conditioning", help="full-dictionary batch projection vs pursuit")
    p.add_argument("--out-dir", dest="out_dir")
    _add_common_flags(p)

    p = sub.add_parser("export-dictionary", help="write a generated dictionary to CSV")
    p.add_argument("--which", choices=("atoms", "wperp"), default="atoms")
    p.add_argument("--out", required=True)
    _add_common_flags(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "decompose":
        return cmd_decompose(args)
    if args.command == "simulate-oscillators":
        return cmd_simulate(args, "oscillators")
    if args.command == "simulate-spectrum":
        return cmd_simulate(args, "spectrum")
    if args.command == "conditioning":
        return cmd_conditioning(args)
    if args.command == "export-dictionary":
        return cmd_export_dictionary(args)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
