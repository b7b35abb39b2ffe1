"""Seeded Monte-Carlo sweeps over the movable-antenna schemes, written to CSV.

Subcommands:
  sweep   run every (sweep point, trial, scheme) and write detail + aggregate CSVs
  replay  re-run one scheme on a stored scenario file
  single  run one scheme on one freshly sampled scenario
"""

from __future__ import annotations

import argparse
import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

try:  # pragma: no cover - import resolution depends on packaging context
    from .channel import Scenario, SchemaVersionError, sample_scenario
    from .experiment_config import PROFILES, ConfigError, ExperimentConfig, SweepPoint, flag_name, load_config
    from .geometry import ArrayArchitecture, TwoLayerLayout
    from .optimizer import SCHEMES, TL_MA, SchemeResult, run_scheme
    from .seeding import SeedPath, scenario_generator
except ImportError:  # pragma: no cover - fallback for direct script execution
    from channel import Scenario, SchemaVersionError, sample_scenario
    from experiment_config import PROFILES, ConfigError, ExperimentConfig, SweepPoint, flag_name, load_config
    from geometry import ArrayArchitecture, TwoLayerLayout
    from optimizer import SCHEMES, TL_MA, SchemeResult, run_scheme
    from seeding import SeedPath, scenario_generator

logger = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = 1
SCHEMA_LINE = f"# tlma-results schema_version={RESULTS_SCHEMA_VERSION}"

DETAIL_COLUMNS = [
    "sweep_axis",
    "sweep_value",
    "trial",
    "scheme",
    "seed",
    "num_subarrays",
    "alpha",
    "region_length",
    "sum_rate_bps_hz",
    "C_S_wavelengths",
    "C_A_wavelengths",
    "displacement_baseline",
    "ao_rounds",
    "evaluations",
    "layout",
    "status",
    "message",
]


def scheme_variants(config: ExperimentConfig, point: SweepPoint) -> list[tuple[str, str, ArrayArchitecture]]:
    """(label, scheme id, architecture) for every run at one sweep point.

    TL-MA runs once per alpha of the point and carries the alpha in its label
    when there is more than one; the other schemes use the first alpha's
    architecture, which only fixes M_S, M_A and L for them.
    """
    variants: list[tuple[str, str, ArrayArchitecture]] = []
    for scheme in config.schemes:
        if scheme == TL_MA:
            for alpha in point.alphas:
                label = TL_MA if len(point.alphas) == 1 else f"{TL_MA}(alpha={alpha:g})"
                variants.append((label, scheme, config.architecture(point.num_subarrays, point.region_length, alpha)))
        else:
            arch = config.architecture(point.num_subarrays, point.region_length, point.alphas[0])
            variants.append((scheme, scheme, arch))
    return variants


def trial_scenario(config: ExperimentConfig, trial: int) -> Scenario:
    """Every scheme and sweep point of one trial sees this same scenario."""
    return sample_scenario(
        config.num_users, config.num_paths, 1.0, config.snr_linear, scenario_generator(config.seed, trial)
    )


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.-]+", "_", text).strip("_")


def _point_tag(point: SweepPoint) -> str:
    return _slug(f"{point.axis}-{point.value:g}")


def write_scenario(path: Path, scenario: Scenario, config: ExperimentConfig, point: SweepPoint, trial: int) -> Path:
    record = scenario.to_record()
    record.update(
        {
            "master_seed": config.seed,
            "trial": trial,
            "sweep_point": point._asdict(),
        }
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2), encoding="utf-8")
    return path


def _write_traces(trace_dir: Path, point: SweepPoint, trial: int, label: str, result: SchemeResult) -> None:
    trace_dir.mkdir(parents=True, exist_ok=True)
    for call, run in enumerate(result.swarm_runs):
        name = f"{_point_tag(point)}_trial{trial:04d}_{_slug(label)}_call{call:02d}.csv"
        run.trace_frame().to_csv(trace_dir / name, index=False)


def _result_row(
    point: SweepPoint, trial: int, label: str, seeds: SeedPath, arch: ArrayArchitecture
) -> dict[str, object]:
    return {
        "sweep_axis": point.axis,
        "sweep_value": point.value,
        "trial": trial,
        "scheme": label,
        "seed": f"{seeds.seed:032x}",
        "num_subarrays": arch.num_subarrays,
        "alpha": arch.alpha,
        "region_length": arch.region_length,
    }


def layout_record(result: SchemeResult) -> dict[str, list]:
    """Final positions, plus ``q`` and ``d`` for schemes that return a two-layer layout."""
    record: dict[str, list] = {"positions": np.asarray(result.positions, dtype=float).tolist()}
    if result.layout is not None:
        record.update(result.layout.to_record())
    return record


def read_layout(cell: str) -> tuple[np.ndarray, Optional[TwoLayerLayout]]:
    """Decode a ``layout`` column entry into (positions, two-layer layout or None)."""
    record = json.loads(cell)
    layout = TwoLayerLayout.from_record(record) if "q" in record else None
    return np.asarray(record["positions"], dtype=float), layout


def run_trial(
    config: ExperimentConfig,
    point: SweepPoint,
    trial: int,
    trace_dir: Optional[Path] = None,
    scenario_dir: Optional[Path] = None,
) -> list[dict[str, object]]:
    """All scheme rows for one (sweep point, trial); a failing scheme becomes a ``failed`` row.

    When the scenario itself cannot be drawn or stored, every scheme of the
    trial is recorded as failed.
    """
    variants = scheme_variants(config, point)
    try:
        scenario = trial_scenario(config, trial)
        if scenario_dir is not None:
            write_scenario(
                scenario_dir / f"scenario_{_point_tag(point)}_trial{trial:04d}.json", scenario, config, point, trial
            )
    except Exception as exc:  # noqa: BLE001
        logger.warning("%s trial %d scenario failed: %s", _point_tag(point), trial, exc)
        message = f"{type(exc).__name__}: {exc}"
        return [
            {
                **_result_row(point, trial, label, SeedPath(config.seed, trial, label), arch),
                "status": "failed",
                "message": message,
            }
            for label, _, arch in variants
        ]

    rows: list[dict[str, object]] = []
    ao_config = config.ao_config()
    for label, scheme, arch in variants:
        seeds = SeedPath(config.seed, trial, label)
        row = _result_row(point, trial, label, seeds, arch)
        try:
            result = run_scheme(scheme, scenario, arch, ao_config, seeds)
        except Exception as exc:  # noqa: BLE001
            logger.warning("%s trial %d %s failed: %s", _point_tag(point), trial, label, exc)
            row.update({"status": "failed", "message": f"{type(exc).__name__}: {exc}"})
        else:
            row.update(result.to_row())
            row.update({"scheme": label, "layout": json.dumps(layout_record(result)), "status": "ok", "message": ""})
            if trace_dir is not None:
                _write_traces(trace_dir, point, trial, label, result)
        rows.append(row)
    return rows


def _trial_task(task: tuple) -> tuple[int, int, list[dict[str, object]]]:
    config, point_index, point, trial, trace_dir, scenario_dir = task
    return point_index, trial, run_trial(config, point, trial, trace_dir, scenario_dir)


def aggregate(detail: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error per (sweep point, scheme) over the successful trials."""
    ok = detail[detail["status"] == "ok"].copy()
    for column in ("sum_rate_bps_hz", "C_S_wavelengths", "C_A_wavelengths"):
        ok[column] = ok[column].astype(float)
    ok["total_displacement"] = ok["C_S_wavelengths"] + ok["C_A_wavelengths"]
    grouped = ok.groupby(["sweep_axis", "sweep_value", "scheme"], sort=False)
    frame = grouped.agg(
        trials=("trial", "count"),
        sum_rate_mean=("sum_rate_bps_hz", "mean"),
        sum_rate_sem=("sum_rate_bps_hz", "sem"),
        C_S_mean=("C_S_wavelengths", "mean"),
        C_A_mean=("C_A_wavelengths", "mean"),
        total_displacement_mean=("total_displacement", "mean"),
        total_displacement_sem=("total_displacement", "sem"),
    )
    return frame.reset_index()


def write_results(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        handle.write(SCHEMA_LINE + "\n")
        frame.to_csv(handle, index=False)
    return path


def read_results(path: Path) -> pd.DataFrame:
    with Path(path).open("r", encoding="utf-8") as handle:
        first = handle.readline().strip()
        if first != SCHEMA_LINE:
            raise SchemaVersionError(f"{path}: expected '{SCHEMA_LINE}', found '{first}'")
        return pd.read_csv(handle, keep_default_na=False, na_values=[""])


def aggregate_path(detail_path: Path) -> Path:
    return detail_path.with_name(f"{detail_path.stem}_aggregate{detail_path.suffix or '.csv'}")


def run_sweep(
    config: ExperimentConfig,
    workers: Optional[int] = None,
    trace_dir: Optional[Path] = None,
    scenario_dir: Optional[Path] = None,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Run the sweep, write the detail and aggregate CSVs and return both tables.

    Rows are ordered by (sweep point, trial, scheme) whatever the completion
    order; ``workers=1`` runs in-process.
    """
    points = config.sweep_points()
    tasks = [
        (config, p, point, trial, trace_dir, scenario_dir)
        for p, point in enumerate(points)
        for trial in range(config.num_trials)
    ]
    print(f"🏁 Sweeping {config.sweep_axis} over {len(points)} points x {config.num_trials} trials")

    finished: dict[tuple[int, int], list[dict[str, object]]] = {}
    with tqdm(total=len(tasks), desc="📡 Trials", unit="trial") as pbar:
        if workers == 1:
            for task in tasks:
                p, trial, rows = _trial_task(task)
                finished[(p, trial)] = rows
                pbar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                futures = [executor.submit(_trial_task, task) for task in tasks]
                for future in as_completed(futures):
                    p, trial, rows = future.result()
                    finished[(p, trial)] = rows
                    pbar.update(1)

    rows = [row for key in sorted(finished) for row in finished[key]]
    detail = pd.DataFrame(rows, columns=DETAIL_COLUMNS)
    failed = int((detail["status"] == "failed").sum())
    if failed:
        print(f"⚠️  {failed} scheme runs failed; see the message column")

    summary = aggregate(detail)
    write_results(detail, config.out)
    print(f"📝 Detail results saved to {config.out}")
    write_results(summary, aggregate_path(config.out))
    print(f"📝 Aggregate results saved to {aggregate_path(config.out)}")
    print("✅ Sweep complete!")
    return detail, summary


def _pick_variant(
    config: ExperimentConfig, point: SweepPoint, scheme: str
) -> tuple[str, str, ArrayArchitecture]:
    variants = scheme_variants(config, point)
    for variant in variants:
        if variant[0] == scheme:
            return variant
    matches = [variant for variant in variants if variant[1] == scheme]
    if not matches:
        raise ConfigError(f"scheme '{scheme}' is not configured; available: {[v[0] for v in variants]}", "--scheme")
    return matches[0]


def replay(scenario_path: Path, scheme: str, config: ExperimentConfig) -> SchemeResult:
    """Re-run one scheme on a stored scenario with the seed path of the original trial."""
    record = json.loads(Path(scenario_path).read_text(encoding="utf-8"))
    scenario = Scenario.from_record(record)
    if (scenario.num_users, scenario.num_paths) != (config.num_users, config.num_paths):
        raise SchemaVersionError(
            f"scenario has K={scenario.num_users}, N_PA={scenario.num_paths}; "
            f"config expects K={config.num_users}, N_PA={config.num_paths}"
        )
    stored = record.get("sweep_point")
    if stored is None:
        point = config.sweep_points()[0]
    else:
        point = SweepPoint(**{**stored, "alphas": tuple(stored["alphas"])})
    label, scheme_id, arch = _pick_variant(config, point, scheme)
    seeds = SeedPath(record.get("master_seed", config.seed), record.get("trial", 0), label)
    return run_scheme(scheme_id, scenario, arch, config.ao_config(), seeds)


def run_single(config: ExperimentConfig, scheme: str, trial: int = 0) -> SchemeResult:
    point = config.sweep_points()[0]
    label, scheme_id, arch = _pick_variant(config, point, scheme)
    return run_scheme(scheme_id, trial_scenario(config, trial), arch, config.ao_config(), SeedPath(config.seed, trial, label))


def _positive_int(value: str) -> Optional[int]:
    if value.lower() == "auto":
        return None
    ivalue = int(value)
    if ivalue <= 0:
        raise argparse.ArgumentTypeError("Value must be a positive integer or 'auto'.")
    return ivalue


_SETTING_HELP = {
    "snr_db": "Transmit SNR times average path power, in dB.",
    "num_antennas": "Total number of antennas M.",
    "num_users": "Number of single-antenna users K.",
    "num_paths": "Propagation paths per user N_PA.",
    "num_subarrays": "Comma-separated subarray counts M_S.",
    "alpha": "Comma-separated subarray length ratios (fractions like 3/8 allowed).",
    "region_length": "Comma-separated movable-region lengths L in wavelengths.",
    "num_particles": "Particles in the subarray-position swarm.",
    "num_iterations": "Iterations of the subarray-position swarm.",
    "antenna_particles": "Particles in the antenna-offset swarm.",
    "antenna_iterations": "Iterations of the antenna-offset swarm.",
    "penalty_coefficient": "Penalty weight kappa on constraint violations.",
    "ao_max_rounds": "Maximum alternating-optimization rounds.",
    "ao_epsilon": "Stop AO when a round gains less than this (bps/Hz).",
    "all_at_once_particles": "Particles for the all-at-once swarm (auto = both AO swarms combined).",
    "all_at_once_iterations": "Iterations for the all-at-once swarm (auto = subarray iterations).",
    "num_trials": "Monte-Carlo trials per sweep point.",
    "seed": "Master seed for every random stream.",
    "schemes": f"Comma-separated schemes from {', '.join(SCHEMES)}.",
    "sweep_axis": "Parameter swept: num_subarrays, region_length or alpha.",
    "out": "Detail CSV path; the aggregate CSV is written next to it.",
}


def _common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--profile", choices=sorted(PROFILES), default="table1", help="Base parameter profile.")
    parser.add_argument("--config", type=Path, default=None, help="Key-value config file applied over the profile.")
    parser.add_argument(
        "--workers",
        type=_positive_int,
        default=None,
        help="Parallel trial workers (auto = CPU count, 1 = in-process).",
    )
    parser.add_argument("--trace-dir", type=Path, default=None, help="Write per-swarm convergence traces here.")
    parser.add_argument("--scenario-dir", type=Path, default=None, help="Write per-trial scenario JSON files here.")
    parser.add_argument(
        "--log-level",
        choices=["debug", "info", "warning", "error"],
        default="warning",
        help="Logging level for library messages.",
    )
    settings = parser.add_argument_group("settings (override profile and config file)")
    for key in ExperimentConfig.__dataclass_fields__:
        if key == "carrier_frequency_ghz":
            continue
        settings.add_argument(flag_name(key), dest=key, default=None, help=_SETTING_HELP.get(key, f"Override {key}."))
    return parser


def parse_args(argv: Optional[Iterable[str]] = None) -> argparse.Namespace:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        description="Simulate and optimize two-layer movable-antenna uplink arrays.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser(
        "sweep", parents=[common], help="Run the Monte-Carlo sweep.", formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    replay_parser = commands.add_parser(
        "replay", parents=[common], help="Re-run one scheme on a stored scenario.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    replay_parser.add_argument("scenario_file", type=Path, help="Scenario JSON written by --scenario-dir.")
    replay_parser.add_argument("--scheme", required=True, help="Scheme label, e.g. tl-ma or sl-ma.")
    single_parser = commands.add_parser(
        "single", parents=[common], help="Run one scheme on one sampled scenario.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    single_parser.add_argument("--scheme", required=True, help="Scheme label, e.g. tl-ma or sl-ma.")
    single_parser.add_argument("--trial", type=int, default=0, help="Trial index selecting the scenario.")
    return parser.parse_args(argv)


def _report(result: SchemeResult) -> None:
    print(f"✅ {result.scheme}: sum-rate {result.sum_rate:.4f} bps/Hz after {result.rounds} rounds")
    print(f"   C_S = {result.subarray_displacement:.4f} λ, C_A = {result.antenna_displacement:.4f} λ")
    print(f"   positions: {', '.join(f'{x:.3f}' for x in result.positions)}")


def main(argv: Optional[Iterable[str]] = None):
    args = parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    overrides = {key: getattr(args, key) for key in ExperimentConfig.__dataclass_fields__ if hasattr(args, key)}
    config = load_config(args.config, overrides, profile=args.profile)

    if args.command == "sweep":
        return run_sweep(config, workers=args.workers, trace_dir=args.trace_dir, scenario_dir=args.scenario_dir)
    if args.command == "replay":
        result = replay(args.scenario_file, args.scheme, config)
    else:
        result = run_single(config, args.scheme, args.trial)
    _report(result)
    return result


if __name__ == "__main__":
    main()
