"""Command line front end: run manifests, built-in presets, config checks.

Verbs:
  run <manifest.json>       run every scenario x seed in a manifest
  preset <name>             run one built-in preset
  validate <config.json>    check a scenario config and report derived values

Exit codes: 0 success, 1 validation failure, 2 runtime failure. The default
output directory comes from --out, then the manifest, then $CHAINMESH_OUT,
then ./chainmesh-runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .config import (ConfigError, ScenarioConfig, config_from_mapping,
                     load_config, replace)
from .engine import run_scenario
from .presets import DEFAULT_SEEDS, build_preset, preset_names

ENV_OUT = "CHAINMESH_OUT"
DEFAULT_OUT = "chainmesh-runs"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


@dataclass(frozen=True)
class ManifestScenario:
    label: str
    seeds: tuple[int, ...]
    config: ScenarioConfig | None
    error: str | None = None        # validation failure captured at load time


@dataclass(frozen=True)
class RunManifest:
    scenarios: tuple[ManifestScenario, ...]
    out_dir: str | None = None


def load_manifest(path: str | Path) -> RunManifest:
    """Parse and validate a batch manifest document."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigError("manifest must be a JSON object")
    unknown = set(raw) - {"scenarios", "out_dir"}
    if unknown:
        raise ConfigError(f"unknown manifest fields: {sorted(unknown)}")
    entries = raw.get("scenarios")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("manifest needs a non-empty 'scenarios' list")
    scenarios = []
    labels: set[str] = set()
    for i, entry in enumerate(entries):
        if not isinstance(entry, Mapping):
            raise ConfigError(f"scenario #{i} must be an object")
        bad = set(entry) - {"label", "seeds", "config"}
        if bad:
            raise ConfigError(f"scenario #{i}: unknown fields {sorted(bad)}")
        label = entry.get("label")
        if not isinstance(label, str) or not label or "/" in label \
                or label.startswith("."):
            raise ConfigError(f"scenario #{i} needs a plain 'label' string")
        if label in labels:
            raise ConfigError(f"duplicate scenario label {label!r}")
        labels.add(label)
        # a scenario that fails validation is carried as a failure record so
        # the rest of the batch still runs
        try:
            cfg = config_from_mapping(entry.get("config", {}))
            seeds = entry.get("seeds", [cfg.seed])
            if (not isinstance(seeds, list) or not seeds
                    or any(not isinstance(s, int) or isinstance(s, bool)
                           for s in seeds)
                    or len(set(seeds)) != len(seeds)):
                raise ConfigError(f"scenario {label!r}: 'seeds' must be a "
                                  "non-empty list of distinct integers")
        except ConfigError as exc:
            scenarios.append(ManifestScenario(label=label, seeds=(),
                                              config=None, error=str(exc)))
            continue
        scenarios.append(ManifestScenario(label=label, seeds=tuple(seeds),
                                          config=cfg))
    out_dir = raw.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("'out_dir' must be a string path")
    return RunManifest(scenarios=tuple(scenarios), out_dir=out_dir)


def resolve_out_dir(flag_value: str | None,
                    manifest_value: str | None = None) -> Path:
    if flag_value:
        return Path(flag_value)
    if manifest_value:
        return Path(manifest_value)
    env = os.environ.get(ENV_OUT)
    if env:
        return Path(env)
    return Path(DEFAULT_OUT)


def _ensure_writable(out: Path) -> None:
    """Fail before any run if the output directory cannot be written."""
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    probe.write_text("")
    probe.unlink()


def _aggregate(reports: Sequence[Mapping]) -> dict:
    """Per-metric mean over a scenario's seed runs."""
    skip = {"scenario", "seed"}
    numeric: dict[str, list[float]] = {}
    bools: dict[str, list[bool]] = {}
    nested: dict[str, list[Mapping]] = {}
    for rep in reports:
        for key, value in rep.items():
            if key in skip or value is None:
                continue
            if isinstance(value, bool):
                bools.setdefault(key, []).append(value)
            elif isinstance(value, (int, float)):
                numeric.setdefault(key, []).append(float(value))
            elif isinstance(value, Mapping):
                nested.setdefault(key, []).append(value)
    out: dict = {}
    for key, values in numeric.items():
        out[key] = sum(values) / len(values)
    for key, values in bools.items():
        out[key] = all(values)
    for key, maps in nested.items():
        out[key] = _aggregate(maps)
    return out


def run_batch(scenarios: Sequence[ManifestScenario], out: Path,
              quiet: bool = False) -> int:
    """Run every (scenario, seed), write artifacts and aggregates.

    Scenario failures are isolated: the batch continues and the exit code
    reports the worst failure seen.
    """
    try:
        _ensure_writable(out)
    except OSError as exc:
        print(f"error: output directory {out} is not writable: {exc}",
              file=sys.stderr)
        return EXIT_RUNTIME
    worst = EXIT_OK
    summary: dict[str, dict] = {}
    for scen in scenarios:
        reports = []
        error: str | None = None
        if scen.error is not None:
            worst = max(worst, EXIT_VALIDATION)
            print(f"error: {scen.label}: validation: {scen.error}",
                  file=sys.stderr)
            summary[scen.label] = {"runs": 0, "status": "failed",
                                   "error": f"validation: {scen.error}"}
            continue
        for seed in scen.seeds:
            try:
                cfg = replace(scen.config, seed=seed)
                result = run_scenario(cfg, scen.label,
                                      out / scen.label / f"seed-{seed:03d}")
            except ConfigError as exc:
                error = f"validation: {exc}"
                worst = max(worst, EXIT_VALIDATION)
                print(f"error: {scen.label} seed={seed}: {error}",
                      file=sys.stderr)
                break
            except Exception as exc:            # isolate, keep the batch going
                error = f"runtime: {exc}"
                worst = max(worst, EXIT_RUNTIME)
                print(f"error: {scen.label} seed={seed}: {error}",
                      file=sys.stderr)
                break
            rep = result.report.to_mapping()
            reports.append(rep)
            if not quiet:
                gini = rep["confirmation_gini"]
                print(f"{scen.label} seed={seed}: "
                      f"intra={rep['intra_blocks_per_min']:.1f}/min "
                      f"inter={rep['inter_blocks_per_min']:.1f}/min "
                      f"finality={rep['mean_finality_s'] or 0:.1f}s "
                      f"pool={rep['final_tip_pool']} "
                      f"gini={'n/a' if gini is None else format(gini, '.3f')} "
                      f"conserved={rep['conservation_ok']}")
        if reports:
            agg = {"label": scen.label,
                   "seeds": list(scen.seeds[:len(reports)]),
                   "runs": len(reports),
                   "mean": _aggregate(reports)}
            (out / scen.label).mkdir(parents=True, exist_ok=True)
            (out / scen.label / "aggregate.json").write_text(
                json.dumps(agg, indent=2, sort_keys=True) + "\n")
        summary[scen.label] = {
            "runs": len(reports),
            "status": "ok" if error is None else "failed",
            "error": error,
        }
    (out / "summary.json").write_text(
        json.dumps({"scenarios": summary}, indent=2, sort_keys=True) + "\n")
    return worst


# -- verbs ------------------------------------------------------------------

def cmd_run(args: argparse.Namespace) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = resolve_out_dir(args.out, manifest.out_dir)
    return run_batch(manifest.scenarios, out, quiet=args.quiet)


def cmd_preset(args: argparse.Namespace) -> int:
    try:
        seeds = tuple(args.seeds) if args.seeds else DEFAULT_SEEDS
        runs = build_preset(args.name, paper_scale=args.paper_scale,
                            seeds=seeds)
    except (KeyError, ConfigError) as exc:
        message = exc.args[0] if exc.args else str(exc)
        print(f"error: {message}", file=sys.stderr)
        return EXIT_VALIDATION
    by_label: dict[str, list[int]] = {}
    configs: dict[str, ScenarioConfig] = {}
    for run in runs:
        by_label.setdefault(run.label, []).append(run.config.seed)
        configs[run.label] = run.config
    scenarios = [ManifestScenario(label=label, seeds=tuple(seeds),
                                  config=configs[label])
                 for label, seeds in by_label.items()]
    out = resolve_out_dir(args.out) / args.name
    return run_batch(scenarios, out, quiet=args.quiet)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"ok: {args.config}")
    print(f"  chains={cfg.chains} fleet={cfg.fleet_size} "
          f"accounts={cfg.accounts} tip_sample={cfg.tip_sample}")
    print(f"  committee_size={cfg.committee_size()} "
          f"critical_spam={cfg.orphanage_critical_spam():.3f} "
          f"adversarial={list(cfg.adversarial_chains())}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainmesh",
        description="Deterministic multi-chain ledger simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every scenario in a manifest")
    p_run.add_argument("manifest", help="path to a batch manifest JSON file")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--quiet", action="store_true",
                       help="suppress per-run progress lines")
    p_run.set_defaults(func=cmd_run)

    p_preset = sub.add_parser("preset", help="run a built-in preset")
    p_preset.add_argument("name",
                          help="preset name: " + ", ".join(preset_names()))
    p_preset.add_argument("--out", help="output directory")
    p_preset.add_argument("--paper-scale", action="store_true",
                          help="full fleet and account sizes instead of "
                               "desk scale")
    p_preset.add_argument("--seeds", type=int, nargs="+",
                          help="override the default seed list")
    p_preset.add_argument("--quiet", action="store_true",
                          help="suppress per-run progress lines")
    p_preset.set_defaults(func=cmd_preset)

    p_val = sub.add_parser("validate", help="check a scenario config file")
    p_val.add_argument("config", help="path to a scenario config JSON file")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
