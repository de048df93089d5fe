"""Batch command line: search, simulate, evaluate and export artifacts.

Every command reads its settings from flags, optionally layered over a JSON
config file, writes its outputs under one directory, and drops a manifest
recording the effective configuration, the seed and the library versions.
With a fixed manifest the outputs are reproducible byte for byte, whatever
the parallelism degree.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .errors import InvalidPrior, SearchFailed, ShapeMismatch, StableSearchError
from .export import (
    annotated_dot,
    dataset_csv,
    effects_csv,
    graph_from_dict,
    graph_to_dict,
    prior_from_dict,
    read_json,
    roc_csv,
    stability_csv,
    stability_svg,
    write_json,
)
from .longitudinal import (
    LongitudinalDataset,
    intra_slice_mask,
    layout_from_dict,
    layout_to_dict,
    run_longitudinal,
)
from .pipeline import PipelineResult, run_pipeline
from .scoring import DISCRETE, load_dataset, rank_normalize
from .search import SearchParams
from .seeding import PARAMETERIZE_LANE, derived_rng
from .simulate import (
    default_structure,
    evaluate_recovery,
    random_parameterization,
    simulate_datasets,
    truth_from_dict,
    truth_to_dict,
)

log = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SEARCH = 4


@dataclass
class RunConfig:
    data: str | None = None
    layout: str | None = None
    prior: str | None = None
    out: str = "run"
    subsets: int | None = None
    generations: int = 35
    population: int = 150
    crossover: float = 0.85
    mutation: float = 0.07
    pi_sel: float = 0.6
    seed: int = 0
    parallelism: int = 1
    discrete: tuple = ()
    subsample_unit: str = "subject"
    prev_only: tuple = ()
    cur_only: tuple = ()
    datasets: int = 10
    samples: int = 400
    slices: int = 3
    truth: str | None = None


class ConfigError(Exception):
    pass


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    values = {f.name: f.default for f in fields(RunConfig)}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        loaded = read_json(path)
        for key, val in loaded.items():
            if key not in values:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = tuple(val) if isinstance(val, list) else val
    for key in values:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = tuple(flag) if isinstance(flag, list) else flag
    cfg = RunConfig(**values)
    if cfg.subsets is not None and cfg.subsets < 2:
        raise ConfigError("subsets must be at least 2")
    if cfg.parallelism < 1:
        raise ConfigError("parallelism must be at least 1")
    for attr in ("data", "layout", "prior", "truth"):
        value = getattr(cfg, attr)
        if value is not None and not Path(value).exists():
            raise ConfigError(f"{attr} path not found: {value}")
    return cfg


def search_params(cfg: RunConfig) -> SearchParams:
    return SearchParams(
        generations=cfg.generations,
        population_size=cfg.population,
        p_crossover=cfg.crossover,
        p_mutation=cfg.mutation,
        seed=cfg.seed,
    )


def load_prior(cfg: RunConfig) -> list[tuple[str, str]]:
    if cfg.prior is None:
        return []
    return prior_from_dict(read_json(cfg.prior))


def manifest_dict(command: str, cfg: RunConfig, extra: dict) -> dict:
    versions = {"stablesearch": __version__, "python": sys.version.split()[0]}
    import numpy
    import scipy

    versions["numpy"] = numpy.__version__
    versions["scipy"] = scipy.__version__
    return {
        "command": command,
        "config": asdict(cfg),
        "versions": versions,
        **extra,
    }


def write_pipeline_artifacts(out: Path, result: PipelineResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "edge_stability.csv").write_text(stability_csv(result.edge_sg))
    (out / "causal_stability.csv").write_text(stability_csv(result.path_sg))
    pi_sel, pi_bic = result.thresholds.pi_sel, result.pi_bic
    (out / "edge_stability.svg").write_text(
        stability_svg(result.edge_sg, pi_sel, pi_bic)
    )
    (out / "causal_stability.svg").write_text(
        stability_svg(result.path_sg, pi_sel, pi_bic)
    )
    (out / "effects.csv").write_text(effects_csv(result.estimates, result.labels))
    write_json(out / "graph.json", graph_to_dict(result.graph))
    (out / "graph.dot").write_text(annotated_dot(result.graph))


def cmd_search(cfg: RunConfig) -> int:
    if cfg.data is None:
        raise ConfigError("search needs --data")
    kinds = {name: DISCRETE for name in cfg.discrete}
    data = rank_normalize(load_dataset(cfg.data, kinds))
    prior = load_prior(cfg)
    mask = intra_slice_mask(data.names, prior)
    result = run_pipeline(
        data,
        mask,
        search_params(cfg),
        n_subsets=cfg.subsets if cfg.subsets is not None else 50,
        pi_sel=cfg.pi_sel,
        parallelism=cfg.parallelism,
    )
    out = Path(cfg.out)
    write_pipeline_artifacts(out, result)
    write_json(
        out / "manifest.json",
        manifest_dict("search", cfg, {"pi_bic": result.pi_bic}),
    )
    log.info("search finished, pi_bic=%d, outputs in %s", result.pi_bic, out)
    return 0


def cmd_search_longitudinal(cfg: RunConfig) -> int:
    if cfg.data is None or cfg.layout is None:
        raise ConfigError("search-longitudinal needs --data and --layout")
    kinds = {name: DISCRETE for name in cfg.discrete}
    wide = rank_normalize(load_dataset(cfg.data, kinds))
    layout = layout_from_dict(read_json(cfg.layout))
    data = LongitudinalDataset(wide, layout)
    prior = load_prior(cfg)
    baseline, transition = run_longitudinal(
        data,
        search_params(cfg),
        prior,
        pi_sel=cfg.pi_sel,
        n_subsets=cfg.subsets if cfg.subsets is not None else 100,
        parallelism=cfg.parallelism,
        subsample_unit=cfg.subsample_unit,
        prev_only=cfg.prev_only,
        cur_only=cfg.cur_only,
    )
    out = Path(cfg.out)
    write_pipeline_artifacts(out / "baseline", baseline)
    write_pipeline_artifacts(out / "transition", transition)
    out.mkdir(parents=True, exist_ok=True)
    write_json(
        out / "manifest.json",
        manifest_dict(
            "search-longitudinal",
            cfg,
            {
                "pi_bic": {
                    "baseline": baseline.pi_bic,
                    "transition": transition.pi_bic,
                }
            },
        ),
    )
    log.info("longitudinal search finished, outputs in %s", out)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.truth is not None:
        model = truth_from_dict(read_json(cfg.truth))
    else:
        structure = default_structure(cfg.slices)
        model = random_parameterization(
            structure, derived_rng(cfg.seed, PARAMETERIZE_LANE, 0)
        )
    datasets = simulate_datasets(model, cfg.datasets, cfg.samples, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for d, ld in enumerate(datasets):
        (out / f"data_{d:02d}.csv").write_text(
            dataset_csv(ld.data.names, ld.data.values)
        )
    write_json(out / "layout.json", layout_to_dict(datasets[0].layout))
    write_json(out / "truth.json", truth_to_dict(model))
    write_json(out / "manifest.json", manifest_dict("simulate", cfg, {}))
    log.info("wrote %d datasets to %s", len(datasets), out)
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg.data is None:
        raise ConfigError("evaluate needs --data (a simulate output directory)")
    src = Path(cfg.data)
    if not src.is_dir():
        raise ConfigError(f"not a directory: {src}")
    truth_path = Path(cfg.truth) if cfg.truth else src / "truth.json"
    if not truth_path.is_file():
        raise ConfigError(f"missing ground truth: {truth_path}")
    model = truth_from_dict(read_json(truth_path))
    layout = layout_from_dict(read_json(src / "layout.json"))
    if (
        tuple(layout.variables) != model.variables
        or layout.slices != model.n_slices
    ):
        raise ShapeMismatch(
            f"layout ({len(layout.variables)} variables, {layout.slices} "
            f"slices) does not match the ground truth ({model.p} variables, "
            f"{model.n_slices} slices)"
        )
    files = sorted(src.glob("data_*.csv"))
    if not files:
        raise ConfigError(f"no data_*.csv files in {src}")
    datasets = [
        LongitudinalDataset(load_dataset(str(f)), layout) for f in files
    ]
    prior = load_prior(cfg)
    report = evaluate_recovery(
        datasets,
        model,
        search_params(cfg),
        prior=prior,
        n_subsets=cfg.subsets if cfg.subsets is not None else 50,
        parallelism=cfg.parallelism,
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "roc_edge.csv").write_text(roc_csv(report.edge_roc.points))
    (out / "roc_causal.csv").write_text(roc_csv(report.causal_roc.points))
    summary = {
        "averaging": {
            "edge_auc": report.edge_roc.auc,
            "causal_auc": report.causal_roc.auc,
        },
        "individual": {
            "edge_aucs": report.edge_aucs,
            "causal_aucs": report.causal_aucs,
        },
        "pi_bics": report.pi_bics,
    }
    write_json(out / "auc_summary.json", summary)
    write_json(
        out / "manifest.json", manifest_dict("evaluate", cfg, {"auc": summary})
    )
    log.info(
        "evaluated %d datasets: edge AUC %.3f, causal AUC %.3f",
        len(datasets),
        report.edge_roc.auc,
        report.causal_roc.auc,
    )
    return 0


def cmd_effects(cfg: RunConfig) -> int:
    if cfg.data is None:
        raise ConfigError("effects needs --data (a finished run directory)")
    path = Path(cfg.data) / "effects.csv"
    if not path.is_file():
        raise ConfigError(f"no effects table at {path}")
    sys.stdout.write(path.read_text())
    return 0


def cmd_export_dot(cfg: RunConfig) -> int:
    if cfg.data is None:
        raise ConfigError("export-dot needs --data (a finished run directory)")
    path = Path(cfg.data) / "graph.json"
    if not path.is_file():
        raise ConfigError(f"no graph at {path}")
    sys.stdout.write(annotated_dot(graph_from_dict(read_json(path))))
    return 0


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="JSON config file; flags override it")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--subsets", type=int)
    sp.add_argument("--pi-sel", dest="pi_sel", type=float)
    sp.add_argument("--parallelism", type=int)
    sp.add_argument("--generations", type=int)
    sp.add_argument("--population", type=int)
    sp.add_argument("--crossover", type=float)
    sp.add_argument("--mutation", type=float)
    sp.add_argument("--prior", help="JSON file with forbidden intra-slice arcs")
    sp.add_argument(
        "--discrete", nargs="*", help="column names to rank-normalize"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stablesearch",
        description="Stability-based causal structure search",
    )
    parser.add_argument("--log-level", default="INFO")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("search", help="cross-sectional structure search")
    sp.add_argument("--data", help="CSV with a header row")
    _add_common(sp)

    sp = sub.add_parser(
        "search-longitudinal", help="baseline + transition structure search"
    )
    sp.add_argument("--data", help="wide-format longitudinal CSV")
    sp.add_argument("--layout", help="layout JSON mapping variables to slices")
    sp.add_argument(
        "--subsample-unit",
        dest="subsample_unit",
        choices=("subject", "row"),
    )
    sp.add_argument("--prev-only", dest="prev_only", nargs="*")
    sp.add_argument("--cur-only", dest="cur_only", nargs="*")
    _add_common(sp)

    sp = sub.add_parser("simulate", help="generate ground-truth datasets")
    sp.add_argument("--datasets", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--slices", type=int)
    sp.add_argument("--truth", help="reuse an existing ground-truth JSON")
    _add_common(sp)

    sp = sub.add_parser("evaluate", help="ROC/AUC recovery evaluation")
    sp.add_argument("--data", help="simulate output directory")
    sp.add_argument("--truth", help="ground-truth JSON override")
    _add_common(sp)

    sp = sub.add_parser("effects", help="print a run's effects table")
    sp.add_argument("--data", help="finished run directory")
    _add_common(sp)

    sp = sub.add_parser("export-dot", help="print a run's annotated DOT graph")
    sp.add_argument("--data", help="finished run directory")
    _add_common(sp)

    return parser


COMMANDS = {
    "search": cmd_search,
    "search-longitudinal": cmd_search_longitudinal,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "effects": cmd_effects,
    "export-dot": cmd_export_dot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, InvalidPrior) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SearchFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    except StableSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
