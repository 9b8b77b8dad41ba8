"""Command line interface.

Subcommands
-----------
optimize        search for a loss-minimising design
evaluate        replicate expected-loss evaluations of given designs
compare-approx  accuracy/cost study of the two predictive-entropy losses
fixed-designs   variance study against classical comparator designs
simulate        generate a synthetic dataset for testing

Every run reads one configuration file (see ``config``), writes its
reports into ``--out`` and records a manifest with the configuration hash,
seed and library versions so any output can be reproduced byte for byte.
Wall-clock measurements never enter report files; they go to the
``timings.txt`` sidecar.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure, 5 optimiser non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ProblemConfig, parse_config
from .evaluation import (
    approximation_study,
    boundary_design,
    close_pred_design,
    fixed_design_study,
    loss_distribution,
    triangular_design,
)
from .exceptions import ConfigError, GeodesignError, IngestionError, SearchError
from .losses import LossSpec, expected_loss, make_evaluator
from .model import ParameterVector, simulate_bivariate
from .optimize import coordinate_exchange_continuous, coordinate_exchange_discrete
from .records import format_record
from .rng import substream
from .spatial import Design, build_covariance, sample_gaussian_field

LOSS_FLAGS = {
    "estimation": "estimation",
    "prediction": "prediction_mvn",
    "dual": "dual",
    "pvar": "prediction_variance",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geodesign", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", required=True, help="run configuration file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="search for an optimal design")
    p_opt.add_argument("--loss", choices=sorted(LOSS_FLAGS), required=True)
    p_opt.add_argument("--n", type=int, required=True, help="number of design points")
    p_opt.add_argument("--filter-cluster", default=None, help="restrict candidates to one cluster tag")

    p_eval = sub.add_parser("evaluate", help="evaluate designs under the estimation/prediction objectives")
    p_eval.add_argument("--designs", nargs="+", required=True, help="design files to evaluate")
    p_eval.add_argument("--reference", default=None, help="reference design file for efficiencies")
    p_eval.add_argument("--objective", choices=["E", "P", "both"], default="both")
    p_eval.add_argument("--reps", type=int, default=None)

    p_cmp = sub.add_parser("compare-approx", help="nested vs moment-matched predictive loss study")
    p_cmp.add_argument("--count", type=int, default=100, help="number of random designs")
    p_cmp.add_argument("--n", type=int, default=10, help="points per random design")

    p_fix = sub.add_parser("fixed-designs", help="variance study against classical designs")
    p_fix.add_argument("--n", type=int, default=5)
    p_fix.add_argument("--reps", type=int, default=None)
    p_fix.add_argument("--designs", nargs="*", default=[], help="extra design files to include")

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--n", type=int, default=None, help="design size (defaults to the sampled stations)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
            config.echoes.append(f"seed = {args.seed} (command line override)")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, config, args)
        handler = {
            "optimize": _cmd_optimize,
            "evaluate": _cmd_evaluate,
            "compare-approx": _cmd_compare_approx,
            "fixed-designs": _cmd_fixed_designs,
            "simulate": _cmd_simulate,
        }[args.command]
        handler(args, config, out)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except IngestionError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except SearchError as exc:
        print(f"search error: {exc}", file=sys.stderr)
        return 5
    except (GeodesignError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


def _write_manifest(out: Path, config: ProblemConfig, args) -> None:
    digest = hashlib.sha256(config.source_text.encode()).hexdigest()
    lines = [
        f"config_hash=sha256:{digest}",
        f"seed={config.seed}",
        f"command={args.command}",
        f"geodesign_version={__version__}",
        f"numpy_version={np.__version__}",
        f"scipy_version={scipy.__version__}",
        f"python_version={platform.python_version()}",
    ]
    lines += [f"note={e}" for e in config.echoes]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _write_lines(path: Path, lines) -> None:
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def _station_by_location(config: ProblemConfig) -> dict[tuple[float, float], str]:
    table = {}
    for record, loc in zip(config.stations, config.space.candidates):
        table[(loc.x, loc.y)] = record.station_id
    return table


def _write_design(path: Path, design: Design, config: ProblemConfig) -> None:
    if config.stations is not None:
        ids = _station_by_location(config)
        lines = [ids[(p.x, p.y)] for p in design.points]
    else:
        lines = [f"{p.x!r} {p.y!r}" for p in design.points]
    _write_lines(path, lines)


def _read_design(path: str, config: ProblemConfig) -> Design:
    text = Path(path).read_text()
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if not rows:
        raise ConfigError(f"design file {path!r} is empty")
    if config.stations is not None:
        by_id = {r.station_id: loc for r, loc in zip(config.stations, config.space.candidates)}
        missing = [r for r in rows if r not in by_id]
        if missing:
            raise ConfigError(f"design file {path!r} names unknown stations: {missing}")
        return Design(tuple(by_id[r] for r in rows))
    points = []
    for row in rows:
        parts = row.split()
        if len(parts) != 2:
            raise ConfigError(f"design file {path!r}: expected 'x y' per line, got {row!r}")
        points.append(config.space.location_at(float(parts[0]), float(parts[1])))
    return Design(tuple(points))


def _cmd_optimize(args, config: ProblemConfig, out: Path) -> None:
    budgets = config.budgets
    kind = LOSS_FLAGS[args.loss]
    spec = LossSpec(
        kind=kind,
        K=budgets.K,
        B=budgets.B,
        R=budgets.R,
        fit_restarts=budgets.fit_restarts,
        fit_max_evals=budgets.fit_max_evals,
    )
    space = config.space
    if args.filter_cluster is not None:
        space = _filtered_space(config, args.filter_cluster)
    evaluator = make_evaluator(config.problem, spec, budgets.K, config.seed)
    if space.mode == "discrete":
        best, trace = coordinate_exchange_discrete(
            space, args.n, evaluator, restarts=budgets.restarts, root_seed=config.seed, sweep_cap=budgets.sweep_cap
        )
    else:
        best, trace = coordinate_exchange_continuous(
            space,
            args.n,
            evaluator,
            grid_levels=budgets.grid_levels,
            restarts=budgets.restarts,
            root_seed=config.seed,
            sweep_cap=budgets.sweep_cap,
        )
    _write_design(out / "design.txt", best, config)
    if config.affine is not None:
        lines = []
        for p in best.points:
            ox, oy = config.affine.to_original(p.x, p.y)
            lines.append(f"{ox!r} {oy!r}")
        _write_lines(out / "design_utm.txt", lines)
    _write_lines(out / "trace.txt", trace.to_records())
    report = expected_loss(best, config.problem, spec, budgets.K, config.seed, design_id="optimized")
    _write_lines(out / "losses.txt", [report.to_record(include_wall_time=False)])
    _write_lines(out / "timings.txt", [format_record({"wall_time": float(report.wall_time)})])


def _filtered_space(config: ProblemConfig, cluster: str):
    if config.stations is None:
        raise ConfigError("--filter-cluster needs a station-based design space")
    if all(r.cluster is None for r in config.stations):
        raise ConfigError("station file carries no cluster column")
    from .optimize import DesignSpace

    keep = [loc for r, loc in zip(config.stations, config.space.candidates) if r.cluster == cluster]
    if not keep:
        raise ConfigError(f"no stations carry cluster tag {cluster!r}")
    return DesignSpace.discrete(tuple(keep), allow_replicates=config.space.allow_replicates)


def _cmd_evaluate(args, config: ProblemConfig, out: Path) -> None:
    budgets = config.budgets
    reps = args.reps if args.reps is not None else budgets.reps
    objectives = ["E", "P"] if args.objective == "both" else [args.objective]
    designs = {Path(p).stem: _read_design(p, config) for p in args.designs}
    reference = _read_design(args.reference, config) if args.reference else None

    dist_lines, loss_lines, eff_lines, timing_lines = [], [], [], []
    for objective in objectives:
        for name, design in designs.items():
            dist = loss_distribution(
                design,
                objective,
                reps,
                config.seed,
                config.problem,
                K=budgets.K_eval,
                B=budgets.B,
                R=budgets.R,
                design_id=name,
            )
            dist_lines += dist.to_records()
            loss_lines.append(
                format_record(
                    {
                        "design_id": name,
                        "objective": objective,
                        "reps": reps,
                        "mean_value": float(np.mean(dist.values)),
                    }
                )
            )
        if reference is not None:
            from .evaluation import efficiency

            for name, design in designs.items():
                rep = efficiency(
                    design,
                    reference,
                    objective,
                    reps,
                    config.seed,
                    config.problem,
                    K=budgets.K_eval,
                    B=budgets.B,
                    R=budgets.R,
                    design_id=name,
                    reference_id=Path(args.reference).stem,
                )
                eff_lines.append(rep.to_record())
    _write_lines(out / "distribution.txt", dist_lines)
    _write_lines(out / "losses.txt", loss_lines)
    if eff_lines:
        _write_lines(out / "efficiencies.txt", eff_lines)
    _write_lines(out / "timings.txt", timing_lines)


def _cmd_compare_approx(args, config: ProblemConfig, out: Path) -> None:
    budgets = config.budgets
    study = approximation_study(
        config.problem,
        config.space,
        args.count,
        args.n,
        config.seed,
        K=budgets.K,
        B=budgets.B,
        R=budgets.R,
        fit_B=budgets.B,
    )
    _write_lines(out / "approx_table.txt", study.to_records(include_wall_time=False))
    _write_lines(out / "approx_summary.txt", [format_record({"pearson": float(study.pearson), "designs": args.count})])
    _write_lines(
        out / "timings.txt",
        [
            format_record(
                {
                    "mean_wall_time_nested": float(study.mean_wall_nested),
                    "mean_wall_time_mvn": float(study.mean_wall_mvn),
                }
            )
        ],
    )


def _cmd_fixed_designs(args, config: ProblemConfig, out: Path) -> None:
    budgets = config.budgets
    reps = args.reps if args.reps is not None else budgets.reps
    if config.space.mode != "continuous":
        raise ConfigError("fixed-designs needs a continuous design space")
    designs = {
        "triangular": triangular_design(config.space, args.n),
        "boundary": boundary_design(config.space, args.n),
        "close.pred": close_pred_design(config.space, config.problem.prediction_set, args.n),
    }
    for path in args.designs:
        designs[Path(path).stem] = _read_design(path, config)
    study = fixed_design_study(
        designs,
        config.problem,
        reps,
        config.seed,
        B=budgets.B,
        R=budgets.R,
        fit_restarts=budgets.fit_restarts,
        fit_max_evals=budgets.fit_max_evals,
    )
    _write_lines(out / "predictive_variances.txt", study.predictive_records())
    _write_lines(out / "parameter_variances.txt", study.parameter_records())
    for name, design in designs.items():
        _write_design(out / f"design_{name.replace('.', '_')}.txt", design, config)


def _cmd_simulate(args, config: ProblemConfig, out: Path) -> None:
    rng = substream(config.seed, 42)
    if config.stations is not None:
        if args.n is None:
            idx = [i for i, r in enumerate(config.stations) if r.sampled]
        else:
            idx = sorted(rng.choice(len(config.space.candidates), size=args.n, replace=False).tolist())
        points = tuple(config.space.candidates[i] for i in idx)
        labels = [config.stations[i].station_id for i in idx]
    else:
        n = args.n if args.n is not None else 5
        xs = rng.uniform(0.0, 1.0, size=n)
        ys = rng.uniform(0.0, 1.0, size=n)
        points = tuple(config.space.location_at(x, y) for x, y in zip(xs, ys))
        labels = [f"point_{i}" for i in range(n)]
    design = Design(points)
    theta = ParameterVector.from_array(config.problem.prior.sample(rng))
    s1 = sample_gaussian_field(build_covariance(design, theta.matern1), rng)
    s2 = sample_gaussian_field(build_covariance(design, theta.matern2), rng)
    data = simulate_bivariate(design, theta, s1, s2, config.problem.model.n_rep, rng, model=config.problem.model)
    lines = ["label,x,y,y1,y2"]
    for obs in data:
        p = design.points[obs.location_index]
        lines.append(f"{labels[obs.location_index]},{p.x!r},{p.y!r},{obs.y1!r},{obs.y2}")
    _write_lines(out / "dataset.csv", lines)
    _write_lines(out / "theta.txt", [format_record({"theta": " ".join(repr(v) for v in theta.to_array())})])


if __name__ == "__main__":
    sys.exit(main())
