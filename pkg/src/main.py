#!/usr/bin/env python3
"""
slscan: sparse high-dimensional change-point detection.

    slscan detect    --input prices.csv --log-diff --estimate-ar1 --c 5.5 --out report.json
    slscan simulate  --config scenario.env --mode segmentation --threshold 5.5
    slscan calibrate --n 200 --t 2000 --phi 1 --alpha 0.05 --reps 500 --seed 7
    slscan evaluate  --detections report.json --truth truth.txt --t 2000
"""

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path
from typing import List, Optional

from colorama import Fore, Style, init
from rich.console import Console
from rich.table import Table

from src.configs.config import (DEFAULT_CALIBRATION_REPS, DEFAULT_GROWTH, DEFAULT_LAMBDA1,
                                LOG_DIR, LOG_LEVEL)
from src.processors.covariance import CovarianceKernel, kernel_from_ar1, load_custom_kernel
from src.processors.detector import DetectionConfig, merge_close, sl_detect, threshold_for_count
from src.processors.evaluation import detection_metrics
from src.processors.ingestion import preprocess, read_csv
from src.processors.scoring import SparsityParams, default_lambda2
from src.processors.simulation import (ScenarioSpec, dataset_frame, gen_ar1, null_maxima,
                                       run_accuracy_study, run_segmentation_study,
                                       scenario_from_file, threshold_from_maxima)
from src.processors.windows import THEORY_MAX_SCALE, build_schedule, theory_schedule
from src.utils.file_utils import (DataError, load_json, read_changepoints, save_json,
                                  save_rows_csv)

init()

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

SCENARIO_FLAGS = ("kind", "n", "t", "v", "tau", "phi", "sigma_eps", "c", "r", "k", "seed",
                  "reps", "alpha", "growth", "lambda1", "lambda2")


class CliArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class SlscanService:
    def __init__(self, log_dir: str = LOG_DIR, quiet: bool = False):
        self.log_dir = Path(log_dir)
        self.quiet = quiet
        self.console = Console()
        self.setup_logging()

    def setup_logging(self):
        self.log_dir.mkdir(parents=True, exist_ok=True)
        logging.basicConfig(
            level=getattr(logging, LOG_LEVEL, logging.INFO),
            format='%(asctime)s - %(levelname)s - %(message)s',
            handlers=[
                logging.FileHandler(self.log_dir / 'slscan.log'),
                logging.StreamHandler()
            ]
        )

    def status(self, message: str, color: str = Fore.CYAN):
        if not self.quiet:
            print(f"{color}{message}{Style.RESET_ALL}")

    # detect

    def build_kernel(self, args, T: int, pooled) -> CovarianceKernel:
        kind = args.kernel
        if kind is None:
            if pooled is not None:
                return pooled.kernel()
            return CovarianceKernel.independence()
        if kind == "independence":
            return CovarianceKernel.independence()
        if kind == "random-walk":
            return CovarianceKernel.random_walk(args.sigma_eps)
        if kind == "ar1":
            phi = args.phi if args.phi is not None else (pooled.phi if pooled is not None else None)
            if phi is None:
                raise ValueError("--kernel ar1 needs --phi or --estimate-ar1")
            return kernel_from_ar1(phi, args.sigma_eps)
        if args.kernel_file is None:
            raise ValueError("--kernel custom needs --kernel-file")
        return load_custom_kernel(args.kernel_file, T)

    def detect(self, args) -> int:
        self.status("=== Change-point detection ===")
        data = read_csv(args.input, layout=args.layout, header=not args.no_header,
                        drop_missing=args.drop_missing)
        data, pooled = preprocess(data, log_diff=args.log_diff, skew_threshold=args.skew_threshold,
                                  estimate=args.estimate_ar1)
        T = data.T
        kernel = self.build_kernel(args, T, pooled)
        lambda2 = args.lambda2 if args.lambda2 is not None else default_lambda2(T)
        params = SparsityParams(lambda1=args.lambda1, lambda2=lambda2, N=data.N)
        if args.schedule == "theory":
            schedule = theory_schedule(THEORY_MAX_SCALE, T=T)
        else:
            schedule = build_schedule(T, args.growth)
        self.status(f"N={data.N}, T={T}, i_T={schedule.i_T}, kernel={kernel.kind.value}")

        threshold = args.c if args.c is not None else 0.0
        cfg = DetectionConfig(threshold=threshold, params=params, kernel=kernel,
                              schedule=schedule, i0_default=args.i0)
        matrix = data.to_matrix()
        if args.target_count is not None:
            threshold, report = threshold_for_count(matrix, cfg, args.target_count)
            report.config["target_count"] = args.target_count
            self.status(f"Threshold for {args.target_count} change-point(s): {threshold:.6f}")
        else:
            report = sl_detect(matrix, cfg)
        if args.merge_gap is not None:
            report.detections = merge_close(report.detections, args.merge_gap)
            report.config["merge_gap"] = args.merge_gap

        report.config["preprocessing"] = data.provenance
        report.config["sequences"] = data.N
        if data.dropped:
            report.config["dropped"] = data.dropped
            self.status(f"Dropped {len(data.dropped)} sequence(s): {', '.join(data.dropped)}", Fore.YELLOW)
        if report.diagnostics.get("guard_floor_count"):
            self.status(f"Guard floor hit {report.diagnostics['guard_floor_count']} time(s)", Fore.YELLOW)
        if pooled is not None:
            report.config["pooled_ar1"] = pooled.dict()

        self.show_detections(report)
        if args.out is None:
            print(json.dumps(report.to_dict(), indent=2))
        elif args.format == "csv":
            save_rows_csv(report.to_rows(), ["t", "scale", "score"], args.out)
        else:
            save_json(report.to_dict(), args.out)
        self.status(f"✓ {len(report.detections)} change-point(s) detected", Fore.GREEN)
        return EXIT_OK

    def show_detections(self, report):
        if self.quiet or not report.detections:
            return
        table = Table(title="Change-points")
        table.add_column("t", justify="right")
        table.add_column("scale", justify="right")
        table.add_column("score", justify="right")
        for d in report.detections:
            table.add_row(str(d.tau), str(d.scale), f"{d.score:.3f}")
        self.console.print(table)

    # simulate / calibrate

    def scenario(self, args, **overrides) -> ScenarioSpec:
        values = {}
        if getattr(args, "config", None):
            values.update(scenario_from_file(args.config).dict(exclude_unset=True))
        for key in SCENARIO_FLAGS:
            value = getattr(args, key, None)
            if value is not None:
                values[key] = value
        values.update(overrides)
        return ScenarioSpec(**values)

    def simulate(self, args) -> int:
        spec = self.scenario(args)
        self.status(f"=== Simulation: {args.mode} ({spec.kind}, N={spec.n}, T={spec.t}) ===")
        progress = not self.quiet

        if args.mode == "dataset":
            if args.out is None:
                raise ValueError("--mode dataset needs --out")
            data = gen_ar1(spec.ar1, spec.n, spec.t, spec.seed, spec.mean_matrix())
            out = Path(args.out)
            out.parent.mkdir(parents=True, exist_ok=True)
            dataset_frame(data).to_csv(out, index=False)
            save_json(list(spec.tau), out.with_suffix(".truth.json"))
            self.status(f"✓ Dataset written to {out}", Fore.GREEN)
            return EXIT_OK

        if args.mode == "accuracy":
            vs = args.v_grid if args.v_grid else [spec.v]
            grid = [spec.copy(update={"v": v}) for v in vs]
            for cell in grid:
                if cell.v > cell.n:
                    raise ValueError(f"V={cell.v} exceeds N={cell.n}")
            table = run_accuracy_study(grid, threshold=args.threshold,
                                       calibration_reps=args.calibration_reps,
                                       n_jobs=args.jobs, progress=progress)
            rows = table.to_dict(orient="records")
        else:
            threshold = args.threshold
            if threshold is None:
                maxima = null_maxima(spec, args.calibration_reps, spec.seed, n_jobs=args.jobs,
                                     progress=progress)
                threshold = threshold_from_maxima(maxima, spec.alpha)
                self.status(f"Calibrated threshold {threshold:.4f}")
            rows = [run_segmentation_study(spec, threshold, n_jobs=args.jobs, progress=progress)]

        self.show_rows(rows, title=f"{args.mode} study")
        if args.out is not None:
            save_rows_csv(rows, list(rows[0].keys()), args.out)
        return EXIT_OK

    def calibrate(self, args) -> int:
        spec = self.scenario(args, kind="null", tau=[])
        self.status(f"=== Calibration: N={spec.n}, T={spec.t}, phi={spec.phi}, alpha={spec.alpha} ===")
        if args.reps < 20:
            raise ValueError(f"calibration needs at least 20 replicates, got {args.reps}")
        maxima = null_maxima(spec, args.reps, spec.seed, n_jobs=args.jobs, progress=not self.quiet)
        threshold = threshold_from_maxima(maxima, spec.alpha)
        if args.out is not None:
            save_json({
                "threshold": threshold,
                "alpha": spec.alpha,
                "reps": args.reps,
                "seed": spec.seed,
                "N": spec.n,
                "T": spec.t,
                "phi": spec.phi,
                "sigma_eps": spec.sigma_eps,
                "null_maxima": [float(m) for m in maxima],
            }, args.out)
        print(f"{threshold:.6f}")
        return EXIT_OK

    # evaluate

    def evaluate(self, args) -> int:
        detections = read_changepoints(args.detections)
        truth = read_changepoints(args.truth)
        T = args.t
        if T is None and str(args.detections).endswith(".json"):
            report = load_json(args.detections)
            if isinstance(report, dict):
                T = report.get("config", {}).get("T")
        if T is None:
            raise ValueError("series length unknown: pass --t")
        metrics = detection_metrics(detections, truth, int(T), ks=args.k)
        per_change = metrics.pop("per_change")
        self.show_rows([metrics], title="Detection metrics")
        self.show_rows(per_change, title="Per change-point")
        if args.out is not None:
            save_rows_csv([metrics], list(metrics.keys()), args.out)
        return EXIT_OK

    def show_rows(self, rows: List[dict], title: str):
        if self.quiet or not rows:
            return
        table = Table(title=title)
        for key in rows[0]:
            table.add_column(str(key), justify="right")
        for row in rows:
            table.add_row(*[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row.values()])
        self.console.print(table)


def _tau_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"tau must be a comma-separated list of integers, got {text!r}")


def _add_scenario_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help='Scenario file with key=value lines')
    parser.add_argument('--kind', choices=['null', 'single', 'multi'])
    parser.add_argument('--n', type=int, help='Number of sequences N')
    parser.add_argument('--t', type=int, help='Series length T')
    parser.add_argument('--v', type=int, help='Number of changed sequences V')
    parser.add_argument('--tau', type=_tau_list, help='Change locations, comma separated')
    parser.add_argument('--phi', type=float, help='AR(1) coefficient (1 = random walk)')
    parser.add_argument('--sigma-eps', dest='sigma_eps', type=float, help='Innovation sd')
    parser.add_argument('--drift', dest='c', type=float, help='AR(1) drift c')
    parser.add_argument('--r', type=float, help='Signal size of the three-change design')
    parser.add_argument('--k', type=int, help='Overlap offset of the three-change design')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--alpha', type=float)
    parser.add_argument('--growth', type=float)
    parser.add_argument('--lambda1', type=float)
    parser.add_argument('--lambda2', type=float)
    parser.add_argument('--jobs', type=int, help='Parallel workers (default SLSCAN_THREADS)')


def build_parser() -> CliArgumentParser:
    parser = CliArgumentParser(prog='slscan', description='Sparse high-dimensional change-point detection')
    parser.add_argument('--quiet', action='store_true', help='No status lines, tables or progress bars')
    sub = parser.add_subparsers(dest='command', required=True)

    det = sub.add_parser('detect', help='Detect change-points in a CSV file')
    det.add_argument('--input', required=True, help='CSV file')
    layout = det.add_mutually_exclusive_group()
    layout.add_argument('--rows-time', dest='layout', action='store_const', const='rows=time',
                        help='Rows are time points (default)')
    layout.add_argument('--rows-series', dest='layout', action='store_const', const='rows=series',
                        help='Rows are sequences')
    det.set_defaults(layout='rows=time')
    det.add_argument('--no-header', action='store_true')
    det.add_argument('--drop-missing', action='store_true', help='Drop rows with gaps instead of failing')
    det.add_argument('--log-diff', action='store_true', help='Use log returns')
    det.add_argument('--skew-threshold', type=float, help='Drop sequences with |skewness| above this')
    det.add_argument('--estimate-ar1', action='store_true', help='Fit AR(1) per sequence and standardise')
    det.add_argument('--kernel', choices=['independence', 'ar1', 'random-walk', 'custom'])
    det.add_argument('--phi', type=float)
    det.add_argument('--sigma-eps', dest='sigma_eps', type=float, default=1.0)
    det.add_argument('--kernel-file')
    thr = det.add_mutually_exclusive_group(required=True)
    thr.add_argument('--c', type=float, help='Detection threshold')
    thr.add_argument('--target-count', type=int, help='Search the threshold giving this many change-points')
    det.add_argument('--lambda1', type=float, default=DEFAULT_LAMBDA1)
    det.add_argument('--lambda2', type=float, help='Default sqrt(log T / log log T)')
    det.add_argument('--growth', type=float, default=DEFAULT_GROWTH)
    det.add_argument('--schedule', choices=['experimental', 'theory'], default='experimental')
    det.add_argument('--i0', type=int, default=1, help='First scale scanned')
    det.add_argument('--merge-gap', type=int)
    det.add_argument('--format', choices=['json', 'csv'], default='json')
    det.add_argument('--out')

    sim = sub.add_parser('simulate', help='Generate scenarios and run simulation studies')
    _add_scenario_flags(sim)
    sim.add_argument('--reps', type=int)
    sim.add_argument('--mode', choices=['dataset', 'accuracy', 'segmentation'], default='dataset')
    sim.add_argument('--v-grid', type=int, nargs='+', help='V values for an accuracy study')
    sim.add_argument('--threshold', type=float, help='Fixed threshold; calibrated when absent')
    sim.add_argument('--calibration-reps', type=int, default=DEFAULT_CALIBRATION_REPS)
    sim.add_argument('--out')

    cal = sub.add_parser('calibrate', help='Null threshold calibration')
    _add_scenario_flags(cal)
    cal.add_argument('--reps', type=int, default=DEFAULT_CALIBRATION_REPS)
    cal.add_argument('--out', help='JSON record of the null maxima')

    ev = sub.add_parser('evaluate', help='Compare detections with the truth')
    ev.add_argument('--detections', required=True)
    ev.add_argument('--truth', required=True)
    ev.add_argument('--t', type=int, help='Series length (read from a report when absent)')
    ev.add_argument('--k', type=int, nargs='+', default=[3, 10], help='Hit tolerances')
    ev.add_argument('--out', help='Metrics CSV')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    service = SlscanService(log_dir=LOG_DIR, quiet=args.quiet)
    handler = getattr(service, args.command)
    try:
        return handler(args)
    except (DataError, ValueError, FileNotFoundError) as e:
        print(f"{Fore.RED}Error: {e}{Style.RESET_ALL}", file=sys.stderr)
        logging.error(f"{args.command} failed: {e}")
        return EXIT_DATA
    except Exception as e:
        print(f"{Fore.RED}Unexpected error in {args.command}: {e}{Style.RESET_ALL}", file=sys.stderr)
        logging.error(f"{args.command} crashed: {e}", exc_info=True)
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
