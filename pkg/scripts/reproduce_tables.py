#!/usr/bin/env python3
"""
Run the simulation studies end to end and write one CSV per study.

    python -m scripts.reproduce_tables --out results
    python -m scripts.reproduce_tables --quick --jobs 4

--quick shrinks series lengths and replicate counts so the whole run takes
minutes instead of hours.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src.configs.config import DEFAULT_CALIBRATION_REPS, THREADS
from src.processors.simulation import (ScenarioSpec, calibrate_threshold, run_accuracy_study,
                                       run_segmentation_study)
from src.utils.file_utils import save_rows_csv

console = Console()

FULL_CELLS = [(500, 500), (500, 2000), (2000, 500), (2000, 2000)]
QUICK_CELLS = [(200, 100), (400, 100)]
V_GRID = (1, 3, 10, 100)


class TableRunner:
    def __init__(self, out_dir: str, quick: bool, jobs: int, seed: int):
        self.out_dir = Path(out_dir)
        self.quick = quick
        self.jobs = jobs
        self.seed = seed
        self.setup_logging()

    def setup_logging(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        logging.basicConfig(
            level=logging.INFO,
            format='%(asctime)s - %(levelname)s - %(message)s',
            handlers=[logging.FileHandler(self.out_dir / 'reproduce_tables.log')]
        )

    @property
    def calibration_reps(self) -> int:
        return 100 if self.quick else DEFAULT_CALIBRATION_REPS

    def show(self, rows: List[dict], title: str):
        table = Table(title=title)
        for key in rows[0]:
            table.add_column(str(key), justify="right")
        for row in rows:
            table.add_row(*[f"{v:.3f}" if isinstance(v, float) else str(v) for v in row.values()])
        console.print(table)

    def thresholds(self) -> List[dict]:
        """Null thresholds at alpha = 0.05 for each (T, N) cell."""
        rows = []
        for T, N in (QUICK_CELLS if self.quick else FULL_CELLS):
            spec = ScenarioSpec(kind="null", n=N, t=T, seed=self.seed)
            c = calibrate_threshold(spec, reps=self.calibration_reps, n_jobs=self.jobs)
            rows.append({"T": T, "N": N, "alpha": spec.alpha, "reps": self.calibration_reps, "threshold": c})
        return rows

    def accuracy(self, thresholds: List[dict]) -> List[dict]:
        rows = []
        reps = 20 if self.quick else 200
        for cell in thresholds:
            grid = [ScenarioSpec(kind="single", n=cell["N"], t=cell["T"], v=v, seed=self.seed)
                    for v in V_GRID if v <= cell["N"]]
            table = run_accuracy_study(grid, reps=reps, threshold=cell["threshold"], n_jobs=self.jobs)
            rows.extend(table.to_dict(orient="records"))
        return rows

    def segmentation(self) -> List[dict]:
        T, N = (400, 120) if self.quick else (2000, 200)
        reps = 10 if self.quick else 100
        base = ScenarioSpec(kind="multi", n=N, t=T, seed=self.seed, reps=reps)
        c = calibrate_threshold(base, reps=self.calibration_reps, n_jobs=self.jobs)
        rows = []
        for r in (0.8, 1.0):
            for k in (0, 20, 40):
                if 2 * k + 40 > N:
                    continue
                spec = base.copy(update={"r": r, "k": k})
                rows.append(run_segmentation_study(spec, c, n_jobs=self.jobs))
        return rows

    def run(self):
        console.print(Panel.fit(
            "Simulation studies\n"
            f"{'quick' if self.quick else 'full'} grid, {self.jobs} worker(s), seed {self.seed}",
            style="bold blue"
        ))
        thresholds = self.thresholds()
        self.show(thresholds, "Detection thresholds")
        save_rows_csv(thresholds, list(thresholds[0]), self.out_dir / "thresholds.csv")

        accuracy = self.accuracy(thresholds)
        self.show(accuracy, "Hit rates near the single change")
        save_rows_csv(accuracy, list(accuracy[0]), self.out_dir / "accuracy.csv")

        segmentation = self.segmentation()
        self.show(segmentation, "Estimated change-point counts")
        save_rows_csv(segmentation, list(segmentation[0]), self.out_dir / "segmentation.csv")
        console.print(f"[green]Results written to {self.out_dir}[/green]")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description='Reproduce the simulation tables')
    parser.add_argument('--out', default='results')
    parser.add_argument('--quick', action='store_true', help='Small grid for a smoke run')
    parser.add_argument('--jobs', type=int, default=THREADS)
    parser.add_argument('--seed', type=int, default=2024)
    args = parser.parse_args(argv)
    TableRunner(args.out, args.quick, args.jobs, args.seed).run()
    return 0


if __name__ == "__main__":
    sys.exit(main())
