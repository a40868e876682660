"""Train direct/plausible x augmented/plain models and score them across exposures."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .metrics import (
    DEFAULT_WORST_K,
    MetricsReport,
    WhitePoint,
    combine_reports,
    eta_sweep,
    evaluate_cubes,
    exposure_report,
)
from .plausible import NullSpaceModel, build_null_model
from .regression import RegressorSpec, TrainConfig, TrainedModel, default_recentering, predict_spectrum, train
from .spectral import HyperCube, SensitivitySet, form_rgb, scale_cube

logger = logging.getLogger(__name__)

DEFAULT_EXPOSURES = (1.0, 0.5, 2.0)
DEFAULT_GAMMAS = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))


@dataclass(frozen=True)
class ModelVariant:
    mode: str
    augment: bool

    @property
    def name(self) -> str:
        return self.mode + ("+aug" if self.augment else "")


ALL_VARIANTS = tuple(ModelVariant(m, a) for m in ("direct", "plausible") for a in (False, True))


@dataclass(frozen=True)
class ExperimentGrid:
    variants: tuple = ALL_VARIANTS
    exposures: tuple = DEFAULT_EXPOSURES

    def __post_init__(self):
        if not self.variants:
            raise ValueError("experiment grid needs at least one model")
        if not self.exposures:
            raise ValueError("experiment grid needs at least one exposure")
        for xi in self.exposures:
            if not (np.isfinite(xi) and xi > 0):
                raise ValueError(f"exposures must be positive, got {xi}")


def split_images(count: int, seed: int = 0, fractions=(0.6, 0.2, 0.2)):
    """Seeded shuffle of image indices into train / validation / test lists."""
    order = np.random.Generator(np.random.PCG64(seed)).permutation(count)
    n_train = int(round(fractions[0] * count))
    n_val = int(round(fractions[1] * count))
    n_test = count - n_train - n_val
    if n_train < 1 or n_test < 1:
        raise ValueError(f"cannot split {count} images into non-empty train and test sets")
    return (sorted(order[:n_train].tolist()),
            sorted(order[n_train:n_train + n_val].tolist()),
            sorted(order[n_train + n_val:].tolist()))


@dataclass
class ExperimentResult:
    reports: dict
    models: dict
    exposures: tuple
    splits: tuple
    validation_mrae: dict = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.reports)

    def eta_table(self, which: str = "mean", gammas=DEFAULT_GAMMAS):
        """Joint-metric sweep: array (gammas x models) of exposure-averaged scores."""
        de = [getattr(self.reports[n], f"{which}_de") for n in self.names()]
        mr = [getattr(self.reports[n], f"{which}_mrae") for n in self.names()]
        table, g = eta_sweep(de, mr, gammas)
        return table, g

    def best_by_eta(self, gamma: float, which: str = "mean") -> str:
        table, _ = self.eta_table(which, [gamma])
        return self.names()[int(np.argmin(table[0]))]

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.txt", "w") as fh:
            for name, rep in self.reports.items():
                fh.write(f"[{name}]\n")
                fh.write(rep.to_text())
                if name in self.validation_mrae:
                    fh.write(f"validation_mean_mrae={self.validation_mrae[name]!r}\n")
                fh.write("\n")
        rows = [row for name, rep in self.reports.items() for row in rep.to_rows(model=name)]
        with open(out / "metrics.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        if len(self.reports) >= 2:
            for which in ("mean", "wc"):
                table, gammas = self.eta_table(which)
                with open(out / f"eta_{which}.csv", "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["gamma", *self.names(), "best"])
                    for g, row in zip(gammas, table):
                        w.writerow([f"{g:g}", *(repr(float(v)) for v in row),
                                    self.names()[int(np.argmin(row))]])


def _stack(cubes, idx):
    return np.concatenate([cubes[i].pixels() for i in idx])


def evaluate_model(model: TrainedModel, null_model: NullSpaceModel, cubes, s: SensitivitySet,
                   exposures=DEFAULT_EXPOSURES, wp="auto", worst_k=DEFAULT_WORST_K) -> MetricsReport:
    """Score ``model`` on ``cubes`` with inputs and ground truth scaled by each exposure."""
    by_xi = {}
    for xi in exposures:
        per_image = []
        for cube in cubes:
            gt = scale_cube(cube, xi)
            rec = HyperCube(gt.grid, predict_spectrum(model, form_rgb(gt.data, s), null_model))
            white = wp.scaled(xi) if isinstance(wp, WhitePoint) else wp
            per_image.append(evaluate_cubes(gt, rec, s, white, worst_k))
        by_xi[float(xi)] = combine_reports(per_image)
    return exposure_report(by_xi)


def run_experiment(cubes, s: SensitivitySet, grid: ExperimentGrid = ExperimentGrid(),
                   hidden_layers=(64, 64), train_cfg: TrainConfig = TrainConfig(),
                   wp="auto", worst_k: int = DEFAULT_WORST_K, seed: int = 0,
                   kind: str = "mlp", output_activation: str = "relu") -> ExperimentResult:
    """Train every grid variant on the training split and evaluate on the test split."""
    cubes = list(cubes)
    train_idx, val_idx, test_idx = split_images(len(cubes), seed)
    null_model = build_null_model(s)
    X_spec = _stack(cubes, train_idx)
    X_rgb = form_rgb(X_spec, s)
    test = [cubes[i] for i in test_idx]
    val = [cubes[i] for i in val_idx]
    reports, models, val_mrae = {}, {}, {}
    for variant in grid.variants:
        spec = RegressorSpec(mode=variant.mode, kind=kind, hidden_layers=hidden_layers,
                             output_activation=output_activation,
                             recentering=default_recentering(variant.augment), seed=seed)
        cfg = replace(train_cfg, augment=variant.augment)
        logger.info("training %s", variant.name)
        model = train(spec, cfg, X_rgb, X_spec, null_model)
        models[variant.name] = model
        reports[variant.name] = evaluate_model(model, null_model, test, s, grid.exposures,
                                               wp, worst_k)
        if val:
            val_mrae[variant.name] = evaluate_model(model, null_model, val, s, (1.0,),
                                                    wp, worst_k).mean_mrae
    return ExperimentResult(reports, models, tuple(grid.exposures),
                            (train_idx, val_idx, test_idx), val_mrae)
