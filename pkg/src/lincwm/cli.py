"""Command-line sweep over the twelve-model family.

Loads a CSV, fits every model for each G in the requested range through
the hierarchical initialization, and writes a reproducible report:
``results.json`` with all selection records and parameter estimates,
``assignments_<model>_<G>.csv`` with per-row MAP labels and posteriors,
and for each G's best-BIC model the display data (``cwplot_*.json``) plus
rendered PNG figures.  A ranked selection table is printed to stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import plots
from .em import EmConfig
from .errors import CwmError, EmptyFile, MissingColumn, NonNumericCell
from .initialization import hierarchical_fit
from .selection import SelectionRecord, map_classify
from .types import MODEL_NAMES, Dataset, FitResult


@dataclass
class RunConfig:
    """Everything one sweep needs; defaults mirror the fitting conventions
    (10 starts, Aitken threshold 0.05, G from 1 to 4)."""

    data_path: str
    response_column: str
    covariate_columns: list[str]
    label_column: Optional[str] = None
    g_min: int = 1
    g_max: int = 4
    models: tuple[str, ...] = MODEL_NAMES
    seed: int = 0
    epsilon: float = 0.05
    max_iter: int = 1000
    n_starts: int = 10
    output_dir: str = "."

    def __post_init__(self):
        if not (1 <= self.g_min <= self.g_max):
            raise CwmError("need 1 <= g_min <= g_max")
        if not self.covariate_columns:
            raise CwmError("at least one covariate column is required")
        self.models = tuple(self.models)
        if not self.models:
            raise CwmError("models must name at least one family member")
        unknown = [m for m in self.models if m not in MODEL_NAMES]
        if unknown:
            raise CwmError(
                f"unknown model name(s): {', '.join(unknown)}; "
                f"valid names are {', '.join(MODEL_NAMES)}"
            )
        if self.epsilon <= 0:
            raise CwmError("epsilon must be positive")
        if self.n_starts < 1:
            raise CwmError("n_starts must be at least 1")


def load_csv(
    path,
    response: str,
    covariates: list[str],
    labels: Optional[str] = None,
) -> Dataset:
    """Read a UTF-8 CSV with a header row into a Dataset.

    Response and covariate cells must parse as floats; the label column,
    when requested, is kept verbatim as strings.  Data rows are numbered
    from 1 in error messages.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(f"{path}: file has no header row")
        wanted = [response, *covariates] + ([labels] if labels else [])
        for col in wanted:
            if col not in reader.fieldnames:
                raise MissingColumn(
                    f"column {col!r} not found; header has {reader.fieldnames}"
                )

        def parse(cell, row_num, col):
            try:
                return float(cell)
            except (TypeError, ValueError):
                raise NonNumericCell(row_num, col, cell) from None

        y, X, lab = [], [], []
        for row_num, row in enumerate(reader, start=1):
            y.append(parse(row.get(response), row_num, response))
            X.append([parse(row.get(c), row_num, c) for c in covariates])
            if labels:
                lab.append(row.get(labels))
    if not y:
        raise EmptyFile(f"{path}: no data rows")
    return Dataset(
        y=np.array(y),
        X=np.array(X),
        labels=np.array(lab) if labels else None,
    )


def export_cwplot(fit: FitResult, data: Dataset, covariate_index: int, path) -> None:
    """Write the display data of one fitted model as an indented JSON file."""
    payload = plots.cwplot_payload(fit, data, covariate_index)
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _params_dict(params) -> dict:
    return {
        "pi": params.pi.tolist(),
        "mu": params.mu.tolist(),
        "Sigma": params.Sigma.tolist(),
        "beta0": params.beta0.tolist(),
        "beta1": params.beta1.tolist(),
        "sigma2": params.sigma2.tolist(),
        "nu": params.nu.tolist() if params.nu is not None else None,
        "zeta": params.zeta.tolist() if params.zeta is not None else None,
    }


def _write_assignments(path, fit: FitResult) -> None:
    tau = fit.latent.tau
    labels = map_classify(tau)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["row", "map", *[f"tau_{g}" for g in range(1, fit.G + 1)]]
        )
        for i in range(tau.shape[0]):
            writer.writerow(
                [i + 1, int(labels[i]), *[repr(float(t)) for t in tau[i]]]
            )


def _print_table(records: list[SelectionRecord]) -> None:
    if not records:
        print("no models were fitted")
        return
    ranked = sorted(records, key=lambda r: r.bic, reverse=True)
    best_bic = ranked[0]
    best_icl = max(records, key=lambda r: r.icl)
    rows = [["model", "G", "m", "loglik", "BIC", "ICL", "ARI", ""]]
    for r in ranked:
        mark = ("*BIC" if r is best_bic else "") + ("*ICL" if r is best_icl else "")
        rows.append([
            r.model, str(r.G), str(r.m),
            repr(r.loglik), repr(r.bic), repr(r.icl),
            "-" if r.ari is None else repr(r.ari),
            mark,
        ])
    widths = [max(len(row[c]) for row in rows) for c in range(len(rows[0]))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())


def run_sweep(cfg: RunConfig) -> dict:
    """Fit the family over the configured G range and write all outputs.

    Returns the report dictionary (also serialized to ``results.json``);
    its ``exit_code`` entry is 0 when every G produced at least one
    converged fit and 2 otherwise.
    """
    data = load_csv(
        cfg.data_path, cfg.response_column, cfg.covariate_columns, cfg.label_column
    )
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    em_cfg = EmConfig(epsilon=cfg.epsilon, max_iter=cfg.max_iter)
    reported = set(cfg.models)

    records: list[SelectionRecord] = []
    record_rows: list[dict] = []
    failures: list[dict] = []
    outputs: list[str] = []
    all_g_converged = True

    for G in range(cfg.g_min, cfg.g_max + 1):
        hres = hierarchical_fit(
            data, G, seed=cfg.seed + 7919 * G, cfg=em_cfg, n_starts=cfg.n_starts
        )
        if not any(f.converged for f in hres.fits.values()):
            all_g_converged = False
        best_at_g: Optional[FitResult] = None
        for name in MODEL_NAMES:
            if name in hres.fits:
                fit = hres.fits[name]
                if name not in reported:
                    continue
                rec = SelectionRecord.from_fit(fit, labels=data.labels)
                records.append(rec)
                record_rows.append({
                    "model": rec.model,
                    "G": rec.G,
                    "m": rec.m,
                    "loglik": rec.loglik,
                    "bic": rec.bic,
                    "icl": rec.icl,
                    "ari": rec.ari,
                    "converged": bool(fit.converged),
                    "n_iter": fit.n_iter,
                    "init": "multistart" if name in hres.fallbacks or name in ("NN-VE", "NN-EV")
                            else next(s for s, t in hres.edges if t == name),
                    "params": _params_dict(fit.params),
                })
                csv_name = f"assignments_{name}_{G}.csv"
                _write_assignments(out_dir / csv_name, fit)
                outputs.append(csv_name)
                if best_at_g is None or fit.bic > best_at_g.bic:
                    best_at_g = fit
            elif name in hres.failures and name in reported:
                failures.append({"model": name, "G": G, "reason": hres.failures[name]})
        if best_at_g is not None:
            stem = f"cwplot_{best_at_g.spec.name}_{G}"
            export_cwplot(best_at_g, data, 0, out_dir / f"{stem}.json")
            plots.save_cwplot(best_at_g, data, 0, out_dir / f"{stem}.png")
            outputs.extend([f"{stem}.json", f"{stem}.png"])

    if records:
        plots.save_criteria(records, out_dir / "criteria.png")
        outputs.append("criteria.png")

    exit_code = 0 if (records and all_g_converged) else 2
    best_bic = max(records, key=lambda r: r.bic, default=None)
    best_icl = max(records, key=lambda r: r.icl, default=None)
    report = {
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": {
            "data_path": str(cfg.data_path),
            "response_column": cfg.response_column,
            "covariate_columns": list(cfg.covariate_columns),
            "label_column": cfg.label_column,
            "g_min": cfg.g_min,
            "g_max": cfg.g_max,
            "models": list(cfg.models),
            "seed": cfg.seed,
            "epsilon": cfg.epsilon,
            "max_iter": cfg.max_iter,
            "n_starts": cfg.n_starts,
            "output_dir": str(cfg.output_dir),
        },
        "n": data.n,
        "d": data.d,
        "records": record_rows,
        "failures": failures,
        "best_bic": None if best_bic is None else {
            "model": best_bic.model, "G": best_bic.G, "bic": best_bic.bic,
        },
        "best_icl": None if best_icl is None else {
            "model": best_icl.model, "G": best_icl.G, "icl": best_icl.icl,
        },
        "outputs": outputs,
        "exit_code": exit_code,
    }
    (out_dir / "results.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _print_table(records)
    return report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lincwm",
        description="Fit the twelve linear cluster-weighted models over a "
                    "range of component counts and rank them by BIC/ICL.",
    )
    p.add_argument("--data", required=True, help="input CSV file (UTF-8, header row)")
    p.add_argument("--response", required=True, help="response column name")
    p.add_argument("--covariates", required=True,
                   help="comma-separated covariate column names")
    p.add_argument("--labels", default=None,
                   help="optional true-label column; enables ARI reporting")
    p.add_argument("--g-min", type=int, default=1, help="smallest G (default 1)")
    p.add_argument("--g-max", type=int, default=4, help="largest G (default 4)")
    p.add_argument("--models", default="all",
                   help="comma-separated model names to report, or 'all'; the "
                        "whole family is always fitted for initialization")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--epsilon", type=float, default=0.05,
                   help="stopping threshold (default 0.05)")
    p.add_argument("--max-iter", type=int, default=1000,
                   help="EM iteration cap (default 1000)")
    p.add_argument("--starts", type=int, default=10,
                   help="random starts for the root models (default 10)")
    p.add_argument("--out", default=".", help="output directory (default .)")
    return p


def config_from_args(args) -> RunConfig:
    if args.models.strip().lower() == "all":
        models = MODEL_NAMES
    else:
        models = tuple(m.strip() for m in args.models.split(",") if m.strip())
    covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    return RunConfig(
        data_path=args.data,
        response_column=args.response,
        covariate_columns=covariates,
        label_column=args.labels,
        g_min=args.g_min,
        g_max=args.g_max,
        models=models,
        seed=args.seed,
        epsilon=args.epsilon,
        max_iter=args.max_iter,
        n_starts=args.starts,
        output_dir=args.out,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = run_sweep(cfg)
    except (CwmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return report["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
