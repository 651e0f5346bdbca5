"""Command-line pipeline: simulate -> calibrate -> trend -> predict -> evaluate.

Every subcommand reads and writes CSV files in the output directory and records a
``<command>_manifest.yaml`` with the resolved configuration and the input digests.
"""

from dataclasses import dataclass
import logging
from pathlib import Path
import sys

import click
import pandas as pd
import typer

from lcta import __version__
from lcta.config import load_config, resolve_config
from lcta.datasets import SynthConfig, generate
from lcta.modules.irt import JointMaximumLikelihoodCalibration
from lcta.modules.knn import PredictionMode, TrajectoryNearestNeighbors, predictions_to_frame
from lcta.modules.stump import DecisionStump
from lcta.modules.trends import AbilityTrendEstimation, TrendKind, group_mean_trend
from lcta.utils import evaluation
from lcta.utils.errors import DomainError, LCTAError, NumericalError
from lcta.utils.file_io import write_csv, write_curve_svg, write_manifest
from lcta.utils.importers import (
    load_abilities,
    load_labels,
    load_matrix,
    load_predictions,
    load_trend,
)
from lcta.utils.irt import CalibrationConfig
from lcta.utils.lcta_dataclass import AbsencePolicy

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

app = typer.Typer(
    help="Learning-check-test analytics: IRT calibration, ability trends and failure prediction.",
    add_completion=False,
    no_args_is_help=True,
    pretty_exceptions_enable=False,
)


@dataclass
class RunContext:
    """Global options shared by every subcommand."""

    config: dict
    out: Path
    threads: int


def _flag_value(build, *args, **kwargs):
    """Build a value from command-line flags, reporting domain errors as usage errors."""
    try:
        return build(*args, **kwargs)
    except (DomainError, ValueError) as err:
        raise typer.BadParameter(str(err)) from err


def parse_k_range(text: str | None) -> list[int] | None:
    """Parse ``"1..7"``, ``"3"`` or ``"1,2,5"`` into a sorted list of units."""
    if text is None:
        return None
    text = str(text).strip()
    try:
        if ".." in text:
            first, last = (int(part) for part in text.split(".."))
            units = list(range(first, last + 1))
        else:
            units = sorted({int(part) for part in text.split(",")})
    except ValueError as err:
        raise typer.BadParameter(f"Cannot read k-range '{text}'; use e.g. 1..7.") from err
    if not units or units[0] < 1:
        raise typer.BadParameter(f"k-range '{text}' must name units from 1 upwards.")
    return units


def parse_cutoffs(text: str | list | None) -> list[float] | None:
    """Parse ``"0.3,0.4,0.5"`` into cutoffs."""
    if text is None:
        return None
    parts = text if isinstance(text, list) else str(text).split(",")
    try:
        cutoffs = [float(part) for part in parts]
    except ValueError as err:
        raise typer.BadParameter(f"Cannot read cutoffs '{text}'.") from err
    if any(not c >= 0 for c in cutoffs):
        raise typer.BadParameter("Cutoffs must be non-negative.")
    return cutoffs


def _calibration_config(run: RunContext) -> tuple[dict, CalibrationConfig]:
    resolved = resolve_config(run.config, "calibration")
    return resolved, _flag_value(CalibrationConfig, **resolved)


def _policy(run: RunContext, policy: str | None) -> tuple[dict, AbsencePolicy]:
    resolved = resolve_config(run.config, "policy", absence=policy)
    return resolved, _flag_value(AbsencePolicy, resolved["absence"])


def _command_context(ctx: typer.Context, out: Path | None) -> RunContext:
    run: RunContext = ctx.obj
    if out is not None:
        run.out = out
    return run


def _out_dir(run: RunContext) -> Path:
    run.out.mkdir(parents=True, exist_ok=True)
    return run.out


@app.callback()
def main_callback(
    ctx: typer.Context,
    config: Path | None = typer.Option(
        None, "--config", help="YAML file with configuration sections."
    ),
    out: Path = typer.Option(Path("."), "--out", help="Output directory."),
    threads: int = typer.Option(1, "--threads", help="Parallel workers, -1 for all cores."),
    quiet: bool = typer.Option(False, "--quiet", help="Only log warnings and errors."),
):
    """Global options."""
    logging.basicConfig(
        level=logging.WARNING if quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    if threads == 0:
        raise typer.BadParameter("--threads must be non-zero.")
    ctx.obj = RunContext(config=_flag_value(load_config, config), out=out, threads=threads)


@app.command()
def simulate(
    ctx: typer.Context,
    seed: int | None = typer.Option(None, "--seed", help="Random seed."),
    n_students: int | None = typer.Option(None, "--n-students"),
    items_per_test: int | None = typer.Option(None, "--items-per-test"),
    n_tests: int | None = typer.Option(None, "--n-tests"),
    absence_rate: float | None = typer.Option(None, "--absence-rate"),
    alpha: float | None = typer.Option(None, "--alpha", help="Outcome link intercept."),
    beta: float | None = typer.Option(None, "--beta", help="Outcome link slope."),
    out: Path | None = typer.Option(None, "--out", help="Output directory."),
):
    """Generate a synthetic cohort: matrix, labels and ground truth."""
    run = _command_context(ctx, out)
    resolved = resolve_config(
        run.config,
        "simulate",
        seed=seed,
        n_students=n_students,
        items_per_test=items_per_test,
        n_tests=n_tests,
        absence_rate=absence_rate,
        alpha=alpha,
        beta=beta,
    )
    synth_config = _flag_value(SynthConfig, **resolved)
    cohort = generate(synth_config)

    out_dir = _out_dir(run)
    outputs = [
        write_csv(cohort.matrix.to_frame(), out_dir / "matrix.csv"),
        write_csv(cohort.labels.to_frame(), out_dir / "labels.csv"),
        write_csv(cohort.theta_frame(), out_dir / "theta_true.csv"),
        write_csv(cohort.items_frame(), out_dir / "items_true.csv"),
    ]
    write_manifest(out_dir, "simulate", {"simulate": resolved}, [], outputs, __version__)


@app.command()
def calibrate(
    ctx: typer.Context,
    matrix: Path = typer.Option(..., "--matrix", help="Response matrix CSV."),
    policy: str | None = typer.Option(None, "--policy", help="as-incorrect or as-missing."),
    out: Path | None = typer.Option(None, "--out", help="Output directory."),
):
    """Calibrate item parameters and abilities on the full response matrix."""
    run = _command_context(ctx, out)
    calibration, config = _calibration_config(run)
    policy_section, absence = _policy(run, policy)
    responses = load_matrix(matrix)

    result = JointMaximumLikelihoodCalibration(config).calibrate(responses, absence).calibration_

    items = pd.DataFrame(
        {
            "item_id": list(responses.item_ids),
            "unit": list(responses.item_units),
            "a": result.items.a,
            "b": result.items.b,
            "flag": list(result.items.flags),
        }
    )
    abilities = pd.DataFrame(
        {
            "student_id": list(responses.student_ids),
            "theta": result.abilities.theta,
            "flag": list(result.abilities.flags),
        }
    )
    out_dir = _out_dir(run)
    outputs = [
        write_csv(items, out_dir / "items.csv"),
        write_csv(abilities, out_dir / "abilities.csv"),
        write_csv(result.convergence_frame(), out_dir / "convergence.csv"),
    ]
    write_manifest(
        out_dir,
        "calibrate",
        {"calibration": calibration, "policy": policy_section},
        [matrix],
        outputs,
        __version__,
    )


@app.command()
def trend(
    ctx: typer.Context,
    matrix: Path = typer.Option(..., "--matrix", help="Response matrix CSV."),
    kind: str | None = typer.Option(None, "--kind", help="per-unit or cumulative."),
    k_range: str | None = typer.Option(None, "--k-range", help="Units, e.g. 1..7."),
    item_source: str | None = typer.Option(None, "--item-source", help="prefix or full."),
    policy: str | None = typer.Option(None, "--policy", help="as-incorrect or as-missing."),
    labels: Path | None = typer.Option(None, "--labels", help="Labels CSV for group means."),
    out: Path | None = typer.Option(None, "--out", help="Output directory."),
):
    """Compute per-unit or cumulative ability trends."""
    run = _command_context(ctx, out)
    calibration, config = _calibration_config(run)
    policy_section, absence = _policy(run, policy)
    section = resolve_config(
        run.config, "trend", kind=kind, k_range=k_range, item_source=item_source
    )
    trend_kind = _flag_value(TrendKind, section["kind"])
    units = parse_k_range(section["k_range"])
    estimation = _flag_value(
        AbilityTrendEstimation, config, item_source=section["item_source"], n_jobs=run.threads
    )

    responses = load_matrix(matrix)
    if units is not None and units[-1] > responses.n_tests:
        raise typer.BadParameter(f"k-range exceeds the {responses.n_tests} units of the matrix.")
    if trend_kind is TrendKind.PER_UNIT:
        estimation.per_unit_trend(responses, absence, units)
    else:
        estimation.cumulative_trend(responses, absence, units)
    result = estimation.trend_

    out_dir = _out_dir(run)
    values, flags = result.to_frames()
    stem = f"trend_{trend_kind.value}"
    outputs = [
        write_csv(values, out_dir / f"{stem}.csv"),
        write_csv(flags, out_dir / f"{stem}_flags.csv"),
    ]
    inputs = [matrix]
    if labels is not None:
        outcome = load_labels(labels)
        outputs.append(
            write_csv(group_mean_trend(result, outcome), out_dir / f"{stem}_group_means.csv")
        )
        inputs.append(labels)
    write_manifest(
        out_dir,
        "trend",
        {"calibration": calibration, "policy": policy_section, "trend": section},
        inputs,
        outputs,
        __version__,
    )


@app.command()
def predict(
    ctx: typer.Context,
    trend: Path = typer.Option(..., "--trend", help="Cumulative trend CSV."),
    labels: Path = typer.Option(..., "--labels", help="Labels CSV."),
    k: list[int] | None = typer.Option(None, "--k", help="Horizon; repeat for several."),
    mode: str | None = typer.Option(None, "--mode", help="loo or reference."),
    n_neighbors: int | None = typer.Option(None, "--n-neighbors"),
    reference_trend: Path | None = typer.Option(
        None, "--reference-trend", help="Trend of the labeled reference cohort."
    ),
    tie_break: str | None = typer.Option(None, "--tie-break", help="student_id or input_order."),
    out: Path | None = typer.Option(None, "--out", help="Output directory."),
):
    """Predict failure probabilities from the nearest ability trajectories."""
    run = _command_context(ctx, out)
    section = resolve_config(
        run.config,
        "similarity",
        n_neighbors=n_neighbors,
        k=list(k) if k else None,
        tie_break=tie_break,
        mode=mode,
    )
    horizons = section["k"] if isinstance(section["k"], list) else [section["k"]]
    knn = _flag_value(
        TrajectoryNearestNeighbors,
        n_neighbors=section["n_neighbors"],
        tie_break=section["tie_break"],
    )
    _flag_value(PredictionMode, section["mode"])

    target = load_trend(trend)
    if target.kind is TrendKind.PER_UNIT:
        logger.warning("Predicting from a per-unit trend; neighbours are usually cumulative.")
    outcome = load_labels(labels)
    reference = load_trend(reference_trend) if reference_trend is not None else None
    for horizon in horizons:
        if not 1 <= int(horizon) <= target.n_tests:
            raise typer.BadParameter(f"--k {horizon} is outside 1..{target.n_tests}.")

    predictions = []
    for horizon in horizons:
        knn.predict_cohort(target, int(horizon), outcome, section["mode"], reference)
        predictions.extend(knn.predictions_)

    out_dir = _out_dir(run)
    outputs = [write_csv(predictions_to_frame(predictions), out_dir / "predictions.csv")]
    inputs = [trend, labels] + ([reference_trend] if reference_trend is not None else [])
    write_manifest(out_dir, "predict", {"similarity": section}, inputs, outputs, __version__)


def _summary_row(source, k, cutoff, cm, roc_auc=None) -> dict:
    cm_rates = evaluation.rates(cm)
    misclassification = evaluation.misclassification_rate(cm)
    hitting = evaluation.hitting_ratio(cm)
    return {
        "source": source,
        "k": k,
        "cutoff": cutoff,
        "tp": cm.tp,
        "fp": cm.fp,
        "tn": cm.tn,
        "fn": cm.fn,
        "misclassification_rate": misclassification,
        "hitting_ratio": hitting,
        "recall": cm_rates.recall,
        "fpr": cm_rates.fpr,
        "misclassification_display": evaluation.round_half_up(misclassification),
        "hitting_display": evaluation.round_half_up(hitting),
        "roc_auc": roc_auc,
        "note": evaluation.discrepancy_note(cm),
    }


@app.command()
def evaluate(
    ctx: typer.Context,
    predictions: Path = typer.Option(..., "--predictions", help="Prediction CSV."),
    labels: Path = typer.Option(..., "--labels", help="Labels CSV."),
    cutoffs: str | None = typer.Option(None, "--cutoffs", help="e.g. 0.3,0.4,0.5"),
    emit_svg: bool | None = typer.Option(None, "--emit-svg/--no-svg", help="Write SVG curves."),
    abilities: Path | None = typer.Option(
        None, "--abilities", help="Full-matrix abilities CSV for the stump comparison."
    ),
    out: Path | None = typer.Option(None, "--out", help="Output directory."),
):
    """Write confusion matrices, ROC and PR curves, count bars and the stump report."""
    run = _command_context(ctx, out)
    section = resolve_config(run.config, "evaluate", cutoffs=cutoffs, emit_svg=emit_svg)
    cutoff_list = parse_cutoffs(section["cutoffs"])
    section["cutoffs"] = cutoff_list
    if section["bin_width"] <= 0:
        raise typer.BadParameter("bin_width must be positive.")

    frame = load_predictions(predictions)
    outcome = load_labels(labels)
    out_dir = _out_dir(run)
    outputs = []
    summary = []
    bar_cutoffs = sorted(set(cutoff_list) | {i / 10 for i in range(11)})

    for horizon in sorted(frame["k"].unique()):
        horizon = int(horizon)
        subset = frame[frame["k"] == horizon].reset_index(drop=True)
        observed = outcome.align(tuple(subset["student_id"]))

        roc = evaluation.roc_curve(subset, outcome)
        pr = evaluation.pr_curve(subset, outcome)
        roc_auc = evaluation.auc(roc)
        for cutoff in cutoff_list:
            cm = evaluation.confusion(evaluation.classify(subset, cutoff), observed)
            outputs.append(write_csv(cm.to_frame(), out_dir / f"confusion_{horizon}_{cutoff:g}.csv"))
            summary.append(_summary_row("knn", horizon, cutoff, cm, roc_auc))

        outputs.append(
            write_csv(evaluation.curve_to_frame(roc, "fpr", "tpr"), out_dir / f"roc_{horizon}.csv")
        )
        outputs.append(
            write_csv(
                evaluation.curve_to_frame(pr, "recall", "precision"), out_dir / f"pr_{horizon}.csv"
            )
        )
        outputs.append(
            write_csv(
                evaluation.predicted_count_bars(subset, outcome, bar_cutoffs),
                out_dir / f"bars_{horizon}.csv",
            )
        )
        if section["emit_svg"]:
            outputs.append(
                write_curve_svg(
                    [p.x for p in roc],
                    [p.y for p in roc],
                    out_dir / f"roc_{horizon}.svg",
                    title=f"ROC, units 1..{horizon}",
                    xlabel="FPR",
                    ylabel="TPR",
                    diagonal=True,
                )
            )
            outputs.append(
                write_curve_svg(
                    [p.x for p in pr],
                    [p.y for p in pr],
                    out_dir / f"pr_{horizon}.svg",
                    title=f"Recall-precision, units 1..{horizon}",
                    xlabel="Recall",
                    ylabel="Precision",
                )
            )

    summary.append(_summary_row("majority", None, None, evaluation.majority_baseline(outcome)))

    inputs = [predictions, labels]
    if abilities is not None:
        ability_vector = load_abilities(abilities)
        stump = DecisionStump().fit(ability_vector, outcome)
        observed = outcome.align(ability_vector.student_ids)
        cm = evaluation.confusion(stump.predict(ability_vector), observed)
        summary.append(_summary_row("stump", None, None, cm))
        stump_frame = pd.DataFrame(
            [
                {
                    "threshold": stump.threshold_,
                    "training_errors": stump.training_errors_,
                    "misclassification_rate": evaluation.misclassification_rate(cm),
                    "hitting_ratio": evaluation.hitting_ratio(cm),
                    "tp": cm.tp,
                    "fp": cm.fp,
                    "tn": cm.tn,
                    "fn": cm.fn,
                }
            ]
        )
        outputs.append(write_csv(stump_frame, out_dir / "stump.csv"))
        outputs.append(
            write_csv(
                evaluation.ability_histogram(
                    ability_vector, outcome, bin_width=section["bin_width"]
                ),
                out_dir / "histogram.csv",
            )
        )
        outputs.append(
            write_csv(evaluation.group_summary(ability_vector, outcome), out_dir / "groups.csv")
        )
        inputs.append(abilities)

    outputs.append(write_csv(pd.DataFrame(summary), out_dir / "summary.csv"))
    write_manifest(out_dir, "evaluate", {"evaluate": section}, inputs, outputs, __version__)


def main(argv: list[str] | None = None) -> int:
    """
    Runs the command line and returns its exit code instead of exiting.

    Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numerical failure.
    """
    try:
        result = app(args=argv, prog_name="lcta", standalone_mode=False)
    except click.exceptions.UsageError as err:
        err.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except NumericalError as err:
        logger.error("Numerical failure: %s", err)
        return EXIT_NUMERICAL
    except (LCTAError, OSError) as err:
        logger.error("%s: %s", type(err).__name__, err)
        return EXIT_DATA
    return result if isinstance(result, int) else EXIT_OK


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())
