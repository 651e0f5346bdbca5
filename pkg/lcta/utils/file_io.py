from pathlib import Path
import hashlib
import logging

import matplotlib
from matplotlib.figure import Figure
import pandas as pd
import yaml

from lcta.config import cfg_colors

logger = logging.getLogger(__name__)

# SVG viewport in pixels; matplotlib works in points at 72 dpi
SVG_SIZE_PX = 600


def write_csv(frame: pd.DataFrame, file_path: str | Path) -> Path:
    """
    Writes a frame as UTF-8 CSV with LF line endings, no index and ``NA`` for missing values.

    Floats are written at full ``repr`` precision so a reload reproduces them exactly.

    Args:
        frame (pd.DataFrame): The table to write.
        file_path (str or Path): Destination file.

    Returns:
        Path: The written file.
    """
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(file_path, index=False, na_rep="NA", lineterminator="\n", encoding="utf-8")
    logger.debug("Wrote %s (%d rows).", file_path, len(frame))
    return file_path


def file_digest(file_path: str | Path) -> str:
    """SHA-256 hex digest of a file's bytes."""
    sha = hashlib.sha256()
    with open(file_path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def write_manifest(
    out_dir: str | Path,
    command: str,
    config: dict,
    inputs: list[str | Path],
    outputs: list[str | Path],
    version: str,
) -> Path:
    """
    Writes ``<command>_manifest.yaml`` describing one CLI run.

    The manifest holds the tool version, the fully resolved configuration, the SHA-256 digest
    of every input file and the sorted names of the written outputs. It carries no timestamp, so
    repeated runs on identical inputs produce identical manifests.

    Args:
        out_dir (str or Path): Output directory of the run.
        command (str): Subcommand name.
        config (dict): Resolved configuration.
        inputs (list): Input file paths.
        outputs (list): Output file paths.
        version (str): Package version.

    Returns:
        Path: The manifest file.
    """
    out_dir = Path(out_dir)
    manifest = {
        "tool": "lcta",
        "version": version,
        "command": command,
        "config": config,
        "inputs": {Path(p).name: file_digest(p) for p in inputs},
        "outputs": sorted(Path(p).name for p in outputs),
    }
    manifest_path = out_dir / f"{command}_manifest.yaml"
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as handle:
        yaml.safe_dump(manifest, handle, sort_keys=True, default_flow_style=False)
    return manifest_path


def write_curve_svg(
    x,
    y,
    file_path: str | Path,
    title: str,
    xlabel: str,
    ylabel: str,
    diagonal: bool = False,
) -> Path:
    """
    Writes a curve as a standalone 600x600 SVG polyline plot.

    Points with a missing coordinate are dropped. The SVG carries no date and uses a fixed
    hash salt so identical curves produce identical files.

    Args:
        x (array_like): Horizontal coordinates (FPR or recall).
        y (array_like): Vertical coordinates (TPR or precision).
        file_path (str or Path): Destination file.
        title (str): Plot title.
        xlabel (str): Label for the horizontal axis.
        ylabel (str): Label for the vertical axis.
        diagonal (bool): Draw the chance diagonal (for ROC plots).

    Returns:
        Path: The written file.
    """
    points = [
        (float(px), float(py))
        for px, py in zip(x, y)
        if px is not None and py is not None and px == px and py == py
    ]
    size = SVG_SIZE_PX / 72
    with matplotlib.rc_context({"svg.hashsalt": "lcta", "svg.fonttype": "none"}):
        fig = Figure(figsize=(size, size), dpi=72)
        ax = fig.add_subplot(1, 1, 1)
        if diagonal:
            ax.plot([0, 1], [0, 1], linestyle="--", color=cfg_colors["curve"][2], linewidth=1)
        if points:
            xs, ys = zip(*points)
            ax.plot(xs, ys, marker="o", color=cfg_colors["curve"][0], linewidth=2)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        file_path = Path(file_path)
        fig.savefig(file_path, format="svg", metadata={"Date": None})
    return file_path
