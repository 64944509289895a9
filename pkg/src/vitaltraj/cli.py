"""``vitaltraj`` command line: generate, analyze, embed.

Exit codes: 0 ok, 1 usage or configuration error, 2 data error, 3 internal
error. Failures print one line to stderr of the form
``vitaltraj: error[<kind>]: <message>``.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import io
from .dtw import DtwConfig
from .errors import ConfigError, DataError
from .pipeline import analyze_records, embed_matrix, matrix_meta, report_text, write_outliers
from .preprocess import PreprocessConfig
from .svg import scatter_svg
from .synth import DEFAULT_PERTURBED_FILES, DEFAULT_SEED, SynthConfig, abnormal_minutes, generate_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("vitaltraj")


def _load_config(path):
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object keyed by command name")
    out = {}
    for section, values in raw.items():
        if section not in ("generate", "analyze", "embed"):
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        out[section] = {k.replace("-", "_"): v for k, v in values.items()}
    return out


def _check_config_keys(ctx):
    # Typos in a config file would otherwise be ignored silently.
    if not ctx.default_map:
        return
    known = {p.name for p in ctx.command.params}
    unknown = sorted(set(ctx.default_map) - known)
    if unknown:
        raise ConfigError(f"unknown keys for {ctx.info_name!r} in config file: {', '.join(unknown)}")


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, _):
        pass


def _setup_logging(level):
    logger = logging.getLogger("vitaltraj")
    logger.setLevel(level)
    if not any(isinstance(h, _StderrHandler) for h in logger.handlers):
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("vitaltraj: %(levelname)s: %(message)s"))
        logger.addHandler(handler)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON file of per-command defaults; flags win.")
@click.option("-v", "--verbose", count=True, help="More log output (repeatable).")
@click.pass_context
def main(ctx, config_path, verbose):
    """Abnormal trajectory detection in multichannel vital-sign series."""
    _setup_logging(logging.WARNING - 10 * min(verbose, 2))
    if config_path:
        ctx.default_map = _load_config(config_path)


def _parse_perturbed(text: str):
    """``"0:1,1:1,2:2"`` -> ((0, 1), (1, 1), (2, 2)); empty string for none."""
    if not text.strip():
        return ()
    out = []
    for item in text.split(","):
        idx, sep, kind = item.strip().partition(":")
        if not sep:
            raise ConfigError(f"bad --perturbed entry {item!r}; expected INDEX:TYPE")
        try:
            out.append((int(idx), int(kind)))
        except ValueError:
            raise ConfigError(f"bad --perturbed entry {item!r}; expected INDEX:TYPE") from None
    return tuple(out)


DEFAULT_PERTURBED_ARG = ",".join(f"{i}:{int(t)}" for i, t in DEFAULT_PERTURBED_FILES)


@main.command()
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Corpus CSV to write.")
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--patients", type=int, default=SynthConfig.n_patients, show_default=True)
@click.option("--days", type=int, default=SynthConfig.duration_days, show_default=True)
@click.option("--perturbed", default=DEFAULT_PERTURBED_ARG, show_default=True, help="INDEX:TYPE pairs, comma separated.")
@click.option("--diurnal-amplitude", type=float, default=SynthConfig.diurnal_amplitude, show_default=True)
@click.option("--secondary-amplitude", type=float, default=SynthConfig.secondary_amplitude, show_default=True)
@click.option("--noise-scale", type=float, default=SynthConfig.noise_scale, show_default=True)
@click.option("--perturbation-fraction", type=float, default=SynthConfig.perturbation_fraction, show_default=True)
@click.option("--perturbation-sigma", type=float, default=SynthConfig.perturbation_sigma, show_default=True)
@click.option("--ramp-minutes", type=int, default=SynthConfig.ramp_minutes, show_default=True,
              help="Rise time of type 2/3 perturbations; negative ramps over the whole window.")
@click.option("--two-channel-norm", type=click.Choice(["vector", "channel"]), default=SynthConfig.two_channel_norm, show_default=True)
@click.pass_context
def generate(ctx, out_path, seed, patients, days, perturbed, diurnal_amplitude, secondary_amplitude,
             noise_scale, perturbation_fraction, perturbation_sigma, ramp_minutes, two_channel_norm):
    """Write a synthetic HR/RR corpus with known abnormal segments."""
    _check_config_keys(ctx)
    config = SynthConfig(
        n_patients=patients,
        duration_days=days,
        diurnal_amplitude=diurnal_amplitude,
        secondary_amplitude=secondary_amplitude,
        noise_scale=noise_scale,
        perturbation_fraction=perturbation_fraction,
        perturbation_sigma=perturbation_sigma,
        ramp_minutes=None if ramp_minutes < 0 else ramp_minutes,
        two_channel_norm=two_channel_norm,
        perturbed_files=_parse_perturbed(perturbed),
        seed=seed,
    )
    io.write_patients(out_path, generate_corpus(config))
    kinds = [int(t) for _, t in config.perturbed_files]
    minutes = abnormal_minutes(config)
    start, stop = config.window
    click.echo(f"files: {config.n_patients} ({config.n_samples} samples each)")
    click.echo(
        f"perturbed files: {len(kinds)} ("
        + ", ".join(f"type {t}: {kinds.count(t)}" for t in (1, 2, 3))
        + f"); window minutes {start}..{stop - 1}"
    )
    click.echo(f"abnormal data: {minutes} minutes, {minutes / 60:.1f} abnormal hours")
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Corpus CSV.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False), help="Directory for artifacts.")
@click.option("--epoch-minutes", type=int, default=180, show_default=True)
@click.option("--median-window", type=int, default=25, show_default=True)
@click.option("--gap-tolerance", type=int, default=5, show_default=True, help="Longest gap (minutes) bridged by interpolation.")
@click.option("--band", type=int, default=None, help="Sakoe-Chiba band radius; unconstrained when omitted.")
@click.option("--channels", default=None, help="Comma-separated channels to use (default: all present).")
@click.option("--matrix-cache", type=click.Path(dir_okay=False), default=None, help="Reuse or store the distance matrix here.")
@click.option("--clusters", type=int, default=None, help="Fixed cluster count instead of the gap rule.")
@click.option("--threshold", type=float, default=None, help="Linkage distance cut instead of the gap rule.")
@click.option("--embed/--no-embed", default=False, help="Also write the 2-D embedding and its SVG.")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads for the distance matrix.")
@click.pass_context
def analyze(ctx, in_path, out_dir, epoch_minutes, median_window, gap_tolerance, band, channels,
            matrix_cache, clusters, threshold, embed, threads):
    """Epoch, compare, cluster and rank a corpus."""
    _check_config_keys(ctx)
    if clusters is not None and threshold is not None:
        raise click.UsageError("--clusters and --threshold are mutually exclusive")
    pconf = PreprocessConfig(epoch_minutes=epoch_minutes, median_window=median_window, gap_tolerance_minutes=gap_tolerance)
    dconf = DtwConfig(band_radius=band)
    names = [c.strip() for c in channels.split(",")] if channels else None
    records = io.read_patients(in_path, channels=names)
    result = analyze_records(
        records, pconf, dconf, threads=threads,
        matrix_cache=Path(matrix_cache) if matrix_cache else None,
        threshold=threshold, k=clusters,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_matrix(out / "matrix.dtwm", result.matrix, matrix_meta(result.fingerprint, dconf))
    io.write_epoch_index(out / "epochs.csv", result.epochs)
    io.write_dendrogram(out / "dendrogram.csv", result.dendrogram)
    io.write_assignment(out / "assignment.csv", result.assignment)
    write_outliers(out / "outliers.csv", result)
    text = report_text(result)
    (out / "report.txt").write_text(text)
    if embed:
        _write_embedding(out / "embedding.svg", result.matrix, result.assignment, None, None)
    click.echo(("matrix: reused cache\n" if result.matrix_from_cache else "") + text, nl=False)


def _write_embedding(svg_path: Path, matrix, assignment, index, patient):
    embedding = embed_matrix(matrix)
    io.write_embedding(svg_path.with_suffix(".csv"), embedding)
    labels = None
    if assignment is not None:
        lab = assignment.as_dict()
        missing = [e for e in matrix.epoch_ids if e not in lab]
        if missing:
            raise DataError(f"assignment lacks {len(missing)} epochs of the matrix (first: {missing[0]})")
        labels = [lab[e] for e in matrix.epoch_ids]
    trail = None
    if patient is not None:
        spans = {eid: (pid, start) for eid, pid, start, _ in index}
        available = sorted({pid for pid, _ in spans.values()})
        if patient not in available:
            raise DataError(f"unknown patient {patient!r}; available: {', '.join(available)}")
        rows = [(spans[e][1], k) for k, e in enumerate(matrix.epoch_ids) if e in spans and spans[e][0] == patient]
        trail = [k for _, k in sorted(rows)]
    title = f"{matrix.n_epochs} epochs, stress-1 {embedding.stress:.3f}"
    svg_path.write_text(scatter_svg(embedding.coordinates, labels, trail, title, patient or ""))
    return embedding


@main.command()
@click.option("--matrix", "matrix_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--assignment", "assignment_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--epochs", "epochs_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Epoch index CSV; defaults to epochs.csv beside the matrix.")
@click.option("--highlight-patient", default=None, help="Join this patient's epochs in time order.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="SVG path; coordinates go to the same name with .csv.")
@click.pass_context
def embed(ctx, matrix_path, assignment_path, epochs_path, highlight_patient, out_path):
    """Classical MDS of a stored distance matrix, as CSV and SVG."""
    _check_config_keys(ctx)
    matrix = io.read_matrix(matrix_path)
    assignment = io.read_assignment(assignment_path) if assignment_path else None
    index = None
    if highlight_patient is not None:
        if epochs_path is None:
            sibling = Path(matrix_path).with_name("epochs.csv")
            if not sibling.exists():
                raise click.UsageError("--highlight-patient needs --epochs (no epochs.csv beside the matrix)")
            epochs_path = sibling
        index = io.read_epoch_index(epochs_path)
    out = Path(out_path)
    if out.suffix.lower() != ".svg":
        raise click.UsageError("--out must end in .svg")
    embedding = _write_embedding(out, matrix, assignment, index, highlight_patient)
    click.echo(
        f"embedded {len(embedding.points)} epochs; stress-1 {embedding.stress:.4f}; "
        f"negative eigenvalue mass {embedding.negative_mass_fraction:.4f}"
    )
    click.echo(f"wrote {out} and {out.with_suffix('.csv')}")


def _fail(kind: str, message: str, code: int) -> int:
    click.echo(f"vitaltraj: error[{kind}]: {' '.join(str(message).split())}", err=True)
    return code


def run(argv=None) -> int:
    """Entry point returning the exit code instead of exiting."""
    try:
        main.main(args=argv, prog_name="vitaltraj", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return _fail("usage", "aborted", EXIT_USAGE)
    except click.ClickException as exc:
        return _fail("usage", exc.format_message(), EXIT_USAGE)
    except ConfigError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except DataError as exc:
        return _fail("data", exc, EXIT_DATA)
    except OSError as exc:
        return _fail("data", exc, EXIT_DATA)
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal exit code
        log.debug("internal error", exc_info=True)
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)
    return EXIT_OK


def entry() -> None:
    sys.exit(run())
