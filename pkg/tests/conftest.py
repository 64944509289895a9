"""Shared fixtures for full-corpus runs and the acceptance summary."""

from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from vitaltraj import io
from vitaltraj.cluster import cluster_epochs, outlier_scores
from vitaltraj.dtw import DtwConfig
from vitaltraj.pipeline import analyze_records, load_or_compute_matrix, matrix_meta
from vitaltraj.preprocess import PreprocessConfig, build_epochs
from vitaltraj.synth import DEFAULT_SEED, SynthConfig, epoch_truth, generate_corpus

ROBUST_SEEDS = tuple(DEFAULT_SEED + k for k in range(10))

CRITERIA = {
    1: "synthetic reproduction (5 clusters, purity, runtime)",
    2: "outlier ranking",
    3: "DTW oracle equivalence",
    4: "linkage oracle equivalence",
    5: "MDS recovery",
    6: "preprocessing oracles",
    7: "determinism",
}

_outcomes: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): test belongs to acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        notes = [v for k, v in item.user_properties if k == "detail"]
        _outcomes.setdefault(marker.args[0], []).append((item.name, rep.outcome, notes))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        runs = _outcomes.get(n)
        if not runs:
            terminalreporter.write_line(f"criterion {n} [{title}]: NOT RUN")
            continue
        ok = all(o == "passed" for _, o, _ in runs)
        skipped = all(o == "skipped" for _, o, _ in runs)
        status = "SKIPPED" if skipped else ("PASS" if ok else "FAIL")
        failed = [name for name, o, _ in runs if o == "failed"]
        extra = f" (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {n} [{title}]: {status}{extra}")
        for name, _, notes in runs:
            for note in notes:
                terminalreporter.write_line(f"    {name}: {note}")


@dataclass
class SeedRun:
    seed: int
    config: SynthConfig
    epochs: list
    matrix: object
    assignment: object
    truth: list
    seconds: float = 0.0

    @property
    def truth_by_id(self):
        return {e.epoch_id: t.label for e, t in zip(self.epochs, self.truth)}

    def scores(self):
        return dict(outlier_scores(self.matrix))


@pytest.fixture(scope="session")
def published_run(tmp_path_factory):
    """Default corpus at the published seed, analysed from scratch on one thread."""
    config = SynthConfig()
    records = generate_corpus(config)
    work = tmp_path_factory.mktemp("published")
    t0 = time.perf_counter()
    result = analyze_records(records, PreprocessConfig(), DtwConfig(), threads=1)
    seconds = time.perf_counter() - t0
    csv_path = work / "corpus.csv"
    io.write_patients(csv_path, records)
    cache = work / "matrix.dtwm"
    io.write_matrix(cache, result.matrix, matrix_meta(result.fingerprint, DtwConfig()))
    run = SeedRun(
        config.seed, config, result.epochs, result.matrix, result.assignment,
        epoch_truth(result.epochs, config), seconds,
    )
    return {"run": run, "result": result, "csv": csv_path, "cache": cache, "dir": work}


@pytest.fixture(scope="session")
def seed_runs(published_run, request):
    """One analysed corpus per robustness seed; matrices are cached across sessions by fingerprint."""
    cache_dir = request.config.cache.mkdir("vitaltraj-matrices")
    runs = []
    for seed in ROBUST_SEEDS:
        if seed == DEFAULT_SEED:
            runs.append(published_run["run"])
            continue
        config = SynthConfig(seed=seed)
        epochs, _ = build_epochs(generate_corpus(config), PreprocessConfig())
        t0 = time.perf_counter()
        matrix, _, _ = load_or_compute_matrix(epochs, DtwConfig(), cache_dir / f"seed-{seed}.dtwm")
        seconds = time.perf_counter() - t0
        _, assignment = cluster_epochs(matrix)
        runs.append(SeedRun(seed, config, epochs, matrix, assignment, epoch_truth(epochs, config), seconds))
    return runs
