"""Shared fixtures: real datasets exported by the decoding engine's CLI.

The trainer only understands the engine's files, so every fixture shells
out to the installed ``windec`` binary and hands back paths.  Exports are
deterministic (seeded), so fixture content is stable across runs.
"""

import shutil
import subprocess

import pytest


def _windec(*args):
    exe = shutil.which("windec")
    if exe is None:
        pytest.skip("windec CLI not installed")
    proc = subprocess.run([exe, *args], capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(
            f"windec {' '.join(args)} failed: {proc.stderr.strip()}")


@pytest.fixture(scope="session")
def export_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("exports")


@pytest.fixture(scope="session")
def tiny_export(export_dir):
    """d=3, N=6 (two windows), 120 shots at p=0.01 - fast unit fodder."""
    prefix = export_dir / "tiny"
    _windec("export-dataset", "--distance=3", "--p=0.01",
            "--rounds-multiples=2", "--shots=120", "--seed=7",
            "--truncated-labels=1", f"--output-prefix={prefix}")
    return {
        "prefix": str(prefix),
        "initial": f"{prefix}-N6-initial.wdt",
        "final": f"{prefix}-N6-final.wdt",
        "grouped": f"{prefix}-N6-grouped.wdg",
        "labels": f"{prefix}-N6-labels.wdl",
        "trunc": f"{prefix}-N6-tlabels.wdtl",
    }


@pytest.fixture(scope="session")
def mixed_export(export_dir):
    """d=3 shards over N in {9, 12, 15} - the mixed-window recipe."""
    prefix = export_dir / "mixed"
    _windec("export-dataset", "--distance=3", "--p=0.005",
            "--rounds-multiples=3,4,5", "--shots=100", "--seed=11",
            "--truncated-labels=1", f"--output-prefix={prefix}")
    out = {"prefix": str(prefix)}
    for n in (9, 12, 15):
        for kind in ("initial", "final", "bulk"):
            out[f"N{n}-{kind}"] = f"{prefix}-N{n}-{kind}.wdt"
        out[f"N{n}-grouped"] = f"{prefix}-N{n}-grouped.wdg"
        out[f"N{n}-labels"] = f"{prefix}-N{n}-labels.wdl"
        out[f"N{n}-trunc"] = f"{prefix}-N{n}-tlabels.wdtl"
    return out


@pytest.fixture(scope="session")
def train_export(export_dir):
    """Pretraining pool: d=3, N=9 (three windows), p=0.005."""
    prefix = export_dir / "train"
    _windec("export-dataset", "--distance=3", "--p=0.005",
            "--rounds-multiples=3", "--shots=1500", "--seed=101",
            "--truncated-labels=1", f"--output-prefix={prefix}")
    return {
        "prefix": str(prefix),
        "shards": [f"{prefix}-N9-{k}.wdt"
                   for k in ("initial", "bulk", "final")],
        "grouped": f"{prefix}-N9-grouped.wdg",
        "labels": f"{prefix}-N9-labels.wdl",
        "trunc": f"{prefix}-N9-tlabels.wdtl",
    }


@pytest.fixture(scope="session")
def finetune_export(export_dir):
    """Global-label-only pool at the evaluation noise level p=0.003."""
    prefix = export_dir / "finetune"
    _windec("export-dataset", "--distance=3", "--p=0.003",
            "--rounds-multiples=3", "--shots=1200", "--seed=404",
            f"--output-prefix={prefix}")
    return {
        "grouped": f"{prefix}-N9-grouped.wdg",
        "labels": f"{prefix}-N9-labels.wdl",
    }


@pytest.fixture(scope="session")
def eval_export(export_dir):
    """Held-out evaluation shots: d=3, N=9, p=0.003."""
    prefix = export_dir / "eval"
    _windec("export-dataset", "--distance=3", "--p=0.003",
            "--rounds-multiples=3", "--shots=4096", "--seed=202",
            f"--output-prefix={prefix}")
    return {
        "grouped": f"{prefix}-N9-grouped.wdg",
        "labels": f"{prefix}-N9-labels.wdl",
    }


@pytest.fixture(scope="session")
def capacity_export(export_dir):
    """The fixed memorization pool: 3334 shots x 3 windows = 10002 records."""
    prefix = export_dir / "capacity"
    _windec("export-dataset", "--distance=3", "--p=0.005",
            "--rounds-multiples=3", "--shots=3334", "--seed=303",
            f"--output-prefix={prefix}")
    return {
        "shards": [f"{prefix}-N9-{k}.wdt"
                   for k in ("initial", "bulk", "final")],
    }


@pytest.fixture(scope="session")
def m1_export(export_dir):
    """Single-window case: d=3, N=3, so the combiner sees m=1."""
    prefix = export_dir / "single"
    _windec("export-dataset", "--distance=3", "--p=0.008",
            "--rounds-multiples=1", "--shots=320", "--seed=55",
            f"--output-prefix={prefix}")
    return {
        "initial": f"{prefix}-N3-initial.wdt",
        "final": f"{prefix}-N3-final.wdt",
        "grouped": f"{prefix}-N3-grouped.wdg",
        "labels": f"{prefix}-N3-labels.wdl",
    }
