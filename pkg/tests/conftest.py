"""Shared fixtures: synthetic image datasets and dataset-directory discovery.

Real-data tests look for the four standard IDX files under
$RRNN_DATA_DIR/<dataset>/ (default ./data/<dataset>/) and skip with an
explanation when absent, so the suite is runnable without any downloads.
"""

from __future__ import annotations

import os

import numpy as np
import pytest

from rrnn import idx

DATA_ENV = "RRNN_DATA_DIR"


def dataset_dir(name: str) -> str:
    root = os.environ.get(DATA_ENV, "./data")
    return os.path.join(root, name)


def dataset_available(name: str) -> bool:
    d = dataset_dir(name)
    try:
        for base in [f for pair in idx.SPLIT_FILES.values() for f in pair]:
            if not (os.path.exists(os.path.join(d, base))
                    or os.path.exists(os.path.join(d, base + ".gz"))):
                return False
    except OSError:
        return False
    return True


def require_dataset(name: str) -> str:
    if not dataset_available(name):
        pytest.skip(
            f"{name} IDX files not found under {dataset_dir(name)} "
            f"(set ${DATA_ENV}; see README for the expected layout)"
        )
    return dataset_dir(name)


def make_blob_images(
    n: int, side: int = 12, classes: int = 3, noise: float = 150.0, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Separable synthetic images: a class-specific bright patch plus noise.

    Noise is strong enough that samples of one class are far from collinear,
    which keeps kernel features out of tanh saturation.
    """
    r = np.random.default_rng(seed)
    anchors = [(1, 1), (1, side - 5), (side - 5, (side - 4) // 2), (3, 3), (5, 5)]
    labels = r.integers(0, classes, n)
    images = r.uniform(0.0, noise, (n, side, side))
    for i, c in enumerate(labels):
        rr, cc = anchors[c % len(anchors)]
        images[i, rr : rr + 4, cc : cc + 4] += 90.0
    return np.clip(images, 0.0, 255.0), labels


@pytest.fixture
def blob_set():
    images, labels = make_blob_images(400, seed=11)
    return images, labels


@pytest.fixture
def synthetic_data_dir(tmp_path):
    """A custom-idx dataset directory with the four standard files."""
    train_images, train_labels = make_blob_images(500, seed=21)
    test_images, test_labels = make_blob_images(160, seed=22)
    d = tmp_path / "blobs"
    d.mkdir()
    idx.write_idx_images(str(d / "train-images-idx3-ubyte"), train_images)
    idx.write_idx_labels(str(d / "train-labels-idx1-ubyte"), train_labels)
    idx.write_idx_images(str(d / "t10k-images-idx3-ubyte"), test_images)
    idx.write_idx_labels(str(d / "t10k-labels-idx1-ubyte"), test_labels)
    return str(d)


# ------------------------------------------------------------------ report
# One visible line per acceptance check at the end of the run.

_acceptance_results: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if "test_acceptance" not in str(item.fspath):
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        name = item.name
        if report.passed:
            _acceptance_results[name] = "PASS"
        elif report.failed:
            _acceptance_results[name] = "FAIL"
        elif report.skipped:
            reason = ""
            if isinstance(report.longrepr, tuple):  # (path, lineno, "Skipped: why")
                reason = report.longrepr[2]
            elif report.longrepr is not None:
                reason = str(report.longrepr)
            reason = reason.split("Skipped:", 1)[-1].strip()
            _acceptance_results[name] = f"SKIP ({reason})"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        terminalreporter.write_line(f"{_acceptance_results[name]:<5} {name}")
