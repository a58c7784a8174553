import time
from dataclasses import dataclass

import pytest
import torch

torch.set_num_threads(min(torch.get_num_threads(), 4))

_ACCEPTANCE_RESULTS: list[tuple[str, str, float, float]] = []


@dataclass
class CriterionTimer:
    """Times one acceptance criterion and records its verdict for the
    end-of-run summary. ``setup_s`` accounts for work done in shared
    fixtures (e.g. the toy training runs)."""

    name: str
    limit_s: float
    setup_s: float = 0.0
    start: float = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start + self.setup_s
        verdict = "PASS" if exc_type is None else "FAIL"
        _ACCEPTANCE_RESULTS.append((self.name, verdict, elapsed, self.limit_s))
        return False


@pytest.fixture
def criterion():
    return CriterionTimer


@pytest.fixture(scope="session")
def toy_workspace(tmp_path_factory):
    """Synthetic per-garment dataset plus three trained toy runs (seeds 0-2,
    2,000 steps each). Shared by the end-to-end acceptance criteria."""
    from tryon import toytask, training

    t_start = time.perf_counter()
    root = tmp_path_factory.mktemp("toy_workspace")
    dataset_dir = root / "dataset"
    manifest = toytask.build_toy_dataset(dataset_dir)
    runs = []
    for seed in (0, 1, 2):
        cfg = toytask.toy_train_config(seed=seed, max_steps=2000,
                                       n_train_records=len(manifest.records) - 3)
        trainer = training.GarmentTrainer(dataset_dir, cfg, root / f"run{seed}")
        untrained = trainer.evaluate()
        result = trainer.train()
        runs.append({
            "seed": seed,
            "untrained": untrained,
            "final": result.evaluations[-1],
            "result": result,
            "run_dir": root / f"run{seed}",
        })
    return {"dataset_dir": dataset_dir, "manifest": manifest, "runs": runs,
            "elapsed_s": time.perf_counter() - t_start}


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, elapsed, limit in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(
            f"ACCEPTANCE {name}: {verdict} ({elapsed:.1f}s, limit {limit:.0f}s)")
