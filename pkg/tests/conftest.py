from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def pipeline_run(fixtures_dir, tmp_path_factory):
    """One shared fixture-pipeline run: vocab through dataset."""
    from esglm.cli import main

    out = tmp_path_factory.mktemp("pipeline")
    cfg = str(fixtures_dir / "fixture.cfg")
    steps = [
        ["vocab", "--config", cfg, "--corpus", str(fixtures_dir / "corpus"),
         "--out", str(out / "vocab.txt")],
        ["pretrain", "--config", cfg, "--corpus", str(fixtures_dir / "corpus"),
         "--vocab", str(out / "vocab.txt"), "--out", str(out / "pre.ckpt")],
        ["extract", "--config", cfg,
         "--manifest", str(fixtures_dir / "filings.jsonl"),
         "--vocab", str(out / "vocab.txt"), "--ckpt", str(out / "pre.ckpt"),
         "--out", str(out / "extracted.jsonl")],
        ["dataset", "--config", cfg,
         "--extracted", str(out / "extracted.jsonl"),
         "--scores", str(fixtures_dir / "scores.csv"),
         "--task", "a", "--seed", "0", "--out", str(out / "data")],
    ]
    for step in steps:
        assert main(step) == 0, f"pipeline step failed: {step[0]}"
    return out
