import pytest

from merit.study import StudyConfig, run_study, synthetic_fixture, write_fixture


@pytest.fixture(scope="session")
def fixture_small():
    """90-day synthetic market shared across test modules."""
    return synthetic_fixture(seed=3, n_hours=2160)


@pytest.fixture(scope="session")
def study_env(tmp_path_factory, fixture_small):
    """Fixture files, config, and one executed study bundle (B=100)."""
    root = tmp_path_factory.mktemp("study")
    paths = write_fixture(fixture_small, str(root / "fx"))
    out = root / "results"
    config = StudyConfig(
        prices=paths["prices"],
        generation=paths["generation"],
        bootstrap_replicates=100,
        seed=11,
        output_dir=str(out),
    )
    bundle = run_study(config)
    bundle.write(str(out))
    return {
        "config": config,
        "bundle": bundle,
        "outdir": out,
        "fixture": fixture_small,
        "root": root,
    }
