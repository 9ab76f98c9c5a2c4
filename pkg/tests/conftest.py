import pytest

from binreg.synth import DatasetConfig, generate_dataset, load_dataset

SMOKE_CONFIG = DatasetConfig(
    width=32,
    height=32,
    train_one_line=24,
    train_two_line=24,
    test_clear=16,
    test_ambiguous=16,
)


@pytest.fixture(scope="session")
def smoke_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke_data")
    generate_dataset(SMOKE_CONFIG, 2024, out)
    return out


@pytest.fixture(scope="session")
def smoke_dataset(smoke_dataset_dir):
    return load_dataset(smoke_dataset_dir)
