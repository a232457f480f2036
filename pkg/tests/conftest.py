import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `import oracles` work

from scoutval import synth


@pytest.fixture(scope="session")
def small_synth():
    """A quick dataset shared by tests that only need plausible shapes."""
    config = synth.SynthConfig(
        n_players=60, weeks=16, embedding_dim=4, noise_sigma=0.08, seed=3
    )
    dataset, truth = synth.generate(config)
    return config, dataset, truth
