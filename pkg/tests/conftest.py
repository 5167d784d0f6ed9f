import pytest

from synapcount.batch import BatchConfig, save_config

from synthgen import make_neuron, write_group


@pytest.fixture
def batch_dir(tmp_path):
    """A 3-group fixture directory plus its matching config file."""
    neurons = {f"n{i + 1}": make_neuron(100 + i) for i in range(3)}
    for stem, neuron in neurons.items():
        write_group(tmp_path, stem, neuron)
    cfg = BatchConfig(analysis=next(iter(neurons.values())).config)
    cfg_path = tmp_path / "config.json"
    save_config(cfg, cfg_path)
    return tmp_path, cfg, cfg_path, neurons
