import numpy as np
import pytest

from resp3d import _kernels
from resp3d.tensor import precision


@pytest.fixture(params=_kernels.available_backends())
def backend(request):
    """Run the test once per kernel backend."""
    previous = _kernels.use_backend(request.param)
    yield request.param
    _kernels.use_backend(previous)


@pytest.fixture
def f64():
    with precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_small(tmp_path_factory):
    """Twelve short toy videos on disk (train) and eight (val)."""
    from resp3d import trainer as tr

    root = tmp_path_factory.mktemp("toy")
    spec = tr.ToyDatasetSpec(num_videos=12, frames=8, image_size=32, shape_size=6)
    train = tr.generate_toy_dataset(spec, 0, root / "train")
    val = tr.generate_toy_dataset(tr.ToyDatasetSpec(num_videos=8, frames=8, image_size=32, shape_size=6),
                                  1, root / "val")
    return root, train, val
