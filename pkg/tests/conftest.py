"""pytest fixtures"""
import pytest

from timelyrec.data import dataset_from_frame
from timelyrec.model import ModelConfig, TimelyRec
from timelyrec.synth import SyntheticSpec, generate

# radius (1, 1, 2, 2) for month, day_of_week, date, hour
TINY_RADIUS = {"month": 1, "day_of_week": 1, "date": 2, "hour": 2}


@pytest.fixture
def tiny_config():
    """A d=4 model with every granularity, l=2 and one hidden layer of width 3"""
    return ModelConfig(
        n_users=3,
        n_items=4,
        dim=4,
        history_length=2,
        window_radius=dict(TINY_RADIUS),
        hidden=(3,),
        dropout=0.0,
    )


@pytest.fixture
def tiny_model(tiny_config):
    return TimelyRec(tiny_config, seed=5)


@pytest.fixture
def write_lines(tmpdir):
    """Factory writing lines to a file in tmpdir and returning its path"""

    def write(lines, name="interactions.tsv"):
        path = tmpdir.join(name)
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return str(path)

    return write


@pytest.fixture
def small_dataset():
    """20 users with 12 planted interactions each over 30 items"""
    spec = SyntheticSpec(
        n_users=20, n_items=30, interactions_per_user=12, favorites=4, weeks=20, seed=3
    )
    frame, _ = generate(spec)
    return dataset_from_frame(frame)
