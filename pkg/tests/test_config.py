import pytest

from momentbnn import config
from momentbnn.errors import ConfigError


def test_defaults():
    cfg = config.loads("")
    assert cfg.train.epochs == 10000 and cfg.train.batch_size == 64
    assert cfg.architecture.hidden_sizes == (4,)
    assert cfg.grid == (-1.5, 1.5, 201)
    assert cfg.sweep.widths == (4, 8, 16, 32, 64, 128, 256)


def test_round_trip_through_dict():
    text = """
[data]
x_low = -1.0
[architecture]
hidden_sizes = [8, 3]
head_mode = "split"
slope = 0.2
[train]
epochs = 7
learning_rate = 0.005
[prior]
var_spike = 1e-4
[sweep]
widths = [2, 3]
modes = ["split"]
[eval]
grid = [-2, 2, 5]
"""
    cfg = config.loads(text)
    again = config.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert again.train.prior.var_spike == 1e-4
    assert again.architecture.head_mode.value == "split"


def test_overrides():
    cfg = config.with_overrides(config.loads(""), seed=5, epochs=9, widths=[4],
                                modes=["embedded"], grid=(-1.0, 1.0, 3))
    assert cfg.train.seed == 5 and cfg.train.epochs == 9
    assert cfg.sweep.widths == (4,) and cfg.sweep.modes == ("embedded",)
    assert cfg.grid == (-1.0, 1.0, 3)


@pytest.mark.parametrize(
    "text,match",
    [
        ("[trian]\n", "unknown section"),
        ("[train]\nepoch = 3\n", "unknown key 'epoch'"),
        ("[train]\nepochs = 1.5\n", "train.epochs"),
        ("[train]\nepochs = true\n", "train.epochs"),
        ("[architecture]\nhead_mode = \"both\"\n", "head mode"),
        ("[eval]\ngrid = [1, 2]\n", "grid"),
        ("[train]\nepochs = 0\n", "epochs"),
        ("[sweep]\nwidths = [0]\n", "widths"),
        ("[train\n", "parse error"),
    ],
)
def test_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        config.loads(text)
