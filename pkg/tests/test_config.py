import numpy as np
import pytest

from vtsnn.config import (
    TrainConfig, decode_weights, encode_weights, load_weights, parse_architecture,
    parse_train_config, render_architecture, save_weights,
)
from vtsnn.errors import ConfigError, ParseError, ShapeError
from vtsnn.models import build_tactile_snn, build_vtsnn
from vtsnn.training import init_weights


def test_architecture_round_trip():
    net = build_vtsnn(20)
    text = render_architecture(net)
    again = parse_architecture(text)
    assert render_architecture(again) == text
    assert again.parameter_count() == net.parameter_count()
    assert again.branches[1].layers[0].n_out == 6200


def test_architecture_errors():
    with pytest.raises(ParseError) as err:
        parse_architecture("branch t\ndense 4 x\n")
    assert err.value.offset == 2
    with pytest.raises(ParseError):
        parse_architecture("dense 4 2\n")
    with pytest.raises(ParseError):
        parse_architecture("conv 3\n")
    with pytest.raises(ShapeError):
        parse_architecture("branch t\ndense 4 3\ndense 2 1\n")


def test_weights_round_trip(tmp_path, rng):
    net = build_tactile_snn(2)
    init_weights(net, rng)
    save_weights(net, tmp_path / "w.snnw")
    other = load_weights(build_tactile_snn(2), tmp_path / "w.snnw")
    for a, b in zip(net.get_weights(), other.get_weights()):
        np.testing.assert_array_equal(a, b)


def test_weights_golden_header():
    buf = encode_weights([np.array([[1.5, -2.0]])])
    assert buf[:4] == b"SNNW"
    assert buf[4:6] == (1).to_bytes(2, "little")
    assert buf[6:10] == (1).to_bytes(4, "little")
    assert buf[10:18] == (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
    assert np.frombuffer(buf[18:], "<f8").tolist() == [1.5, -2.0]


def test_weights_errors(tmp_path):
    buf = encode_weights([np.zeros((2, 3))])
    with pytest.raises(ParseError):
        decode_weights(buf[:-1])
    with pytest.raises(ParseError):
        decode_weights(b"XXXX" + buf[4:])
    (tmp_path / "w").write_bytes(buf)
    with pytest.raises(ShapeError):
        load_weights(build_tactile_snn(2), tmp_path / "w")


def test_train_config_parse_and_override():
    cfg = parse_train_config("epochs = 20\nlr=0.01 # faster\nloss = weighted\n\n")
    assert (cfg.epochs, cfg.lr, cfg.loss, cfg.batch) == (20, 0.01, "weighted", 8)
    over = cfg.update(lr=0.5, epochs=None)
    assert over.lr == 0.5 and over.epochs == 20
    assert parse_train_config(over.to_text()) == over


def test_train_config_errors():
    with pytest.raises(ConfigError):
        parse_train_config("colour = red\n")
    with pytest.raises(ParseError):
        parse_train_config("epochs = many\n")
    with pytest.raises(ConfigError):
        TrainConfig(loss="hinge")
