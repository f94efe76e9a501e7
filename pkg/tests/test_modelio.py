import numpy as np
import pytest

from hpdnet.cnn import CnnConfig, init_model
from hpdnet.errors import FormatError
from hpdnet.kernels import KernelBank
from hpdnet.modelio import decode_model, encode_model
from hpdnet.pipeline import PipelineModel

from conftest import random_unitary

CFG = CnnConfig(patch_size=5, conv_kernels=(3,), conv_channels=(2,), pool_after=(1,),
                fc_width=4)


def model(rng, layers=1):
    bank = None
    if layers:
        bank = KernelBank(random_unitary(rng, layers * 2).reshape(layers, 2, 3, 3), (3, 7),
                          0.0125, 42, 0.1)
    cnn = init_model(CFG, 18 if layers else 9, (3, 7))
    cnn.feature_mean = rng.standard_normal(cnn.in_channels)
    cnn.feature_std = rng.uniform(0.5, 2, cnn.in_channels)
    return PipelineModel(bank, layers, cnn, 1e-6)


@pytest.mark.parametrize("layers", [0, 1, 2])
def test_round_trip(rng, layers):
    m = model(rng, layers)
    data = encode_model(m)
    back = decode_model(data)
    assert encode_model(back) == data
    assert back.rcm_layers == layers and back.loading == 1e-6
    assert back.cnn.config == CFG and back.cnn.class_ids == (3, 7)
    assert np.array_equal(back.cnn.feature_std, m.cnn.feature_std)
    for k, v in m.cnn.params.items():
        assert np.array_equal(back.cnn.params[k], v)
    if layers:
        assert np.array_equal(back.bank.kernels, m.bank.kernels)
        assert (back.bank.epsilon, back.bank.seed, back.bank.class_ids) == (0.0125, 42, (3, 7))


def test_corrupt_files(rng):
    data = encode_model(model(rng))
    with pytest.raises(FormatError, match="magic"):
        decode_model(b"XXXX" + data[4:])
    with pytest.raises(FormatError, match="version"):
        decode_model(data[:4] + b"\x09\x00" + data[6:])
    for cut in (3, 10, len(data) // 2, len(data) - 1):
        with pytest.raises(FormatError):
            decode_model(data[:cut])
    # META now disagrees with the stored tensor shapes
    swapped = data.replace(b'"conv_channels": [2]', b'"conv_channels": [3]')
    assert swapped != data
    with pytest.raises(FormatError, match="shape"):
        decode_model(swapped)
