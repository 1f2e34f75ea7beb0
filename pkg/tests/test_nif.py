"""
Tests the neural image field: embedding, architecture, colour handling,
inference and weight files
"""

import numpy as np
import pytest
from numpy import testing

from niftrace.exceptions import ConfigurationError, FormatError
from niftrace.nif import colour
from niftrace.nif.network import (NifConfig, NifWeights, concat_layer_index, fourier_encode,
                                  fourier_encode_batch, nif_forward, shape_audit)
from niftrace.nif.weights_io import decode_nifw, encode_nifw, read_nifw, write_nifw

config = NifConfig(hidden=32, layers=4, fourier_dim=8)
weights = NifWeights.he_uniform(config, np.random.default_rng(0))
uv = np.random.default_rng(1).random((500, 2)).astype(np.float32)


def test_encoding_at_origin():
    testing.assert_array_equal(fourier_encode(0, 0, 8), [0, 1, 0, 1, 0, 1, 0, 1])


def test_encoding_half():
    testing.assert_allclose(fourier_encode(0.5, 0, 4), [1, 0, 0, 1], atol=1e-7)


def test_encoding_bands():
    enc = fourier_encode(0.1, 0.3, 40)
    assert enc.shape == (40,)
    j = np.arange(10)
    testing.assert_allclose(enc[0::4], np.sin(2.0 ** j * np.pi * np.float32(0.1)), atol=1e-6)
    testing.assert_allclose(enc[3::4], np.cos(2.0 ** j * np.pi * np.float32(0.3)), atol=1e-6)
    testing.assert_array_equal(fourier_encode_batch([[0.1, 0.3]], 40)[0], enc)


def test_encoding_width():
    with pytest.raises(ConfigurationError):
        fourier_encode(0, 0, 6)


@pytest.mark.parametrize("layers, expected", [(2, 1), (3, 1), (4, 1), (6, 3), (8, 3), (12, 5)])
def test_concat_layer(layers, expected):
    assert concat_layer_index(layers) == expected


def test_layer_shapes():
    shapes = NifConfig(hidden=128, layers=4, fourier_dim=40).layer_shapes()
    assert shapes == [(40, 88), (128, 128), (128, 128), (128, 128), (128, 3)]
    assert shape_audit(NifConfig(hidden=64, layers=8, fourier_dim=16))


def test_parameter_count():
    c = NifConfig(hidden=128, layers=4, fourier_dim=40)
    expected = 40 * 88 + 88 + 3 * (128 * 128 + 128) + 128 * 3 + 3
    assert c.parameter_count() == expected
    assert c.weight_bytes() == 4 * expected


@pytest.mark.parametrize("kwargs", [dict(fourier_dim=6), dict(hidden=8, fourier_dim=8), dict(layers=1),
                                    dict(colour_matrix="hsv"), dict(tone_map="srgb")])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        NifConfig(**{"hidden": 32, "layers": 4, "fourier_dim": 8, **kwargs})


def test_config_json():
    assert NifConfig.from_json(config.to_json()) == config


def test_weight_shapes_checked():
    broken = weights.copy()
    broken.weights[1] = broken.weights[1][:, :-1]
    with pytest.raises(ConfigurationError):
        broken.check()
    with pytest.raises(ConfigurationError):
        NifWeights(config, weights.weights[:-1], weights.biases[:-1])


def test_colour_matrices():
    testing.assert_array_equal(colour.colour_matrix("identity") @ np.float32([1, 2, 3]), [1, 2, 3])
    testing.assert_allclose(colour.colour_matrix("ycocg_to_rgb") @ np.float32([1, 0, 0]), [1, 1, 1])
    for kind in colour.COLOUR_MATRICES:
        product = colour.colour_matrix(kind, np.float64) @ colour.inverse_colour_matrix(kind, np.float64)
        testing.assert_allclose(product, np.eye(3), atol=1e-6)


def test_yuv_luma():
    testing.assert_allclose(colour.rgb_to_yuv([1, 1, 1]), [1, 0, 0], atol=1e-12)
    testing.assert_allclose(colour.rgb_to_yuv([1, 0, 0])[0], 0.299)


def test_tone_mapping():
    assert colour.tone_compress(0.0) == 0
    assert colour.tone_expand(0.0) == 0
    testing.assert_allclose(colour.tone_compress(np.e - 1), 1.0, rtol=1e-6)
    assert colour.tone_compress(-2.0) == 0
    assert colour.tone_expand(-5.0) == 0
    x = np.float32([0.0, 0.5, 10.0, 1e4])
    testing.assert_allclose(colour.tone_expand(colour.tone_compress(x)), x, rtol=1e-5)


def test_zero_weights_give_black():
    out = nif_forward(NifWeights.zeros(config), config, uv)
    assert out.dtype == np.float32 and out.shape == (500, 3)
    testing.assert_array_equal(out, 0)


def test_output_is_non_negative():
    assert np.all(nif_forward(weights, config, uv) >= 0)


def test_chunk_size_does_not_change_output():
    full = nif_forward(weights, config, uv, chunk_size=len(uv))
    testing.assert_array_equal(nif_forward(weights, config, uv, chunk_size=1), full)
    testing.assert_array_equal(nif_forward(weights, config, uv, chunk_size=37), full)


def test_forward_matches_numpy_reference():
    enc = fourier_encode_batch(uv, config.fourier_dim).astype(np.float64)
    x = enc
    for k, (w, b) in enumerate(zip(weights.weights[:-1], weights.biases[:-1]), start=1):
        x = np.maximum(x @ w.astype(np.float64) + b, 0)
        if k == config.concat_layer:
            x = np.concatenate([x, enc], axis=1)
    y = x @ weights.weights[-1].astype(np.float64) + weights.biases[-1]
    rgb = np.maximum(np.expm1(y @ colour.colour_matrix(config.colour_matrix, np.float64).T), 0)
    testing.assert_allclose(nif_forward(weights, config, uv), rgb, rtol=1e-4, atol=1e-5)


def test_forward_rejects_bad_coordinates():
    with pytest.raises(ConfigurationError):
        nif_forward(weights, config, uv[:, :1])
    with pytest.raises(ConfigurationError):
        nif_forward(weights, NifConfig(hidden=64, layers=4, fourier_dim=8), uv)


def test_quantise_f16():
    q = weights.quantise_f16(np.random.default_rng(5))
    for p in q.parameters():
        testing.assert_array_equal(p.astype(np.float16).astype(np.float32), p)


def test_weight_file(tmp_path):
    path = tmp_path / "field.nifw"
    size = write_nifw(path, weights)
    assert size == 28 + 4 * config.parameter_count() + 4
    back = read_nifw(path)
    assert back.config == config
    for a, b in zip(back.parameters(), weights.parameters()):
        testing.assert_array_equal(a, b)
    assert encode_nifw(back) == path.read_bytes()


def test_weight_file_errors():
    data = bytearray(encode_nifw(weights))
    with pytest.raises(FormatError, match="header"):
        decode_nifw(bytes(data[:10]))
    with pytest.raises(FormatError, match="magic"):
        decode_nifw(b"XXXX" + bytes(data[4:]))
    corrupt = bytearray(data)
    corrupt[100] ^= 0xFF
    with pytest.raises(FormatError, match="checksum"):
        decode_nifw(bytes(corrupt))
