import json

import pytest

from dwmr import config as C


@pytest.mark.parametrize("benchmark", ["puzzle", "iceslider"])
@pytest.mark.parametrize("family", C.FAMILIES)
def test_shipped_files_match_defaults(benchmark, family):
    path = C.config_path(benchmark, family)
    assert json.loads(path.read_text()) == C.default_config(benchmark, family)
    assert C.load_config(path) == C.default_config(benchmark, family)


def test_fixed_settings():
    p = C.default_config("puzzle")
    i = C.default_config("iceslider")
    assert (p["train.epochs"], i["train.epochs"]) == (40, 20)
    assert p["train.batch_size"] == i["train.batch_size"] == 256
    assert (p["arch.n_bits"], i["arch.n_bits"]) == (64, 192)
    assert p["train.tau"] == 0.9 and p["loss.gamma"] == 0.45


def test_family_weights():
    assert C.default_config(family="ae")["loss.lambda_var"] == 0.0
    assert C.default_config(family="dwmr")["loss.lambda_rec"] == 0.0
    assert C.default_config(family="dwmr+bvae")["loss.lambda_kl"] > 0


def test_overrides_and_errors(tmp_path):
    assert C.parse_override("arch.enc_channels=[8,16]") == ("arch.enc_channels", [8, 16])
    assert C.parse_override("variant=two_step") == ("variant", "two_step")
    with pytest.raises(C.ConfigError):
        C.parse_override("novalue")
    with pytest.raises(C.ConfigError):
        C.resolve({"loss.lambda_vra": 1.0})
    with pytest.raises(C.ConfigError):
        C.resolve({"loss.U": 70})
    with pytest.raises(C.ConfigError):
        C.resolve({"data.split_seeds": [1, 1, 2]})
    with pytest.raises(C.ConfigError):
        C.default_config("chess")
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(C.ConfigError):
        C.load_config(bad)
    bad.write_text("{nope")
    with pytest.raises(C.ConfigError):
        C.load_config(bad)
