import math

import pytest

from fdlp_derev.config import Config, load_config, parse_config
from fdlp_derev.errors import ValidationError


def test_defaults_mirror_modules():
    cfg = Config()
    f = cfg.fdlp()
    assert (f.num_bands, f.f_lo, f.f_hi, f.ar_order, f.envelope_samples) == (36, 200.0, 6500.0, 160, 800)
    assert cfg.gain().conv_layers == ((8, 5, 3), (8, 5, 3))
    assert math.isinf(cfg.snr_db)


def test_parse_values():
    cfg = parse_config("# comment\nar_order = 80\nt60_grid=0.3,0.5\nconv_layers=4x3x3\nlr=1e-2  # fast\nsnr_db=20\n")
    assert cfg.ar_order == 80 and cfg.t60_grid == (0.3, 0.5)
    assert cfg.conv_layers == ((4, 3, 3),) and cfg.lr == 0.01 and cfg.snr_db == 20.0


@pytest.mark.parametrize(
    "text, msg",
    [
        ("epochs=1\nbogus=3\n", "line 2: unknown key 'bogus'"),
        ("epochs\n", "line 1: expected key=value"),
        ("ar_order=abc\n", "line 1: bad value for ar_order"),
        ("conv_layers=4x4x3\n", "line 1: bad value for conv_layers"),
        ("f_hi=9000\n", "Nyquist"),
        ("t60_grid=0.2,3.0\n", "t60"),
    ],
)
def test_errors(text, msg):
    with pytest.raises(ValidationError, match=msg):
        parse_config(text)


def test_overrides(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("seed=5\nepochs=3\n", encoding="utf-8")
    cfg = load_config(p, {"seed": 9, "epochs": None})
    assert cfg.seed == 9 and cfg.epochs == 3
