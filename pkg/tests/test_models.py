import json
from pathlib import Path

import numpy as np
import pytest

from spde_reduce.models import (PRESETS, PROVENANCE, allen_cahn, damped_wave, get_preset, kink_norm_sq,
                                linearized_rate, nls_soliton, sh_equilibrium, swift_hohenberg)

TABLE = Path(__file__).parent / "data" / "provenance.json"


def _canon(obj):
    return json.dumps(obj, sort_keys=True)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_defaults_match_checked_in_table(name):
    table = json.loads(TABLE.read_text())
    preset = get_preset(name)
    row = {"figure": preset.figure, "params": preset.params, "defaults": preset.defaults}
    assert _canon(row) == _canon(table[name])
    assert PROVENANCE[name]["figure"] == preset.figure
    assert PROVENANCE[name]["params"] == preset.params


def test_damped_wave_coefficients():
    p = damped_wave()
    assert p.derived["a"] == pytest.approx(0.98696, abs=5e-6)
    assert p.derived["b"] == pytest.approx(0.3)
    ito = p.reduced.drift(np.array([[0.1]]))[0, 0]
    # -pi^2/10 * 0.1 - 0.3 * 0.001 + (0.25 / 2) * 0.1
    assert ito == pytest.approx(-0.0098696044 * 10 - 0.0003 + 0.0125, abs=1e-8)
    assert ito == pytest.approx(-0.0865, abs=5e-5)


def test_damped_wave_only_fixed_point_zero():
    p = damped_wave(eps=0.0)
    hs = np.linspace(-2, 2, 4001)
    b = p.stratonovich.scalar_form.b(hs)
    assert np.all(np.sign(b) == -np.sign(hs))


@pytest.mark.parametrize("factory,kw", [(damped_wave, {"gamma": 0.0}), (swift_hohenberg, {"delta": -0.1}),
                                        (allen_cahn, {"L": 5.0}), (nls_soliton, {"eps": -1.0})])
def test_invalid_parameters(factory, kw):
    with pytest.raises(ValueError):
        factory(**kw)


def test_allen_cahn_constants():
    p = allen_cahn()
    assert kink_norm_sq(10.0, 20.0) == pytest.approx(2 * np.sqrt(2) / 3, rel=1e-9)
    assert abs(p.derived["sigma_mid"]) < 1e-6 * 0.1
    assert p.derived["drift_scale"] == pytest.approx(np.exp(-20 * np.sqrt(2)))
    assert p.derived["drift_scale"] < 1e-12
    # closed-form drift is a boundary effect of the same exponential order
    assert abs(p.stratonovich.scalar_form.b(np.array(9.0))) < 1e-4


def test_nls_constants():
    p = nls_soliton()
    assert p.derived["psi_norm_sq"] == pytest.approx(4 / 3, abs=1e-6)
    b = p.reduced.drift(np.array([[0.0]]))[0, 0]
    s = p.reduced.diffusion(np.array([[0.0]]))[0, 0, 0]
    assert b * 1000 == pytest.approx(6.667, abs=1e-3)
    assert s**2 * 1000 == pytest.approx(13.33, abs=1e-2)


def test_swift_hohenberg_constants():
    p = swift_hohenberg()
    assert p.derived["h_star"] == pytest.approx(0.18371, abs=5e-6)
    assert round(p.derived["h_star"], 3) in (0.183, 0.184)
    assert p.defaults["h0"] == pytest.approx(np.sqrt(0.1 / 3))
    assert sh_equilibrium(0.1, 0.0) == pytest.approx(np.sqrt(0.1 / 3))
    det = swift_hohenberg(eps=0.0)
    assert linearized_rate(det.reduced, det.derived["h_star"]) == pytest.approx(0.2, rel=1e-8)


def test_unknown_preset():
    with pytest.raises(KeyError):
        get_preset("burgers")


def test_pipeline_helper():
    p = swift_hohenberg()
    sde = p.pipeline()
    assert sde.drift(np.array([[0.1]]))[0, 0] == pytest.approx(p.reduced.drift(np.array([[0.1]]))[0, 0])


def test_kink_diffusion_slope_against_fd():
    from spde_reduce.models import kink_diffusion, kink_diffusion_slope

    h = np.linspace(3, 17, 15)
    d = 1e-5
    fd = (kink_diffusion(h + d, 20.0, 0.1) - kink_diffusion(h - d, 20.0, 0.1)) / (2 * d)
    assert np.allclose(kink_diffusion_slope(h, 20.0, 0.1), fd, rtol=1e-6, atol=1e-12)


def test_allen_cahn_pipeline_switch():
    closed = allen_cahn(n_points=401)
    piped = allen_cahn(n_points=401, diffusion_source="pipeline")
    h = np.array([[8.0]])
    assert piped.stratonovich.diffusion(h)[0, 0, 0] == pytest.approx(closed.stratonovich.diffusion(h)[0, 0, 0],
                                                                    rel=1e-3)
    white = allen_cahn(n_points=401, noise="white", noise_modes=16, diffusion_source="pipeline")
    s_mid = np.linalg.norm(white.stratonovich.diffusion(np.array([[10.0]]))[0, 0])
    assert s_mid > 1e-3
    with pytest.raises(ValueError):
        allen_cahn(diffusion_source="guess")
