import math

import numpy as np
import pytest

import erzefoz


def test_zero_field_gap():
    s = erzefoz.spectrum(1, [0.0, 0.0, 0.0])
    e = s["energies_MHz"]
    assert e.shape == (16,)
    assert abs((e[9] - e[7]) - 850.9) < 1.0
    assert len(s["labels"]) == 16


def test_time_reversal():
    a = erzefoz.spectrum(2, [120.0, -300.0, 45.0])["energies_MHz"]
    b = erzefoz.spectrum(2, [-120.0, 300.0, -45.0])["energies_MHz"]
    assert np.max(np.abs(a - b)) < 1e-9


def test_refine_site2_optimum():
    i, j, seed = erzefoz.reference_optimum(2)
    p = erzefoz.refine(2, i, j, seed)
    assert p["status"] == "converged"
    assert abs(np.linalg.norm(p["B_mT"]) - 633.52) < 1.0
    assert abs(p["frequency_MHz"] - 796.3) < 1.0
    assert np.linalg.norm(p["S1"]) < 1e-10


def test_noise_and_frozen_core():
    d = erzefoz.noise_mc("Er", 100.0, samples=400, seed=3, workers=1)
    again = erzefoz.noise_mc("Er", 100.0, samples=400, seed=3, workers=2)
    assert np.array_equal(d["samples_uT"], again["samples_uT"])
    assert d["mode_uT"] > 0
    fc = erzefoz.frozen_core(4.45)
    assert abs(fc["n_ppm"] - 45.3) < 0.5
    assert math.isclose(erzefoz.analytic_er_fluctuation(fc["n_ppm"]), 4.45, rel_tol=1e-9)


def test_maps():
    z = erzefoz.zero_field_map(1, 10.0)
    assert z.shape == (16, 16)
    assert np.isfinite(z[np.triu_indices(16, 1)]).all()
    a = erzefoz.anisotropy_map(1, "g_e", 19, 37)
    assert a["values"].shape == (19, 37)


def test_errors_are_raised():
    with pytest.raises(erzefoz.ErzefozError):
        erzefoz.transition_frequency(1, [0.0, 0.0, 0.0], 3, 3)
    with pytest.raises(erzefoz.ErzefozError):
        erzefoz.anisotropy_map(1, "nope", 10, 10)
