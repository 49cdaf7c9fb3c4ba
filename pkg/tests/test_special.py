import math

import mpmath
import numpy as np
import pytest

from geoperturb.errors import DomainError
from geoperturb.special import lambert_w_m1


def test_branch_point():
    assert lambert_w_m1(-1 / math.e) == pytest.approx(-1.0, abs=1e-9)


def test_minus_two():
    assert lambert_w_m1(-2 / math.e**2) == pytest.approx(-2.0, abs=1e-12)


def test_residual_over_log_spaced_points():
    z = -np.logspace(math.log10(1 / math.e), -15, 1000)[1:]
    z = np.concatenate([z, [-1e-15]])
    w = lambert_w_m1(z)
    assert np.all(w <= -1)
    assert np.all(np.abs(w * np.exp(w) - z) <= 1e-12 * np.abs(z))


@pytest.mark.parametrize("z", [-0.3678, -0.3, -0.1, -1e-3, -1e-8, -1e-14,
                               -1 / math.e + 1e-7, -1 / math.e + 1e-12])
def test_matches_arbitrary_precision(z):
    # scipy's k=-1 branch loses accuracy near -1/e; mpmath does not
    ref = float(mpmath.lambertw(mpmath.mpf(z), -1).real)
    # dw/dz blows up like 1/sqrt(z + 1/e): one ulp in z costs sqrt(ulp) in w
    gap = z + 1 / math.e
    tol = max(1e-12, 2 * np.finfo(float).eps / math.sqrt(gap))
    assert lambert_w_m1(z) == pytest.approx(ref, rel=tol)


@pytest.mark.parametrize("z", [-0.4, 0.0, 0.1, float("nan"), -math.inf])
def test_domain(z):
    with pytest.raises(DomainError):
        lambert_w_m1(z)


def test_array_shape_preserved():
    z = np.full((3, 4), -0.2)
    assert lambert_w_m1(z).shape == (3, 4)
    assert isinstance(lambert_w_m1(-0.2), float)
