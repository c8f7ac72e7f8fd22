import numpy as np
import pytest

from cornerweights import errors
from cornerweights.cutoffs import bump, plateau, smooth_plateau, smooth_step, smoothstep


@pytest.mark.parametrize("ramp,max_order", [(smoothstep, 4), (smooth_step, 2)])
def test_ramp_derivatives_match_differences(ramp, max_order):
    u = np.linspace(0.05, 0.95, 37)
    h = 1e-5
    for j in range(1, max_order + 1):
        fd = (ramp(u + h, j - 1) - ramp(u - h, j - 1)) / (2 * h)
        assert np.max(np.abs(fd - ramp(u, j))) < 1e-4 * max(1.0, np.max(np.abs(ramp(u, j))))


def test_ramps_are_flat_outside():
    for ramp in (smoothstep, smooth_step):
        assert ramp(np.array([-1.0, 0.0]), 0).tolist() == [0.0, 0.0]
        assert ramp(np.array([1.0, 2.0]), 0).tolist() == [1.0, 1.0]
        assert np.all(ramp(np.array([-0.5, 1.5]), 1) == 0.0)


def test_plateaus_and_bump():
    r = np.array([0.0, 0.4, 0.5, 1.0, 1.2])
    for fn in (plateau, smooth_plateau):
        v = fn(r, 0.5, 1.0)
        assert v[0] == v[1] == v[2] == 1.0 and v[3] == v[4] == 0.0
    t = np.linspace(-2, 2, 101)
    b = bump(t, 0.0, 1.0)
    assert np.all(b[np.abs(t) >= 1] == 0) and b[50] == 1.0


def test_exit_codes_by_category():
    assert errors.ConfigError.exit_code == 2
    for cls in (errors.PreconditionError, errors.CompatibilityError, errors.NearSpectrumError,
                errors.GeometryError):
        assert cls.exit_code == 3
    for cls in (errors.SolverError, errors.TruncationError, errors.FitError):
        assert cls.exit_code == 4
    assert errors.ToleranceError.exit_code == 5
