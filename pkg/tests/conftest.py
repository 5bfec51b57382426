import numpy as np
import pytest

from filmdesign.densities import (
    BulkDensitySpec,
    CustomDensity,
    IsotropicQuadratic,
    QuarticWell,
    TwoWell,
    frob2,
    kohn_strang_spec,
)

# rank-one well: e1 (x) e1, unit Frobenius norm
RANK_ONE_WELL = np.zeros((3, 3))
RANK_ONE_WELL[0, 0] = 1.0

# rank-two membrane offset, norm < 1
RANK_TWO_WELL = np.zeros((3, 3))
RANK_TWO_WELL[0, 0] = 0.5
RANK_TWO_WELL[1, 1] = 0.5

ANISO_MATRIX = np.array(
    [[0.5, 0.3, 0.2], [0.1, 0.4, 0.6], [0.7, 0.2, 0.3]]
)


def _aniso_quartic(f):
    q = np.sum(ANISO_MATRIX * f, axis=(-2, -1))
    return (frob2(f) - 0.5) ** 2 + 0.2 * q**2


@pytest.fixture(scope="session")
def ks_spec():
    return kohn_strang_spec(1.0, 2.0)


@pytest.fixture(scope="session")
def two_well_spec():
    """Rank-one two-well phase 1 against a stiff quadratic phase 2.

    Certificate from the closed-form ray bounds: with well norm a < 1,
    alpha*(1 - a^2) below and alpha*(1 + a^2) above; the wells sit at
    +-0.75 * (e1 x e1), so a = 0.75.
    """
    scale = 0.75
    w1 = TwoWell(scale * RANK_ONE_WELL, -scale * RANK_ONE_WELL, alpha=1.0)
    w2 = IsotropicQuadratic(2.0)
    return BulkDensitySpec(w1=w1, w2=w2, beta_lower=1.0 - scale**2, beta_upper=2.0, p=2.0)


@pytest.fixture(scope="session")
def rank_one_wells_spec():
    """Wells exactly at +-(e1 x e1): the symmetric split hits both."""
    w1 = TwoWell(RANK_ONE_WELL, -RANK_ONE_WELL, alpha=1.0)
    return BulkDensitySpec(w1=w1, w2=IsotropicQuadratic(2.0), beta_lower=0.1, beta_upper=4.0, p=2.0)


@pytest.fixture(scope="session")
def rank_two_wells_spec():
    w1 = TwoWell(RANK_TWO_WELL, -RANK_TWO_WELL, alpha=1.0)
    return BulkDensitySpec(
        w1=w1, w2=IsotropicQuadratic(2.0), beta_lower=1.0 - 0.5, beta_upper=2.0, p=2.0
    )


@pytest.fixture(scope="session")
def quartic_spec():
    w = QuarticWell(0.9)
    lo, hi, p = w.suggested_certificate()
    return BulkDensitySpec(w1=w, w2=w, beta_lower=lo, beta_upper=hi, p=p)


@pytest.fixture(scope="session")
def aniso_quartic_density():
    return CustomDensity(fn=_aniso_quartic, label="aniso-quartic")


@pytest.fixture(scope="session")
def aniso_quartic_spec(aniso_quartic_density):
    return BulkDensitySpec(
        w1=aniso_quartic_density,
        w2=IsotropicQuadratic(1.0),
        beta_lower=0.7,
        beta_upper=1.4,
        p=4.0,
    )
