import numpy as np
import pytest

from vocscreen.scm import (
    LIFESTYLE,
    VOCS,
    Confounder,
    Outcome,
    ScmConfig,
    Treatment,
    demo_config,
    grayzone_config,
    simulate,
)
from vocscreen.data_model import RoleConfig


def make_scm(beta, alpha=None, gamma=None, n=2000, seed=0, t_sd=1.0, y_sd=1.0, c_sd=1.0):
    """Small SCM: ``alpha`` is (treatments x confounders), ``gamma`` per confounder."""
    beta = tuple(float(b) for b in np.atleast_1d(beta))
    m = len(beta)
    alpha = np.zeros((m, 0)) if alpha is None else np.atleast_2d(np.asarray(alpha, dtype=float))
    k = alpha.shape[1]
    gamma = tuple(np.zeros(k)) if gamma is None else tuple(float(g) for g in np.atleast_1d(gamma))
    confs = tuple(Confounder(f"c{i + 1}", 0.0, c_sd) for i in range(k))
    treats = tuple(Treatment(f"t{j + 1}", tuple(alpha[j]), t_sd) for j in range(m))
    return ScmConfig(confs, treats, Outcome("y", beta, gamma, y_sd), n, seed)


DEMO_ROLES = RoleConfig(VOCS, "glucose", LIFESTYLE, label="diabetic")


@pytest.fixture(scope="session")
def demo_cfg():
    return demo_config()


@pytest.fixture(scope="session")
def demo_data(demo_cfg):
    return simulate(demo_cfg)


@pytest.fixture(scope="session")
def grayzone_data():
    return simulate(grayzone_config())
