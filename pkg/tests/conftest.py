import json
import importlib.resources as resources

import pytest

import bonusmalus as bm
from bonusmalus.checks import CheckContext
from bonusmalus.config import parse_config


def table1_params() -> bm.ModelParams:
    return bm.ModelParams(
        horizon_T=5.0,
        class2_reset_S=2.0,
        intensity_lambda=1.0,
        claim_law=bm.ClaimLaw(mean=1.0),
        deductible_m1=0.0,
        deductible_m2=0.0,
        premium1=bm.PremiumSpec.affine(1.0, -0.14),
        premium2=bm.PremiumSpec.constant(1.1),
        income_c=1.2,
        utility=bm.UtilitySpec(gamma=0.5),
    )


@pytest.fixture(scope="session")
def params() -> bm.ModelParams:
    return table1_params()


@pytest.fixture(scope="session")
def coarse_grid(params) -> bm.Grid:
    """A grid fast enough for unit tests; accuracy-sensitive checks use
    the shipped configuration instead (see `check_ctx`)."""
    return bm.build_grid(params, bm.GridSpec(h_t=0.1, h_x=0.25))


@pytest.fixture(scope="session")
def coarse_solve(params, coarse_grid) -> bm.SolveResult:
    return bm.iterate(params, coarse_grid, bm.SolveControl(mode="optimize", tol=1e-6))


@pytest.fixture(scope="session")
def shipped_config() -> dict:
    text = resources.files("bonusmalus").joinpath("configs/table1.json").read_text()
    return json.loads(text)


@pytest.fixture(scope="session")
def check_ctx(shipped_config, tmp_path_factory) -> CheckContext:
    """Shared acceptance context at the shipped grid resolution."""
    doc = json.loads(json.dumps(shipped_config))
    doc["outputs"]["dir"] = str(tmp_path_factory.mktemp("check_out"))
    return CheckContext(parse_config(doc))
