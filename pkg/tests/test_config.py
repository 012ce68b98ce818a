from pathlib import Path

import pytest

from thetamfg.config import ConfigError, load_config, parse_config
from thetamfg.problem import GenericCost, NonlocalCoupling, QuadraticCost

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_acceptance_config():
    cfg = load_config(CONFIGS / "acceptance.toml")
    grid = cfg.grid()
    assert (grid.d, grid.N, grid.T, grid.theta, grid.sigma) == (1, 16, 26, 0.75, 0.2)
    spec = cfg.problem()
    assert isinstance(spec.running_cost, QuadraticCost) and spec.alpha == 10.0
    opts = cfg.solve_options()
    assert opts.damping == "fixed" and opts.tol == 1e-9
    assert len(cfg.digest) == 64


def test_campaign_merges_problem_file():
    cfg = load_config(CONFIGS / "ladder.toml")
    assert cfg.campaign()["levels"] == [8, 16, 32] and cfg.campaign()["reference"] == 64
    assert cfg.grid().N == 16


def test_variants():
    cfg = parse_config(
        """
[grid]
d = 2
N = 8
[cost]
variant = "quartic"
alpha = 2.0
beta = 0.2
[coupling]
variant = "nonlocal"
kernel = "cosine(0.5)"
[initial]
expression = "gaussian_bump(0.5, 0.2)"
"""
    )
    spec = cfg.problem()
    assert isinstance(spec.running_cost, GenericCost) and isinstance(spec.coupling, NonlocalCoupling)
    assert cfg.grid().T == 13


@pytest.mark.parametrize(
    "text",
    [
        "[grid]\nN = 'eight'",
        "[grids]\nN = 8",
        "[grid]\nN = 8\nfoo = 1",
        "[grid]\nN = 8\n[cost]\nalpha = -1.0",
        "[grid]\nN = 8\n[cost]\nalpha = 1.0\nvariant = 'cubic'",
        "[grid]\nN = 8\n[cost]\nalpha = 1.0\n[coupling]\nF = 'linear(-2)'",
        "[grid]\nN = 8\n[cost]\nalpha = 1.0\n[terminal]\nexpression = 'sawtooth'",
        "[grid]\nN = 8\n[cost]\nalpha = 1.0\nb = [1.0, 2.0]",
        "[grid]\nN = 8\n[cost]\nalpha = 1.0\n[solver]\ndamping = 'newton'",
        "not = [toml",
    ],
)
def test_invalid_configs(text):
    cfg = None
    with pytest.raises(ConfigError):
        cfg = parse_config(text)
        cfg.grid()
        cfg.problem()
        cfg.solve_options()


def test_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    (tmp_path / "c.toml").write_text('[campaign]\nproblem = "nowhere.toml"\n')
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.toml")


def test_campaign_list_validation():
    with pytest.raises(ConfigError):
        parse_config("[campaign]\nlevels = [8, 'x']").campaign()


def test_numham_section():
    cfg = load_config(CONFIGS / "numham_double_well.toml")
    opts = cfg.numham()
    assert opts["fixture"] == "double_well" and opts["samples"] == 10_000 and opts["seed"] == 42
    with pytest.raises(ConfigError):
        parse_config("[cost]\nalpha = 1.0\n[numham]\nsamples = 0").numham()
