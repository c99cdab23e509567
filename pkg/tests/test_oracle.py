import numpy as np
import pytest

from infoputs.contagion import certify_full_implementation
from infoputs.errors import ConfigurationError
from infoputs.oracle import dp_oracle

CELL = 1.0 / 59


@pytest.fixture(scope="module")
def puts_map(g1, policy):
    return dp_oracle(g1, policy, h=0.02, grid=(60, 60), T=12.0)


@pytest.fixture(scope="module")
def quiet_map(g1, alt):
    return dp_oracle(g1, alt("no_information"), h=0.02, grid=(60, 60), T=12.0)


def _mesh(rm):
    return np.meshgrid(rm.mu_grid, rm.A_grid, indexing="ij")


def test_converges(puts_map):
    assert puts_map.converged and puts_map.policy_kind == "puts"
    assert puts_map.status.shape == (60, 60)


def test_certified_above_band(puts_map, th):
    MU, AA = _mesh(puts_map)
    above = MU > th.ld(AA) + 0.02
    assert np.all(puts_map.status[above] == 1)


def test_certified_zero_below_band(puts_map, quiet_map, th):
    for rm in (puts_map, quiet_map):
        MU, AA = _mesh(rm)
        below = MU < th.ld(AA) - 0.02
        assert np.all(rm.status[below] == 0)


def test_agrees_with_certifier(g1, params, th, puts_map):
    cert = certify_full_implementation(g1, params, th, grid=200, eps=1e-3)
    assert cert.certified
    # column by column the oracle's lowest certified belief sits within one display cell of psi_LD
    gap = np.abs(puts_map.rho - th.ld(puts_map.A_grid))
    assert np.max(gap) <= CELL
    MU, AA = _mesh(puts_map)
    covered = MU >= th.ld(AA) + 1e-3 + CELL
    assert np.all(puts_map.status[covered] == 1)


def test_no_information_leaves_gap_undetermined(quiet_map, th):
    MU, AA = _mesh(quiet_map)
    strict_gap = (MU > th.ld(AA) + 1e-9) & (MU < th.ud(AA) - 1e-9)
    assert strict_gap.any()
    assert np.all(quiet_map.status[strict_gap] == -1)
    assert np.all(quiet_map.status[MU > th.ud(AA) + CELL] == 1)


def test_csv_export(puts_map, tmp_path):
    p = tmp_path / "r.csv"
    puts_map.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "mu,A,status" and len(lines) == 3601


def test_tail_bound_checked(g1, policy):
    with pytest.raises(ConfigurationError):
        dp_oracle(g1, policy, T=0.5, tail_tol=1e-6)
