import os
import textwrap

import pytest

from messrl.config import load_scenario


@pytest.fixture(scope="session")
def sioux_cfg():
    return load_scenario("sioux_falls_3mg.cfg")


@pytest.fixture(scope="session")
def tiny_cfg():
    return load_scenario("tiny_shift.cfg")


@pytest.fixture(scope="session")
def asym_cfg():
    return load_scenario("asymmetric_2mg.cfg")


def write_scenario(tmp_path, net_text, cfg_text, name="scn"):
    """Drop a network + config pair into tmp_path and load it."""
    net_path = tmp_path / f"{name}.net"
    net_path.write_text(textwrap.dedent(net_text))
    cfg_path = tmp_path / f"{name}.cfg"
    cfg_path.write_text(textwrap.dedent(cfg_text).replace(
        "@NET@", os.path.basename(net_path)))
    return load_scenario(str(cfg_path))


SINGLE_MG_NET = """\
    node 1
    node 2
    edge 1 2 10
    microgrid 1 2
    depot 1 1
"""

# One commercial microgrid, one vehicle, deterministic loads; the
# template leaves profile/peak and a few ratings to the test.
SINGLE_MG_CFG = """\
    [scenario]
    name = single
    network = @NET@
    horizon = {horizon}
    dt = 1.0
    seed = 0

    [costs]
    c_bat = 0.2
    c_tran = 80.0
    lambda_obj = 1e-4
    lambda_pen = 1e-3

    [microgrid 1]
    p_dg_max = {p_dg_max}
    q_dg_max = {q_dg_max}
    e_dg_max = {e_dg_max}
    e_dg_min = {e_dg_min}
    power_factor = 0.9
    load_type = commercial
    interruption_cost = {w}
    gen_cost = 0.5
    peak_load = {peak}
    profile = {profile}
    sigma_err = {sigma}

    [mess 1]
    capacity = 1000.0
    p_charge_max = 400.0
    p_discharge_max = 400.0
    eta_charge = 0.95
    eta_discharge = 0.95
    soc_min = 0.1
    soc_max = 0.9
    soc_init = 0.5
    speed = 30.0
    depot = 1
"""


def single_mg_scenario(tmp_path, horizon=4, p_dg_max=1000.0, q_dg_max=5000.0,
                       e_dg_max=50000.0, e_dg_min=100.0, w=10.0, peak=2000.0,
                       profile=None, sigma=0.0):
    if profile is None:
        profile = [1.0] * 24
    cfg = SINGLE_MG_CFG.format(
        horizon=horizon, p_dg_max=p_dg_max, q_dg_max=q_dg_max,
        e_dg_max=e_dg_max, e_dg_min=e_dg_min, w=w, peak=peak,
        profile=" ".join(str(v) for v in profile), sigma=sigma)
    return write_scenario(tmp_path, SINGLE_MG_NET, cfg)
