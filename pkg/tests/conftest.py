import random

import pytest

from usocbdc import blindsig
from usocbdc.sim.config import AccountSpec, BankSpec, PlateSpec, RelaySpec, SimulationConfig, WalletSpec
from usocbdc.sim.engine import World


@pytest.fixture(scope="session")
def plate_key():
    return blindsig.generate_keypair("p100", 100, blindsig.TEST_BITS, random.Random("test-plate"))


@pytest.fixture(scope="session")
def other_key():
    return blindsig.generate_keypair("p10", 10, blindsig.TEST_BITS, random.Random("test-plate-2"))


def small_config(seed=0, **kw) -> SimulationConfig:
    cfg = SimulationConfig(
        seed=seed,
        cooling_off=0,
        relays=[RelaySpec("root", endorsers=3, quorum=2), RelaySpec("local", parent="root", endorsers=2)],
        plates=[
            PlateSpec("p100", 100, cap_in_flight=10_000, cap_cumulative=1_000_000, expiry=1000),
            PlateSpec("p10", 10, cap_in_flight=10_000, cap_cumulative=1_000_000, expiry=1000),
        ],
        banks=[BankSpec("bank", reserves=1000), BankSpec("other", reserves=1000)],
        accounts=[
            AccountSpec("bank", "alice", 150),
            AccountSpec("bank", "bob", 0),
            AccountSpec("other", "carol", 0),
            AccountSpec("bank", "dave", 1000),
        ],
        wallets=[WalletSpec(n) for n in ("alice", "bob", "carol", "dave")],
    )
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg.validate()


@pytest.fixture
def world():
    return World(small_config())
