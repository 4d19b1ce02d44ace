"""Shared fixtures. Expensive trained networks are cached as checkpoints in
tests/_cache keyed by scene content, so a full run trains each scene once and
later runs just load."""

import hashlib
import json
import time
from dataclasses import replace
from pathlib import Path

import pytest

from creaselift import scene as scene_mod
from creaselift.scene import load_checkpoint, save_checkpoint

CACHE = Path(__file__).parent / "_cache"


def scene_key(sc) -> str:
    blob = json.dumps(sc.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def trained_network(sc):
    """(network, training seconds); seconds are real on a cache miss and
    recalled from the sidecar on a hit."""
    CACHE.mkdir(exist_ok=True)
    path = CACHE / f"{sc.name}-{scene_key(sc)}.npz"
    side = path.with_suffix(".json")
    if path.exists() and side.exists():
        seconds = json.loads(side.read_text())["seconds"]
        return load_checkpoint(path, expect=sc.spec), seconds
    t0 = time.perf_counter()
    net, _ = sc.train()
    seconds = time.perf_counter() - t0
    save_checkpoint(path, net)
    side.write_text(json.dumps({"seconds": seconds}))
    return net, seconds


def constant_twin(sc):
    """Same scene, lifted coordinate carrying no interface information."""
    return replace(sc, name=sc.name + "_constant", lift_mode="constant")


@pytest.fixture(scope="session")
def bar_scene():
    return scene_mod.load_fixture("hetero_bar_1d")


@pytest.fixture(scope="session")
def bar_net(bar_scene):
    return trained_network(bar_scene)


@pytest.fixture(scope="session")
def bar_constant_net(bar_scene):
    return trained_network(constant_twin(bar_scene))


@pytest.fixture(scope="session")
def family_scene():
    return scene_mod.load_fixture("hetero_bar_1d_family")


@pytest.fixture(scope="session")
def family_net(family_scene):
    return trained_network(family_scene)


@pytest.fixture(scope="session")
def crease_scene():
    return scene_mod.load_fixture("crease_square_2d")


@pytest.fixture(scope="session")
def crease_net(crease_scene):
    return trained_network(crease_scene)


@pytest.fixture(scope="session")
def crease_constant_net(crease_scene):
    return trained_network(constant_twin(crease_scene))


@pytest.fixture(scope="session")
def kirigami_scene():
    return scene_mod.load_fixture("kirigami_2d")


@pytest.fixture(scope="session")
def kirigami_net(kirigami_scene):
    return trained_network(kirigami_scene)


@pytest.fixture(scope="session")
def finger_scene():
    return scene_mod.load_fixture("finger_2d")


@pytest.fixture(scope="session")
def finger_net(finger_scene):
    return trained_network(finger_scene)
