import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanplan.gridmap import MapError, free_components, inflate
from scanplan.worlds import RECIPES, WorldRecipe, generate_world


def test_parse():
    assert WorldRecipe.parse("rooms:200x120", seed=3) == WorldRecipe("rooms", 200, 120, 0.1, 3)
    assert WorldRecipe.parse("empty") == WorldRecipe("empty")
    with pytest.raises(MapError):
        WorldRecipe.parse("rooms:20by20")


def test_unknown_recipe_and_bad_size():
    with pytest.raises(MapError, match="unknown recipe"):
        generate_world(WorldRecipe("castle"))
    with pytest.raises(MapError):
        generate_world(WorldRecipe("empty", 0, 5))
    with pytest.raises(MapError):
        generate_world(WorldRecipe("loop", 20, 20))


def test_empty_world_is_a_walled_room():
    g = generate_world(WorldRecipe("empty", 10, 6))
    assert g.shape == (8, 12)
    assert g.free_count == 60
    assert g.blocked[0].all() and g.blocked[-1].all() and g.blocked[:, 0].all() and g.blocked[:, -1].all()


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(RECIPES), st.integers(60, 140), st.integers(60, 140), st.integers(0, 10_000))
def test_worlds_are_connected_even_after_inflation(name, w, h, seed):
    g = generate_world(WorldRecipe(name, w, h, seed=seed))
    assert g.shape == (h + 2, w + 2)
    assert g.free_count > 0
    assert free_components(g)[1] == 1
    assert free_components(inflate(g, 0.3))[1] == 1


@pytest.mark.parametrize("name", RECIPES)
def test_same_seed_same_world(name):
    a = generate_world(WorldRecipe(name, 90, 70, seed=7))
    b = generate_world(WorldRecipe(name, 90, 70, seed=7))
    assert a == b


def test_seeds_change_the_layout():
    worlds = {generate_world(WorldRecipe("rooms", 120, 120, seed=s)).cells.tobytes() for s in range(5)}
    assert len(worlds) > 1


def test_rooms_have_interior_walls():
    g = generate_world(WorldRecipe("rooms", 200, 200, seed=0))
    assert np.count_nonzero(g.blocked[1:-1, 1:-1]) > 0
