"""Search: UCB selection, sub-goal bookkeeping, simulation, full planning."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

import lgplan.planner as planner_mod
from lgplan.execution import check_goal, replay
from lgplan.geometry import Footprint, Pose
from lgplan.instruction import parse_dsl
from lgplan.patterns import PatternDatabase, prior_density
from lgplan.planner import (
    Action,
    Plan,
    PlannerConfig,
    PlanningFailed,
    SubgoalState,
    build_subgoal_states,
    dependency_gate,
    load_plan,
    mcts_plan,
    pmcts_plan,
    save_plan,
    simulate_step,
    ucb_select,
)
from lgplan.scene import load_scene

from conftest import FIXTURES, make_scene

DB = PatternDatabase()


def fake_node(children, visits):
    return SimpleNamespace(children=children, visits=visits)


def fake_child(value, visits, action_id, dead=False):
    return SimpleNamespace(value=value, visits=visits, action_id=action_id,
                           dead=dead, children=[])


# -- ucb selection ------------------------------------------------------------------


def test_ucb_prefers_exploitation_at_equal_visits():
    # both children visited once under a parent with n = 2; the win decides
    a = fake_child(value=1.0, visits=1, action_id=0)
    b = fake_child(value=0.0, visits=1, action_id=1)
    assert ucb_select(fake_node([a, b], visits=2), 1.414) is a
    explore = 1.414 * math.sqrt(math.log(2) / 1)
    assert abs((1.0 + explore) - 2.1772322201769843) < 1e-12
    assert abs((0.0 + explore) - 1.1772322201769845) < 1e-12


def test_ucb_prefers_the_unexplored_child():
    # a well-visited winner loses to a barely-tried sibling: parent n = 11
    a = fake_child(value=5.0, visits=10, action_id=0)
    b = fake_child(value=0.0, visits=1, action_id=1)
    assert ucb_select(fake_node([a, b], visits=11), 1.414) is b
    score_a = 5.0 / 10 + 1.414 * math.sqrt(math.log(11) / 10)
    score_b = 0.0 / 1 + 1.414 * math.sqrt(math.log(11) / 1)
    assert abs(score_a - 1.1924118873078342) < 1e-12
    assert abs(score_b - 2.18959864286859) < 1e-12


def test_ucb_ties_break_toward_lowest_action_id():
    a = fake_child(value=0.5, visits=2, action_id=7)
    b = fake_child(value=0.5, visits=2, action_id=3)
    c = fake_child(value=0.5, visits=2, action_id=5)
    assert ucb_select(fake_node([a, b, c], visits=7), 1.0).action_id == 3


def test_ucb_skips_dead_children_and_fails_when_all_dead():
    live = fake_child(value=0.0, visits=1, action_id=9)
    dead = fake_child(value=99.0, visits=1, action_id=1, dead=True)
    assert ucb_select(fake_node([dead, live], visits=3), 1.414) is live
    with pytest.raises(PlanningFailed):
        ucb_select(fake_node([dead], visits=2), 1.414)


def test_ucb_single_child():
    only = fake_child(value=0.0, visits=3, action_id=2)
    assert ucb_select(fake_node([only], visits=4), 0.0) is only


# -- sub-goal bookkeeping -------------------------------------------------------------


def line_state(ids):
    return SubgoalState(objects=tuple(ids), prior=DB.get("line"))


def test_dependency_gate_defers_anchored_subgoals():
    a = line_state((1, 2))
    b = SubgoalState(objects=(3,), prior=DB.get("spatial:behind"), anchor=1)
    assert dependency_gate((a, b), a)
    assert not dependency_gate((a, b), b)  # o1 still pending in a
    a_done = a.with_placed(1, Pose(0.2, 0.2)).with_placed(2, Pose(0.4, 0.2))
    assert dependency_gate((a_done, b), b)


def test_advance_states_goal_placement_serves_one_subgoal():
    a = line_state((1, 2))
    b = SubgoalState(objects=(3,), prior=DB.get("spatial:behind"), anchor=1)
    act = Action(1, Pose(0.2, 0.2), "goal_placement")
    a2, b2 = planner_mod._advance_states((a, b), act, 0)
    assert a2.placed == ((1, Pose(0.2, 0.2)),)
    assert a2.remaining == (2,)
    assert b2 is b


def test_advance_states_relocation_reinserts_and_invalidates_anchored():
    a = line_state((1, 2)).with_placed(1, Pose(0.2, 0.2))
    b = (SubgoalState(objects=(3,), prior=DB.get("spatial:behind"), anchor=1)
         .with_placed(3, Pose(0.5, 0.5)))
    act = Action(1, Pose(0.7, 0.7), "relocation")
    a2, b2 = planner_mod._advance_states((a, b), act, 0)
    assert a2.placed == () and a2.remaining == (1, 2)
    # anchored sub-goal restarts: its region moved with o1
    assert b2.placed == () and b2.remaining == (3,)


def test_advance_states_unstack_of_uninvolved_object_is_a_noop():
    a = line_state((1, 2)).with_placed(1, Pose(0.2, 0.2))
    act = Action(9, Pose(0.7, 0.7), "unstack")
    (a2,) = planner_mod._advance_states((a,), act, 0)
    assert a2.placed == a.placed and a2.remaining == a.remaining


def test_subgoal_state_without_keeps_listed_order():
    st = line_state((4, 5, 6)).with_placed(4, Pose(0.1, 0.1)).with_placed(6, Pose(0.2, 0.2))
    back = st.without(6)
    assert back.remaining == (5, 6)
    assert back.placed == ((4, Pose(0.1, 0.1)),)
    assert st.without(99) is st


# -- one simulation step --------------------------------------------------------------


def test_simulate_step_places_a_free_object():
    scene = make_scene([
        (1, "a", Footprint.regular(6, 0.04), Pose(0.2, 0.2)),
        (2, "anchor", Footprint.box(0.1, 0.1), Pose(0.5, 0.5)),
    ])
    states = (SubgoalState(objects=(1,), prior=DB.get("spatial:right"), anchor=2),)
    rng = np.random.default_rng(0)
    action, new_scene, new_states = simulate_step(scene, states, 0, rng,
                                                  PlannerConfig())
    assert action.kind == "goal_placement" and action.object_id == 1
    assert new_states[0].satisfied
    assert new_scene.pose(1) == action.pose
    assert scene.pose(1) == Pose(0.2, 0.2)
    ctx = states[0].context(scene)
    assert prior_density(ctx, action.pose) > 0.0


def test_simulate_step_unstacks_a_blocker(two_tower_scene):
    states = (SubgoalState(objects=(1,), prior=DB.get("spatial:right"), anchor=3),)
    rng = np.random.default_rng(1)
    action, new_scene, _ = simulate_step(two_tower_scene, states, 0, rng,
                                         PlannerConfig())
    assert action.kind == "unstack" and action.object_id == 2
    assert action.pose.level == 0
    assert new_scene.is_reachable(1)


def test_simulate_step_relocates_a_band_filling_obstacle():
    scene = make_scene([
        (1, "target", Footprint.regular(6, 0.03), Pose(0.8, 0.15)),
        (2, "anchor", Footprint.box(0.1, 0.1), Pose(0.2, 0.5)),
        (3, "bulk", Footprint.box(0.44, 0.34), Pose(0.47, 0.5)),
    ])
    states = (SubgoalState(objects=(1,), prior=DB.get("spatial:right"), anchor=2),)
    rng = np.random.default_rng(2)
    action, new_scene, new_states = simulate_step(scene, states, 0, rng,
                                                  PlannerConfig())
    assert action.kind == "relocation" and action.object_id == 3
    assert not new_states[0].satisfied  # relocation does not place the target
    assert new_scene.f_free(3, action.pose) in (0, 1)


def test_simulate_step_respects_frozen_ids(two_tower_scene):
    states = (SubgoalState(objects=(1,), prior=DB.get("spatial:right"), anchor=3),)
    rng = np.random.default_rng(3)
    config = PlannerConfig(frozen_ids=frozenset({2}))
    assert simulate_step(two_tower_scene, states, 0, rng, config) is None


def test_simulate_step_gives_up_without_a_collider_to_blame():
    # the right band hugs the wall too tightly for the target; the anchor
    # is frozen furniture, so there is no obstacle to blame or move
    scene = make_scene([
        (1, "target", Footprint.regular(6, 0.05), Pose(0.5, 0.15)),
        (2, "anchor", Footprint.box(0.1, 0.1), Pose(0.93, 0.5)),
    ])
    states = (SubgoalState(objects=(1,), prior=DB.get("spatial:right"), anchor=2),)
    rng = np.random.default_rng(4)
    config = PlannerConfig(frozen_ids=frozenset({2}))
    assert simulate_step(scene, states, 0, rng, config) is None


# -- full planning --------------------------------------------------------------------


def test_plan_single_spatial_goal_in_one_action():
    scene = make_scene([
        (1, "mover", Footprint.regular(6, 0.04), Pose(0.8, 0.8)),
        (2, "anchor", Footprint.box(0.1, 0.1), Pose(0.4, 0.4)),
    ])
    goal = parse_dsl("left(o1|o2)")
    plan = mcts_plan(scene, goal, seed=0)
    assert len(plan.actions) == 1
    assert plan.actions[0].kind == "goal_placement"
    final = replay(scene, plan).final_scene
    assert check_goal(final, goal, DB).satisfied


def test_kitchen_fixture_needs_exactly_three_actions():
    """Pinned rearrangement: the only path to the verified goal runs
    place, relocate blocker, place."""
    scene = load_scene(FIXTURES / "kitchen_scene.json")
    goal = parse_dsl("behind(o_apple | o_spoon); right(o_cup | o_apple)",
                     scene=scene)
    plan = mcts_plan(scene, goal, seed=0)
    assert [a.kind for a in plan.actions] == [
        "goal_placement", "relocation", "goal_placement"]
    assert [a.object_id for a in plan.actions] == [2, 4, 3]
    report = replay(scene, plan)
    assert report.ok
    assert check_goal(report.final_scene, goal, DB).satisfied


def test_kitchen_fixture_plan_shape_holds_across_seeds():
    scene = load_scene(FIXTURES / "kitchen_scene.json")
    goal = parse_dsl("behind(o_apple | o_spoon); right(o_cup | o_apple)",
                     scene=scene)
    for seed in range(4):
        plan = mcts_plan(scene, goal, seed=seed)
        assert [a.kind for a in plan.actions] == [
            "goal_placement", "relocation", "goal_placement"], seed


def test_stacked_fixture_unstacks_before_placing():
    scene = load_scene(FIXTURES / "stacked_scene.json")
    goal = parse_dsl("behind(o_apple | o_spoon)", scene=scene)
    plan = mcts_plan(scene, goal, seed=0)
    kinds = [a.kind for a in plan.actions]
    assert kinds[0] == "unstack" and plan.actions[0].object_id == 3
    assert kinds.index("goal_placement") > 0
    assert plan.actions[-1].object_id == 2
    assert replay(scene, plan).ok


def test_planning_is_deterministic_per_seed():
    scene = load_scene(FIXTURES / "kitchen_scene.json")
    goal = parse_dsl("behind(o_apple | o_spoon); right(o_cup | o_apple)",
                     scene=scene)
    p1 = mcts_plan(scene, goal, seed=0)
    p2 = mcts_plan(scene, goal, seed=0)
    assert p1 == p2
    assert p1.to_json() == p2.to_json()


def test_planning_failure_reports_progress():
    scene = load_scene(FIXTURES / "kitchen_scene.json")
    goal = parse_dsl("behind(o_apple | o_spoon); right(o_cup | o_apple)",
                     scene=scene)
    with pytest.raises(PlanningFailed) as err:
        mcts_plan(scene, goal, config=PlannerConfig(budget=3), seed=0)
    assert err.value.steps_used <= 3
    assert 0 <= err.value.best_reward <= 2


def test_unsatisfiable_spatial_goal_exhausts_the_space():
    # the anchor is frozen against the right wall: the right band cannot
    # hold the target and nothing may be relocated to change that
    scene = make_scene([
        (1, "target", Footprint.regular(6, 0.05), Pose(0.5, 0.15)),
        (2, "anchor", Footprint.box(0.1, 0.1), Pose(0.93, 0.5)),
    ])
    goal = parse_dsl("right(o1|o2)")
    config = PlannerConfig(budget=500, frozen_ids=frozenset({2}))
    with pytest.raises(PlanningFailed, match="search space exhausted"):
        mcts_plan(scene, goal, config=config, seed=0)


def test_movable_anchor_rescues_a_walled_in_relation():
    # same geometry, anchor free to move: the planner relocates the anchor
    # itself to open the band
    scene = make_scene([
        (1, "target", Footprint.regular(6, 0.05), Pose(0.5, 0.15)),
        (2, "anchor", Footprint.box(0.1, 0.1), Pose(0.93, 0.5)),
    ])
    goal = parse_dsl("right(o1|o2)")
    plan = mcts_plan(scene, goal, seed=0)
    assert any(a.kind == "relocation" and a.object_id == 2 for a in plan.actions)
    final = replay(scene, plan).final_scene
    assert check_goal(final, goal, DB).satisfied


def test_frozen_blocker_makes_the_stacked_goal_unsolvable():
    scene = load_scene(FIXTURES / "stacked_scene.json")
    goal = parse_dsl("behind(o_apple | o_spoon)", scene=scene)
    config = PlannerConfig(budget=300, frozen_ids=frozenset({3}))
    with pytest.raises(PlanningFailed, match="search space exhausted"):
        mcts_plan(scene, goal, config=config, seed=0)


def test_steps_used_counts_simulations_not_actions():
    scene = load_scene(FIXTURES / "kitchen_scene.json")
    goal = parse_dsl("behind(o_apple | o_spoon); right(o_cup | o_apple)",
                     scene=scene)
    plan = mcts_plan(scene, goal, seed=0)
    assert plan.steps_used >= len(plan.actions)
    assert plan.steps_used <= PlannerConfig().budget


def test_visit_counts_balance_across_the_tree(monkeypatch):
    """n(node) = 1 + sum of children's visits, for every node touched."""
    recorded = []

    class RecordingNode(planner_mod._Node):
        def __init__(self, *args, **kwargs):
            super().__init__(*args, **kwargs)
            recorded.append(self)

    monkeypatch.setattr(planner_mod, "_Node", RecordingNode)
    scene = load_scene(FIXTURES / "kitchen_scene.json")
    goal = parse_dsl("behind(o_apple | o_spoon); right(o_cup | o_apple)",
                     scene=scene)
    mcts_plan(scene, goal, seed=0)
    assert recorded, "planner never built a node"
    for node in recorded:
        assert node.visits == 1 + sum(c.visits for c in node.children)


def test_hopeless_detects_a_curve_leaving_the_table():
    scene = make_scene([
        (i, f"o{i}", Footprint.regular(6, 0.03), Pose(0.1 * i, 0.1))
        for i in (1, 2, 3, 4)
    ])
    st = (SubgoalState(objects=(1, 2, 3, 4), prior=DB.get("line"))
          .with_placed(1, Pose(0.5, 0.5)).with_placed(2, Pose(0.9, 0.5)))
    assert planner_mod._hopeless(scene, (st,))
    gentle = (SubgoalState(objects=(1, 2, 3, 4), prior=DB.get("line"))
              .with_placed(1, Pose(0.3, 0.5)).with_placed(2, Pose(0.42, 0.5)))
    assert not planner_mod._hopeless(scene, (gentle,))
    # fewer than two samples never decide
    young = SubgoalState(objects=(1, 2, 3, 4), prior=DB.get("line"))
    assert not planner_mod._hopeless(scene, (young,))


# -- fixed-pose baseline --------------------------------------------------------------


def test_pmcts_returns_empty_plan_when_already_at_goal(two_tower_scene):
    fixed = {3: two_tower_scene.pose(3)}
    plan = pmcts_plan(two_tower_scene, fixed, seed=0)
    assert plan.actions == () and plan.steps_used == 0


def test_pmcts_swaps_two_objects_via_a_third_spot():
    scene = make_scene([
        (1, "a", Footprint.box(0.1, 0.1), Pose(0.25, 0.5)),
        (2, "b", Footprint.box(0.1, 0.1), Pose(0.75, 0.5)),
    ])
    fixed = {1: Pose(0.75, 0.5), 2: Pose(0.25, 0.5)}
    plan = pmcts_plan(scene, fixed, seed=0)
    assert len(plan.actions) >= 3  # someone has to step aside first
    report = replay(scene, plan)
    assert report.ok
    final = report.final_scene
    assert final.pose(1) == Pose(0.75, 0.5)
    assert final.pose(2) == Pose(0.25, 0.5)


def test_pmcts_unstacks_to_reach_a_buried_object(two_tower_scene):
    fixed = {1: Pose(0.7, 0.3)}
    plan = pmcts_plan(two_tower_scene, fixed, seed=0)
    assert plan.actions[0].kind == "unstack"
    assert plan.actions[0].object_id == 2
    final = replay(two_tower_scene, plan).final_scene
    assert final.pose(1) == Pose(0.7, 0.3)


# -- config and serialization ---------------------------------------------------------


def test_planner_config_validation():
    with pytest.raises(ValueError, match="budget"):
        PlannerConfig(budget=0)
    with pytest.raises(ValueError, match="exploration"):
        PlannerConfig(exploration=-0.1)
    with pytest.raises(ValueError, match="pose_tries"):
        PlannerConfig(pose_tries=0)


def test_plan_json_round_trip(tmp_path):
    plan = Plan(seed=7, steps_used=42, actions=(
        Action(1, Pose(0.1, 0.2, 0.3, 0), "goal_placement"),
        Action(4, Pose(0.5, 0.6, 0.0, 1), "unstack"),
    ))
    assert Plan.from_json(plan.to_json()) == plan
    path = tmp_path / "plan.json"
    save_plan(plan, path)
    assert load_plan(path) == plan
