import json

import numpy as np
import pytest

from iupe.envs import ENV_NAMES, bfs_path, get_spec, goal_reached, make_env, maze_generate
from iupe.errors import DemoFormatError, ExpertQualityError, InputError
from iupe.experts import (
    Trajectory,
    demos_from_text,
    demos_to_text,
    expert_action,
    make_pairs,
    read_demos,
    record_demonstrations,
    run_episode,
    write_demos,
)
from iupe.metrics import eval_seeds, expert_rewards, random_rewards


def test_maze_expert_follows_shortest_path():
    spec = get_spec("maze10")
    for seed in range(20):
        layout = maze_generate(10, seed)
        env = make_env(spec, layout=layout)
        run_episode(env, expert_action, seed)
        assert env.goal_reached()
        assert env.steps == len(bfs_path(layout))


def test_cartpole_expert_always_hits_cap():
    assert expert_rewards(get_spec("cartpole"), eval_seeds(100, 0)) == [500.0] * 100


def test_mountaincar_expert_band():
    value = np.mean(expert_rewards(get_spec("mountaincar"), eval_seeds(100, 0)))
    assert -170 <= value <= -85


@pytest.mark.parametrize("name", ENV_NAMES)
def test_expert_beats_random(name):
    spec = get_spec(name)
    seeds = eval_seeds(100, 1)
    assert np.mean(expert_rewards(spec, seeds)) > np.mean(random_rewards(spec, seeds))


def test_maze3_demos_end_on_goal():
    spec = get_spec("maze3")
    demos = record_demonstrations(spec, 10, 7)
    assert len(demos) == 10
    for d in demos:
        assert d.kind == "maze3"
        assert goal_reached(spec, d.states)


def test_all_recorded_demos_reach_goal():
    for name in ("cartpole", "mountaincar", "acrobot", "maze5"):
        spec = get_spec(name)
        for d in record_demonstrations(spec, 3, 1):
            assert goal_reached(spec, d.states)


def test_recording_is_deterministic():
    spec = get_spec("mountaincar")
    a = record_demonstrations(spec, 3, 11)
    b = record_demonstrations(spec, 3, 11)
    assert demos_to_text(a) == demos_to_text(b)


def test_hopeless_expert_raises():
    spec = get_spec("mountaincar")
    with pytest.raises(ExpertQualityError):
        record_demonstrations(spec, 1, 0, expert=lambda env: 1)


def test_demo_records_are_state_only():
    demos = record_demonstrations(get_spec("maze3"), 2, 0)
    lines = demos_to_text(demos).splitlines()
    assert json.loads(lines[0])["count"] == 2
    for line in lines[1:]:
        record = json.loads(line)
        assert set(record) <= {"kind", "shape", "states", "reward"}
        assert "actions" not in record


def test_pair_counts_shapes_and_adjacency():
    demos = record_demonstrations(get_spec("cartpole"), 2, 3)
    pairs = make_pairs(demos)
    assert len(pairs) == sum(len(d) - 1 for d in demos)
    assert pairs.s.shape == pairs.s_next.shape == (len(pairs), 4)
    first = demos[0]
    L = len(first)
    assert np.array_equal(pairs.s[: L - 1], first.states[:-1])
    assert np.array_equal(pairs.s_next[: L - 1], first.states[1:])
    assert np.array_equal(pairs.s[L - 1], demos[1].states[0])


def test_make_pairs_empty_raises():
    with pytest.raises(InputError):
        make_pairs([])


def test_trajectory_needs_two_states():
    with pytest.raises(InputError):
        Trajectory("cartpole", np.zeros((1, 4)))


def test_file_round_trip(tmp_path):
    demos = record_demonstrations(get_spec("maze5"), 3, 2) + record_demonstrations(get_spec("acrobot"), 1, 2)
    path = tmp_path / "demos.jsonl"
    write_demos(path, demos)
    back = read_demos(path)
    assert len(back) == len(demos)
    for a, b in zip(demos, back):
        assert a.kind == b.kind
        assert a.reward == b.reward
        assert np.array_equal(a.states, b.states)  # exact, not approximate


def test_empty_file_round_trip(tmp_path):
    path = tmp_path / "empty.jsonl"
    write_demos(path, [])
    assert read_demos(path) == []


def test_truncated_state_names_record():
    demos = record_demonstrations(get_spec("cartpole"), 2, 0)
    lines = demos_to_text(demos).splitlines()
    broken = json.loads(lines[2])
    broken["states"][3] = broken["states"][3][:-1]
    lines[2] = json.dumps(broken)
    with pytest.raises(DemoFormatError, match="line 3"):
        demos_from_text("\n".join(lines) + "\n")


def test_bad_header_rejected():
    with pytest.raises(DemoFormatError, match="line 1"):
        demos_from_text('{"format": "something-else"}\n')
