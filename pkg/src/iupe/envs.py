"""Seedable simulators: CartPole, Acrobot, MountainCar and N x N grid mazes.

Classic-control dynamics follow the usual Gym formulations.  Every
environment keeps its own ``numpy.random.Generator`` created at ``reset``,
so a ``(seed, action sequence)`` pair always reproduces the same states.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DemoFormatError, UsageError


@dataclass(frozen=True)
class EnvSpec:
    name: str
    kind: str
    n_actions: int
    state_shape: tuple
    max_steps: int
    goal: str
    maze_size: int = 0

    def __post_init__(self):
        if self.n_actions < 2 or self.max_steps < 1:
            raise ConfigError(f"invalid spec for {self.name}")

    @property
    def state_size(self):
        return int(np.prod(self.state_shape))


def _maze_spec(n):
    return EnvSpec(f"maze{n}", "maze", 4, (3, n, n), 10 * n * n, "agent on goal cell", n)


SPECS = {
    "cartpole": EnvSpec("cartpole", "cartpole", 2, (4,), 500, "survive >= 195 steps"),
    "acrobot": EnvSpec("acrobot", "acrobot", 3, (6,), 500, "tip above the line"),
    "mountaincar": EnvSpec("mountaincar", "mountaincar", 3, (2,), 200, "position >= 0.5"),
    "maze3": _maze_spec(3),
    "maze5": _maze_spec(5),
    "maze10": _maze_spec(10),
}

ENV_NAMES = tuple(SPECS)


def get_spec(name):
    try:
        return SPECS[name]
    except KeyError:
        raise UsageError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}") from None


class Env:
    """Common episode bookkeeping; subclasses implement ``_reset``/``_step``/``encode``."""

    def __init__(self, spec):
        self.spec = spec
        self.steps = 0
        self.total_reward = 0.0
        self.done = False
        self.rng = None

    def reset(self, seed):
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.total_reward = 0.0
        self.done = False
        self._reset()
        return self.encode()

    def step(self, action):
        if self.done:
            raise UsageError("episode already finished; call reset()")
        action = int(action)
        if not 0 <= action < self.spec.n_actions:
            raise UsageError(f"action {action} outside [0, {self.spec.n_actions})")
        reward, terminal = self._step(action)
        self.steps += 1
        self.total_reward += reward
        self.done = terminal or self.steps >= self.spec.max_steps
        return self.encode(), reward, self.done

    def goal_reached(self):
        raise NotImplementedError


class CartPole(Env):
    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masscart + masspole
    length = 0.5
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_limit = 12 * 2 * math.pi / 360
    x_limit = 2.4
    goal_steps = 195

    def _reset(self):
        self.state = [float(v) for v in self.rng.uniform(-0.05, 0.05, size=4)]

    def _step(self, action):
        x, x_dot, theta, theta_dot = self.state
        force = self.force_mag if action == 1 else -self.force_mag
        cos, sin = math.cos(theta), math.sin(theta)
        temp = (force + self.polemass_length * theta_dot**2 * sin) / self.total_mass
        theta_acc = (self.gravity * sin - cos * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * cos**2 / self.total_mass)
        )
        x_acc = temp - self.polemass_length * theta_acc * cos / self.total_mass
        x += self.tau * x_dot
        x_dot += self.tau * x_acc
        theta += self.tau * theta_dot
        theta_dot += self.tau * theta_acc
        self.state = [x, x_dot, theta, theta_dot]
        failed = abs(x) > self.x_limit or abs(theta) > self.theta_limit
        return 1.0, failed

    def encode(self):
        return np.array(self.state, dtype=np.float64)

    def goal_reached(self):
        return self.steps >= self.goal_steps


class MountainCar(Env):
    min_position = -1.2
    max_position = 0.6
    max_speed = 0.07
    goal_position = 0.5
    force = 0.001
    gravity = 0.0025

    def _reset(self):
        self.position = float(self.rng.uniform(-0.6, -0.4))
        self.velocity = 0.0
        self.reached = False

    def _step(self, action):
        v = self.velocity + (action - 1) * self.force - math.cos(3 * self.position) * self.gravity
        v = min(max(v, -self.max_speed), self.max_speed)
        p = self.position + v
        p = min(max(p, self.min_position), self.max_position)
        if p == self.min_position and v < 0:
            v = 0.0
        self.position, self.velocity = p, v
        self.reached = p >= self.goal_position
        return -1.0, self.reached

    def encode(self):
        return np.array([self.position, self.velocity], dtype=np.float64)

    def goal_reached(self):
        return self.reached


def _wrap(x, lo, hi):
    span = hi - lo
    while x > hi:
        x -= span
    while x < lo:
        x += span
    return x


class Acrobot(Env):
    dt = 0.2
    l1 = 1.0
    m1 = m2 = 1.0
    lc1 = lc2 = 0.5
    moi = 1.0
    g = 9.8
    max_vel_1 = 4 * math.pi
    max_vel_2 = 9 * math.pi
    torques = (-1.0, 0.0, 1.0)

    def _reset(self):
        self.state = [float(v) for v in self.rng.uniform(-0.1, 0.1, size=4)]
        self.reached = False

    def _dsdt(self, s, torque):
        t1, t2, w1, w2 = s
        m1, m2, l1, lc1, lc2, moi, g = self.m1, self.m2, self.l1, self.lc1, self.lc2, self.moi, self.g
        d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(t2)) + 2 * moi
        d2 = m2 * (lc2**2 + l1 * lc2 * math.cos(t2)) + moi
        phi2 = m2 * lc2 * g * math.cos(t1 + t2 - math.pi / 2.0)
        phi1 = (
            -m2 * l1 * lc2 * w2**2 * math.sin(t2)
            - 2 * m2 * l1 * lc2 * w2 * w1 * math.sin(t2)
            + (m1 * lc1 + m2 * l1) * g * math.cos(t1 - math.pi / 2)
            + phi2
        )
        dd2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * w1**2 * math.sin(t2) - phi2) / (
            m2 * lc2**2 + moi - d2**2 / d1
        )
        dd1 = -(d2 * dd2 + phi1) / d1
        return (w1, w2, dd1, dd2)

    def _rk4(self, s, torque):
        h = self.dt
        k1 = self._dsdt(s, torque)
        k2 = self._dsdt([a + h / 2 * b for a, b in zip(s, k1)], torque)
        k3 = self._dsdt([a + h / 2 * b for a, b in zip(s, k2)], torque)
        k4 = self._dsdt([a + h * b for a, b in zip(s, k3)], torque)
        return [a + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4)]

    def _step(self, action):
        t1, t2, w1, w2 = self._rk4(self.state, self.torques[action])
        t1 = _wrap(t1, -math.pi, math.pi)
        t2 = _wrap(t2, -math.pi, math.pi)
        w1 = min(max(w1, -self.max_vel_1), self.max_vel_1)
        w2 = min(max(w2, -self.max_vel_2), self.max_vel_2)
        self.state = [t1, t2, w1, w2]
        self.reached = -math.cos(t1) - math.cos(t1 + t2) > 1.0
        return -1.0, self.reached

    def encode(self):
        t1, t2, w1, w2 = self.state
        return np.array([math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), w1, w2])

    def goal_reached(self):
        return self.reached


# -- mazes ----------------------------------------------------------------------

WALL_N, WALL_S, WALL_E, WALL_W = 1, 2, 4, 8
# action index -> (wall bit, d_row, d_col); actions are N, S, E, W
MOVES = ((WALL_N, -1, 0), (WALL_S, 1, 0), (WALL_E, 0, 1), (WALL_W, 0, -1))
OPPOSITE = {WALL_N: WALL_S, WALL_S: WALL_N, WALL_E: WALL_W, WALL_W: WALL_E}


@dataclass(frozen=True)
class MazeLayout:
    """Per-cell wall bitmask (bit set = wall present) plus start and goal."""

    walls: tuple
    start: tuple
    goal: tuple

    @property
    def size(self):
        return len(self.walls)

    def open(self, cell, action):
        bit, dr, dc = MOVES[action]
        return not self.walls[cell[0]][cell[1]] & bit

    def neighbours(self, cell):
        for action, (bit, dr, dc) in enumerate(MOVES):
            if self.open(cell, action):
                yield action, (cell[0] + dr, cell[1] + dc)

    def walls_symmetric(self):
        n = self.size
        for r in range(n):
            for c in range(n):
                for bit, dr, dc in MOVES:
                    rr, cc = r + dr, c + dc
                    inside = 0 <= rr < n and 0 <= cc < n
                    has = bool(self.walls[r][c] & bit)
                    if not inside:
                        if not has:
                            return False
                    elif has != bool(self.walls[rr][cc] & OPPOSITE[bit]):
                        return False
        return True

    def to_text(self):
        lines = [str(self.size)]
        lines += ["".join(f"{w:x}" for w in row) for row in self.walls]
        lines.append(f"start {self.start[0]} {self.start[1]}")
        lines.append(f"goal {self.goal[0]} {self.goal[1]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = text.strip("\n").split("\n")
        try:
            n = int(lines[0])
        except (IndexError, ValueError):
            raise DemoFormatError("first line must be the maze size", 1) from None
        if len(lines) != n + 3:
            raise DemoFormatError(f"expected {n + 3} lines, found {len(lines)}", len(lines))
        rows = []
        for i in range(n):
            row = lines[1 + i].strip()
            if len(row) != n:
                raise DemoFormatError(f"row must have {n} hex digits", i + 2)
            try:
                rows.append(tuple(int(ch, 16) for ch in row))
            except ValueError:
                raise DemoFormatError("invalid hex digit", i + 2) from None
        cells = []
        for j, key in enumerate(("start", "goal")):
            parts = lines[n + 1 + j].split()
            if len(parts) != 3 or parts[0] != key:
                raise DemoFormatError(f"expected '{key} r c'", n + 2 + j)
            cells.append((int(parts[1]), int(parts[2])))
        return cls(tuple(rows), cells[0], cells[1])


def maze_generate(n, seed):
    """Perfect maze on an ``n x n`` grid via randomized depth-first carving.

    Start is the top-left cell and goal the bottom-right one.
    """
    if n < 2:
        raise ConfigError("maze size must be at least 2")
    rng = np.random.default_rng(seed)
    walls = [[WALL_N | WALL_S | WALL_E | WALL_W] * n for _ in range(n)]
    visited = [[False] * n for _ in range(n)]
    stack = [(0, 0)]
    visited[0][0] = True
    while stack:
        r, c = stack[-1]
        options = [
            (bit, r + dr, c + dc)
            for bit, dr, dc in MOVES
            if 0 <= r + dr < n and 0 <= c + dc < n and not visited[r + dr][c + dc]
        ]
        if not options:
            stack.pop()
            continue
        bit, rr, cc = options[rng.integers(len(options))]
        walls[r][c] &= ~bit
        walls[rr][cc] &= ~OPPOSITE[bit]
        visited[rr][cc] = True
        stack.append((rr, cc))
    return MazeLayout(tuple(tuple(row) for row in walls), (0, 0), (n - 1, n - 1))


def bfs_path(layout, start=None):
    """Shortest action sequence from ``start`` (default: layout start) to the goal."""
    start = layout.start if start is None else tuple(start)
    prev = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == layout.goal:
            break
        for action, nxt in layout.neighbours(cell):
            if nxt not in prev:
                prev[nxt] = (cell, action)
                queue.append(nxt)
    if layout.goal not in prev:
        return None
    actions = []
    cell = layout.goal
    while prev[cell] is not None:
        cell, action = prev[cell]
        actions.append(action)
    return actions[::-1]


class Maze(Env):
    """Grid maze; ``reset(seed)`` draws a fresh layout unless one is pinned."""

    def __init__(self, spec, layout=None):
        super().__init__(spec)
        self.n = spec.maze_size
        self.fixed_layout = layout
        self.step_penalty = 0.1 / (self.n * self.n)

    def _reset(self):
        self.layout = self.fixed_layout or maze_generate(self.n, int(self.rng.integers(2**63)))
        self.agent = self.layout.start
        self._walls = np.array(self.layout.walls, dtype=np.float64) / 15.0
        self._goal = np.zeros((self.n, self.n))
        self._goal[self.layout.goal] = 1.0

    def _step(self, action):
        if self.layout.open(self.agent, action):
            _, dr, dc = MOVES[action]
            self.agent = (self.agent[0] + dr, self.agent[1] + dc)
        reward = -self.step_penalty
        at_goal = self.agent == self.layout.goal
        if at_goal:
            reward += 1.0
        return reward, at_goal

    def encode(self):
        agent = np.zeros((self.n, self.n))
        agent[self.agent] = 1.0
        return np.stack([self._walls, agent, self._goal])

    def goal_reached(self):
        return self.agent == self.layout.goal


_CLASSES = {"cartpole": CartPole, "acrobot": Acrobot, "mountaincar": MountainCar, "maze": Maze}


def make_env(spec, **kwargs):
    if isinstance(spec, str):
        spec = get_spec(spec)
    return _CLASSES[spec.kind](spec, **kwargs)


def goal_reached(spec, episode):
    """Goal predicate for a finished episode.

    ``episode`` is either a live environment or a sequence of encoded states
    (the full trajectory including the initial state).
    """
    if isinstance(episode, Env):
        return bool(episode.goal_reached())
    states = list(episode)
    last = np.asarray(states[-1])
    if spec.kind == "cartpole":
        return len(states) - 1 >= CartPole.goal_steps
    if spec.kind == "mountaincar":
        return bool(last[0] >= MountainCar.goal_position)
    if spec.kind == "acrobot":
        c1, s1, c2, s2 = last[:4]
        # cos(t1 + t2) = c1 c2 - s1 s2
        return bool(-c1 - (c1 * c2 - s1 * s2) > 1.0)
    return bool(np.array_equal(last[1], last[2]))


def maze_layout_from_state(state):
    """Recover the wall layout encoded in a maze state tensor."""
    state = np.asarray(state)
    walls = np.rint(state[0] * 15).astype(int)
    n = walls.shape[0]
    goal = tuple(int(v) for v in np.argwhere(state[2] > 0)[0])
    return MazeLayout(tuple(tuple(int(w) for w in row) for row in walls), (0, 0), goal)
