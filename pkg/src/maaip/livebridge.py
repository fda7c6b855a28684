"""Live rollout serving over WebSocket.

One simulation per server process, stepped in real time (30 Hz scaled by a
speed multiplier).  Every control step one frame message goes out to all
connected clients; incoming commands are drained right before the next
policy query, so steering lands within two control steps.  The first
connected client holds the controller role (transferable via
``release_control``); everyone else watches.  Checkpoint parameters are
never mutated -- serving is inference only, mean actions by default.

Wire protocol: JSON messages with a ``version`` field, documented with
exact schemas in docs/wire-protocol.md.
"""

from __future__ import annotations

import asyncio
import json
import threading
from dataclasses import dataclass, field

import numpy as np

from . import features, marl
from .arena import forward_kinematics, spawn_arena, step_physics
from .config import N_PARTS
from .evalkit import PolicyRunner
from .training import Checkpoint, control_reward, load_checkpoint

PROTOCOL_VERSION = 1


class ProtocolError(ValueError):
    """Client-visible rejection; the session survives."""


@dataclass
class CommandMessage:
    kind: str
    agent: object = "both"      # "both" | 0 | 1
    dx: float = 0.0
    dy: float = 0.0
    seed: int = 0
    checkpoint: str = ""
    multiplier: float = 1.0


_COMMAND_KINDS = {"set_heading", "pause", "resume", "reset", "load_checkpoint",
                  "set_speed", "release_control"}


def decode_command(raw) -> CommandMessage:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ProtocolError(f"malformed JSON: {err}") from err
    if not isinstance(obj, dict):
        raise ProtocolError("command must be a JSON object")
    if "version" in obj and obj["version"] != PROTOCOL_VERSION:
        raise ProtocolError(
            f"protocol version {obj['version']} unsupported, server speaks {PROTOCOL_VERSION}")
    kind = obj.get("type")
    if kind not in _COMMAND_KINDS:
        raise ProtocolError(f"unknown command type {kind!r}")
    cmd = CommandMessage(kind=kind)
    if kind == "set_heading":
        cmd.agent = obj.get("agent", "both")
        if cmd.agent not in ("both", 0, 1):
            raise ProtocolError("agent must be 0, 1 or 'both'")
        try:
            cmd.dx, cmd.dy = float(obj["dx"]), float(obj["dy"])
        except (KeyError, TypeError, ValueError) as err:
            raise ProtocolError("set_heading needs numeric dx, dy") from err
        if not np.isfinite([cmd.dx, cmd.dy]).all() or cmd.dx * cmd.dx + cmd.dy * cmd.dy < 1e-12:
            raise ProtocolError("heading must be a nonzero finite vector")
    elif kind == "reset":
        cmd.seed = int(obj.get("seed", 0))
    elif kind == "load_checkpoint":
        cmd.checkpoint = str(obj.get("id", ""))
    elif kind == "set_speed":
        try:
            cmd.multiplier = float(obj["multiplier"])
        except (KeyError, TypeError, ValueError) as err:
            raise ProtocolError("set_speed needs a numeric multiplier") from err
        if not 0.1 <= cmd.multiplier <= 16.0:
            raise ProtocolError("speed multiplier must lie in [0.1, 16]")
    return cmd


def encode_frame(step: int, ckpt_id: str, paused: bool, parts, root_vel, headings,
                 rewards, events) -> str:
    agents = []
    for i in range(2):
        agents.append({
            "parts": [[round(float(parts[i].pos[p, 0]), 5),
                       round(float(parts[i].pos[p, 1]), 5),
                       round(float(parts[i].angle[p]), 5)] for p in range(N_PARTS)],
            "root_vel": [round(float(v), 5) for v in root_vel[i]],
            "heading": None if headings is None else [float(headings[i][0]),
                                                      float(headings[i][1])],
            "rewards": rewards[i],
        })
    contacts = [{
        "src": list(e.src), "dst": list(e.dst),
        "force": round(float(e.force_mag), 3),
        "point": [round(float(e.point[0]), 5), round(float(e.point[1]), 5)],
        "normal": [round(float(e.normal[0]), 5), round(float(e.normal[1]), 5)],
    } for e in events]
    return json.dumps({
        "type": "frame", "version": PROTOCOL_VERSION, "step": step,
        "checkpoint": ckpt_id, "paused": paused, "agents": agents,
        "contacts": contacts,
    })


def decode_frame(raw) -> dict:
    obj = json.loads(raw)
    if obj.get("version") != PROTOCOL_VERSION:
        raise ProtocolError("frame version mismatch")
    return obj


class LiveServer:
    """Serve one simulation; many viewers, one controller."""

    def __init__(self, checkpoints, port: int = 8787, host: str = "127.0.0.1",
                 speed: float = 1.0, stochastic: bool = False, seed: int = 0):
        if not checkpoints:
            raise ValueError("need at least one checkpoint")
        self.ckpts: dict[str, Checkpoint] = {}
        for entry in checkpoints:
            if isinstance(entry, tuple):
                name, ck = entry
            else:
                import os
                name = os.path.splitext(os.path.basename(entry))[0]
                ck = load_checkpoint(entry)
            base, k = name, 2
            while name in self.ckpts:  # same basename from different runs
                name = f"{base}_{k}"
                k += 1
            self.ckpts[name] = ck
        self.active_id = next(iter(self.ckpts))
        self.port = port
        self.host = host
        self.speed = speed
        self.stochastic = stochastic
        self.rng = np.random.default_rng(seed)
        self.paused = False
        self.step_counter = 0
        self._clients: dict = {}
        self._controller = None
        self._commands: asyncio.Queue | None = None
        self._stop_event: asyncio.Event | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._startup_error: Exception | None = None
        self._reset_sim(seed)

    # -- simulation ------------------------------------------------------------

    @property
    def active(self) -> Checkpoint:
        return self.ckpts[self.active_id]

    def _reset_sim(self, seed: int) -> None:
        ck = self.active
        self.state = spawn_arena(ck.config.arena, seed=seed)
        self.runner = PolicyRunner(ck)
        if ck.heading:
            ang = self.rng.uniform(-np.pi, np.pi)
            self.headings = np.array([[np.cos(ang), np.sin(ang)]] * 2)
        else:
            self.headings = None

    def _observe(self, agent: int):
        heading = None if self.headings is None else self.headings[agent]
        return features.build_observation(self.state.fighters[agent],
                                          self.state.fighters[1 - agent],
                                          self.active.config.arena, heading=heading)

    def step_simulation(self) -> str:
        """One control step; returns the encoded frame."""
        ck = self.active
        obs = [self._observe(i) for i in range(2)]
        actions = np.zeros((2, 7))
        mode = "stochastic" if self.stochastic else "mean"
        for i in range(2):
            norm = ck.normalizer.apply(obs[i].features()[None])
            a, _, _ = marl.policy_act(ck.policy, norm, [i], self.rng, mode=mode)
            actions[i] = a[0]
        from .arena import action_mapping, apply_actions
        center, half = action_mapping(ck.config.arena)
        apply_actions(self.state, center + half * actions)
        self.state, events = step_physics(self.state)
        post = [self._observe(i) for i in range(2)]

        rewards = []
        from .arena import damage_tally
        for i in range(2):
            comp: dict = {}
            motion_tr = features.motion_transition(obs[i].o_self, post[i].o_self)[None]
            inter_tr = features.interaction_transition(obs[i], post[i].o_self)[None]
            comp.update(self.runner.reward_components(motion_tr, inter_tr, i))
            kind = ck.meta.get("control", "none")
            tc = ck.config.train
            if kind in ("damage_min", "damage_max"):
                received = damage_tally(events, i)
                dealt = damage_tally(events, 1 - i)
                comp["control"] = float(control_reward(
                    kind, damage_received=received, damage_dealt=dealt,
                    scale=tc.damage_scale))
            elif kind == "heading" and self.headings is not None:
                comp["control"] = float(control_reward(
                    "heading", heading_dir=self.headings[i],
                    root_vel=self.state.fighters[i].root_linvel,
                    heading_w=tc.heading_w, target_speed=tc.heading_speed,
                    literal=tc.heading_reward == "literal"))
            rewards.append(comp or None)

        parts = [forward_kinematics(self.state.fighters[i], ck.config.arena)
                 for i in range(2)]
        self.step_counter += 1
        return encode_frame(
            self.step_counter, self.active_id, self.paused, parts,
            [f.root_linvel for f in self.state.fighters], self.headings, rewards, events)

    def apply_command(self, cmd: CommandMessage) -> dict:
        """Mutate sim state; returns the ack payload.  Raises ProtocolError."""
        if cmd.kind == "set_heading":
            if self.headings is None:
                raise ProtocolError("active checkpoint is not heading-conditioned")
            v = np.array([cmd.dx, cmd.dy])
            v = v / np.linalg.norm(v)
            if cmd.agent == "both":
                self.headings[:] = v
            else:
                self.headings[int(cmd.agent)] = v
        elif cmd.kind == "pause":
            self.paused = True
        elif cmd.kind == "resume":
            self.paused = False
        elif cmd.kind == "reset":
            self._reset_sim(cmd.seed)
        elif cmd.kind == "load_checkpoint":
            if cmd.checkpoint not in self.ckpts:
                raise ProtocolError(f"unknown checkpoint id {cmd.checkpoint!r}")
            self.active_id = cmd.checkpoint
            ck = self.active
            self.runner = PolicyRunner(ck)
            if ck.heading and self.headings is None:
                self.headings = np.array([[1.0, 0.0], [1.0, 0.0]])
            if not ck.heading:
                self.headings = None
        elif cmd.kind == "set_speed":
            self.speed = cmd.multiplier
        return {"type": "ack", "version": PROTOCOL_VERSION, "command": cmd.kind,
                "checkpoint": self.active_id}

    # -- networking ---------------------------------------------------------------

    async def _handler(self, websocket):
        queue: asyncio.Queue = asyncio.Queue(maxsize=4)
        self._clients[websocket] = queue
        if self._controller is None:
            self._controller = websocket
        sender = asyncio.create_task(self._sender(websocket, queue))
        role = "controller" if self._controller is websocket else "viewer"
        arena = self.active.config.arena
        await websocket.send(json.dumps({
            "type": "hello", "version": PROTOCOL_VERSION, "role": role,
            "checkpoints": list(self.ckpts), "active": self.active_id,
            "heading_capable": self.active.heading,
            "geometry": {
                "halfextent": arena.halfextent,
                "part_radii": list(arena.part_radii),
                "control_hz": arena.control_hz,
            },
        }))
        try:
            async for raw in websocket:
                try:
                    cmd = decode_command(raw)
                    if self._controller is None:
                        self._controller = websocket
                    if websocket is not self._controller:
                        raise ProtocolError("viewer role: another client holds control")
                    if cmd.kind == "release_control":
                        self._controller = None
                        await websocket.send(json.dumps({
                            "type": "ack", "version": PROTOCOL_VERSION,
                            "command": "release_control", "checkpoint": self.active_id}))
                        continue
                    ack = self.apply_command(cmd)
                    await websocket.send(json.dumps(ack))
                except ProtocolError as err:
                    await websocket.send(json.dumps({
                        "type": "error", "version": PROTOCOL_VERSION, "message": str(err)}))
        finally:
            self._clients.pop(websocket, None)
            if self._controller is websocket:
                self._controller = None
            sender.cancel()

    async def _sender(self, websocket, queue: asyncio.Queue):
        try:
            while True:
                msg = await queue.get()
                await websocket.send(msg)
        except asyncio.CancelledError:
            pass

    def _broadcast(self, frame: str) -> None:
        for queue in self._clients.values():
            if queue.full():
                try:
                    queue.get_nowait()  # slow client: drop the oldest frame
                except asyncio.QueueEmpty:
                    pass
            queue.put_nowait(frame)

    async def _sim_loop(self):
        loop = asyncio.get_running_loop()
        dt = self.active.config.arena.control_dt
        next_tick = loop.time()
        while True:
            if not self.paused:
                frame = self.step_simulation()
                self._broadcast(frame)
            next_tick += dt / self.speed
            delay = next_tick - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                next_tick = loop.time()  # fell behind: do not burst

    async def main(self, ready: threading.Event | None = None):
        from websockets.asyncio.server import serve
        self._commands = asyncio.Queue()
        self._stop_event = asyncio.Event()
        self._loop = asyncio.get_running_loop()
        try:
            server = await serve(self._handler, self.host, self.port)
        except OSError as err:
            self._startup_error = RuntimeError(f"cannot bind port {self.port}: {err}")
            if ready:
                ready.set()
            raise self._startup_error from err
        if ready:
            ready.set()
        sim = asyncio.create_task(self._sim_loop())
        try:
            await self._stop_event.wait()
        finally:
            sim.cancel()
            server.close()
            await server.wait_closed()

    # -- thread helpers (tests, CLI) -------------------------------------------------

    def start_background(self) -> None:
        ready = threading.Event()
        self._thread = threading.Thread(target=self._thread_main, args=(ready,), daemon=True)
        self._thread.start()
        ready.wait(timeout=10)
        if self._startup_error:
            raise self._startup_error

    def _thread_main(self, ready: threading.Event) -> None:
        try:
            asyncio.run(self.main(ready))
        except RuntimeError:
            pass

    def stop(self) -> None:
        if self._loop and self._stop_event:
            self._loop.call_soon_threadsafe(self._stop_event.set)
        if self._thread:
            self._thread.join(timeout=10)
            self._thread = None
