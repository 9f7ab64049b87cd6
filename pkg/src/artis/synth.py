"""Synthetic task videos with exact action ground truth.

A script is a list of actions, each a motif acted out by checkered blobs for
a number of frames. Blob positions are continuous functions of time and are
rendered with bilinear sub-pixel sampling, so a script can be replayed at a
different speed (``time_scale``) to obtain a time-warped observation with a
known warp.

Script text format (``key = value`` lines, ``#`` comments)::

    canvas = 160x96
    seed = 3
    noise_sigma = 0
    clutter = 2
    action = reach translate_blob duration=40 size=16 speed=1.5 start=20,30 angle=0
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .evaluation import GroundTruthSegment
from .exceptions import ValidationError
from .io import FrameSequence

MOTIFS = ("translate_blob", "oscillate_blob", "static", "swap_blobs")
BACKGROUND = 20.0
LIGHT, DARK = 230.0, 90.0


@dataclass(frozen=True)
class Action:
    label: str
    duration: int
    motif: str
    size: int = 16
    speed: float = 1.0
    start: tuple = (20.0, 20.0)
    angle: float = 0.0
    amplitude: float = 10.0
    period: float = 0.0
    end: tuple = (60.0, 20.0)
    phase: float = 0.0

    def __post_init__(self):
        if self.motif not in MOTIFS:
            raise ValidationError(f"unknown motif {self.motif!r}")
        if self.duration < 2:
            raise ValidationError(f"action {self.label!r}: duration must be >= 2")
        if self.size < 4:
            raise ValidationError(f"action {self.label!r}: blob size must be >= 4")

    def positions(self, t: float) -> list:
        """Top-left corners of this action's blobs at motif time ``t``."""
        x0, y0 = self.start
        if self.motif == "static":
            return [(x0, y0)]
        if self.motif == "translate_blob":
            a = math.radians(self.angle)
            return [(x0 + self.speed * t * math.cos(a), y0 + self.speed * t * math.sin(a))]
        if self.motif == "oscillate_blob":
            a = math.radians(self.angle)
            period = self.period or (self.duration - 1)
            s = self.amplitude * math.sin(2 * math.pi * t / period + math.radians(self.phase))
            return [(x0 + s * math.cos(a), y0 + s * math.sin(a))]
        # swap_blobs: two blobs exchange places over the action
        x1, y1 = self.end
        u = t / max(self.duration - 1, 1)
        return [(x0 + u * (x1 - x0), y0 + u * (y1 - y0)),
                (x1 + u * (x0 - x1), y1 + u * (y0 - y1))]


@dataclass(frozen=True)
class SynthScript:
    actions: tuple
    canvas: tuple = (160, 96)
    seed: int = 0
    noise_sigma: float = 0.0
    clutter: int = 0

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.actions:
            raise ValidationError("script has no actions")
        w, h = self.canvas
        for act in self.actions:
            for t in np.linspace(0.0, act.duration - 1, 4 * act.duration):
                for x, y in act.positions(float(t)):
                    if x < 0 or y < 0 or x + act.size > w or y + act.size > h:
                        raise ValidationError(
                            f"action {act.label!r}: blob leaves the {w}x{h} canvas at t={t:.2f}"
                        )


def _texture(size: int, check: int = 4) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return np.where(((yy // check) + (xx // check)) % 2 == 0, LIGHT, DARK)


def _paste(canvas: np.ndarray, tex: np.ndarray, x: float, y: float) -> None:
    """Draw ``tex`` with its top-left corner at sub-pixel ``(x, y)``."""
    s = tex.shape[0]
    h, w = canvas.shape
    r0, c0 = max(int(math.floor(y)), 0), max(int(math.floor(x)), 0)
    r1, c1 = min(int(math.ceil(y + s)) + 1, h), min(int(math.ceil(x + s)) + 1, w)
    rows, cols = np.mgrid[r0:r1, c0:c1].astype(np.float64)
    coords = [rows - y + 1, cols - x + 1]
    # one-pixel zero border so blob edges blend into what is underneath
    alpha = ndimage.map_coordinates(np.pad(np.ones_like(tex), 1), coords, order=1)
    premult = ndimage.map_coordinates(np.pad(tex, 1), coords, order=1)
    canvas[r0:r1, c0:c1] = canvas[r0:r1, c0:c1] * (1.0 - alpha) + premult


def _background(script: SynthScript) -> np.ndarray:
    w, h = script.canvas
    bg = np.full((h, w), BACKGROUND)
    rng = np.random.default_rng(script.seed + 7919)
    for _ in range(script.clutter):
        s = int(rng.integers(8, 14))
        x = float(rng.integers(0, w - s))
        y = float(rng.integers(0, h - s))
        _paste(bg, _texture(s, 3) * 0.6, x, y)
    return bg


def render(script: SynthScript, time_scale: float = 1.0, sequence_id: str = "synth",
           noise_seed: int | None = None):
    """Render frames and ground-truth segments.

    With ``time_scale = s`` each action is sampled at motif times
    ``0, s, 2s, ...`` below its duration, i.e. the video plays ``s`` times
    faster than the script (``s = 0.5`` doubles the frame count).
    The static background depends on ``script.seed`` only; pixel noise is
    drawn from ``noise_seed`` (default ``script.seed``) so a second
    recording of the same scene can get independent noise.
    """
    if time_scale <= 0:
        raise ValidationError("time_scale must be positive")
    rng = np.random.default_rng(script.seed if noise_seed is None else noise_seed)
    bg = _background(script)
    frames, labels = [], []
    for act in script.actions:
        count = max(int(math.ceil((act.duration - 1) / time_scale - 1e-9)) + 1, 2)
        start = len(frames)
        # the second swap blob gets a finer checker so swaps are not palindromes
        textures = (_texture(act.size), _texture(act.size, 2))
        for k in range(count):
            t = min(k * time_scale, act.duration - 1)
            img = bg.copy()
            for tex, (x, y) in zip(textures, act.positions(t)):
                _paste(img, tex, x, y)
            frames.append(img)
        labels.append(GroundTruthSegment(act.label, start, len(frames) - 1, sequence_id))
    stack = np.stack(frames)
    if script.noise_sigma > 0:
        stack = stack + rng.normal(0.0, script.noise_sigma, stack.shape)
    stack = np.clip(np.floor(stack + 0.5), 0, 255).astype(np.uint8)
    return FrameSequence(stack, source_id=sequence_id), labels


def permute(script: SynthScript, order) -> SynthScript:
    order = list(order)
    if sorted(order) != list(range(len(script.actions))):
        raise ValidationError(f"{order} is not a permutation of {len(script.actions)} actions")
    return replace(script, actions=tuple(script.actions[i] for i in order))


def random_script(seed: int, n_actions: int = 4, canvas=(160, 96), duration=(36, 48),
                  noise_sigma: float = 0.0, clutter: int = 2) -> SynthScript:
    """A script whose actions each move a blob through their own part of the canvas.

    Actions cycle through translate, swap and oscillate motifs with distinct
    start positions and headings, so no two actions look alike.
    """
    rng = np.random.default_rng(seed)
    w, h = canvas
    size = 14
    cols = max(n_actions, 2)
    actions = []
    for k in range(n_actions):
        dur = int(rng.integers(duration[0], duration[1] + 1))
        x_lo = k * (w - size) / cols
        lane = (w - size) / cols
        kind = ("translate_blob", "swap_blobs", "translate_blob", "oscillate_blob")[k % 4]
        label = f"act{k}"
        if kind == "translate_blob":
            down = bool(rng.integers(0, 2))
            travel = h - size - 8
            speed = travel / (dur - 1)
            y0 = 4.0 if down else 4.0 + travel
            x0 = x_lo + lane * float(rng.uniform(0.2, 0.5))
            act = Action(label, dur, kind, size=size, speed=speed, start=(x0, y0),
                         angle=90.0 if down else -90.0)
        elif kind == "swap_blobs":
            x0 = x_lo + 2.0
            act = Action(label, dur, kind, size=size, start=(x0, 6.0),
                         end=(x0 + float(rng.uniform(4, 10)), h - size - 6.0))
        else:
            amp = float(rng.uniform(30, 36))
            x0 = x_lo + lane / 2
            # the fast middle third of a cycle: no turning point, speed never below half
            act = Action(label, dur, kind, size=size, start=(x0, h / 2 - size / 2),
                         amplitude=amp, period=3.0 * (dur - 1), phase=-60.0, angle=90.0)
        actions.append(act)
    return SynthScript(tuple(actions), canvas=(w, h), seed=seed,
                       noise_sigma=noise_sigma, clutter=clutter)


# --- text format -----------------------------------------------------------

_ACTION_FLOAT = ("speed", "angle", "amplitude", "period", "phase")
_ACTION_PAIR = ("start", "end")


def parse_script(text: str) -> SynthScript:
    opts = {}
    actions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "action":
            actions.append(_parse_action(value, lineno))
        elif key == "canvas":
            w, _, h = value.lower().partition("x")
            opts["canvas"] = (int(w), int(h))
        elif key in ("seed", "clutter"):
            opts[key] = int(value)
        elif key == "noise_sigma":
            opts[key] = float(value)
        else:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
    return SynthScript(tuple(actions), **opts)


def _parse_action(value: str, lineno: int) -> Action:
    parts = value.split()
    if len(parts) < 2:
        raise ValidationError(f"line {lineno}: action needs a label and a motif")
    label, motif, *rest = parts
    kwargs = {}
    for item in rest:
        k, sep, v = item.partition("=")
        if not sep:
            raise ValidationError(f"line {lineno}: bad action option {item!r}")
        if k in ("duration", "size"):
            kwargs[k] = int(v)
        elif k in _ACTION_FLOAT:
            kwargs[k] = float(v)
        elif k in _ACTION_PAIR:
            a, b = v.split(",")
            kwargs[k] = (float(a), float(b))
        else:
            raise ValidationError(f"line {lineno}: unknown action option {k!r}")
    if "duration" not in kwargs:
        raise ValidationError(f"line {lineno}: action {label!r} has no duration")
    return Action(label, kwargs.pop("duration"), motif, **kwargs)


def format_script(script: SynthScript) -> str:
    w, h = script.canvas
    lines = [f"canvas = {w}x{h}", f"seed = {script.seed}",
             f"noise_sigma = {script.noise_sigma!r}", f"clutter = {script.clutter}"]
    for a in script.actions:
        lines.append(
            f"action = {a.label} {a.motif} duration={a.duration} size={a.size} "
            f"speed={a.speed!r} start={a.start[0]!r},{a.start[1]!r} angle={a.angle!r} "
            f"amplitude={a.amplitude!r} period={a.period!r} phase={a.phase!r} end={a.end[0]!r},{a.end[1]!r}"
        )
    return "\n".join(lines) + "\n"
