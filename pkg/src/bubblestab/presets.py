"""Named initial interface displacements."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .geometry import FrameField


class PresetError(ValueError):
    pass


def ellipse(a: float, K: int, R_s: float = 1.0) -> FrameField:
    """Displacement taking the circle to the ellipse with semi-axes ``R_s(1+a)``, ``R_s(1-a)``.

    The mode-0 normal part is zero, so the area matches the circle only up to O(a^2).
    """
    return FrameField.from_modes(K, {2: (a * R_s / 2, 0.5j * a * R_s)})


def mode(k: int, amp_n: float, amp_t: float, K: int) -> FrameField:
    """``amp_n cos(k theta)`` normal plus ``amp_t sin(k theta)`` tangential (constant tangential at k=0)."""
    if k < 0 or k > K:
        raise PresetError(f"mode index must lie in 0..{K}, got {k}")
    if k == 0:
        if amp_n != 0:
            raise PresetError("a uniform normal displacement changes the enclosed volume")
        return FrameField.from_modes(K, {0: (0.0, amp_t)})
    return FrameField.from_modes(K, {k: (amp_n / 2, amp_t / 2j)})


def translation(cx: float, cy: float, K: int) -> FrameField:
    return FrameField.from_modes(K, {1: (0.5 * (cx - 1j * cy), 0.5j * (cx - 1j * cy))})


def from_file(path: Path, K: int) -> FrameField:
    """Rows ``k, re_n, im_n, re_t, im_t`` for k >= 0; '#' starts a comment. The volume mode is dropped."""
    modes = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        vals = [float(v) for v in re.split(r"[,\s]+", line)]
        if len(vals) != 5:
            raise PresetError(f"expected 5 numbers per row, got {line!r}")
        k = int(vals[0])
        if k < 0 or k > K:
            raise PresetError(f"mode {k} outside 0..{K}")
        vn, vt = complex(vals[1], vals[2]), complex(vals[3], vals[4])
        if k == 0:
            vn, vt = 0.0, vt.real
        modes[k] = (vn, vt)
    return FrameField.from_modes(K, modes)


_CALL = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$")


def parse(spec: str, K: int, R_s: float = 1.0) -> FrameField:
    """Parse ``ellipse(a)``, ``mode(k, amp_n, amp_t)``, ``translation(cx[, cy])`` or ``file(path)``."""
    m = _CALL.match(spec)
    if not m:
        raise PresetError(f"cannot parse initial condition {spec!r}")
    name, args = m.group(1), [s.strip() for s in m.group(2).split(",") if s.strip()]
    try:
        if name == "ellipse" and len(args) == 1:
            return ellipse(float(args[0]), K, R_s)
        if name == "mode" and len(args) == 3:
            return mode(int(args[0]), float(args[1]), float(args[2]), K)
        if name == "translation" and len(args) in (1, 2):
            return translation(float(args[0]), float(args[1]) if len(args) == 2 else 0.0, K)
        if name == "file" and len(args) == 1:
            return from_file(Path(args[0]), K)
    except ValueError as exc:
        raise PresetError(f"bad arguments in {spec!r}: {exc}") from exc
    raise PresetError(f"unknown preset or wrong argument count: {spec!r}")
