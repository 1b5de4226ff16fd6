"""Versioned plain-text checkpoint container.

Layout::

    seairl-checkpoint 1
    meta <key> <value>
    network <name> widths=12,64,64,6 activation=tanh head=softmax_logits n=5446
    <values, eight per line, repr() precision>
    end

``repr`` of a Python float round-trips exactly, so save/load is value-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .approximator import MlpSpec
from .errors import FormatError

MAGIC = "seairl-checkpoint"
VERSION = 1


def dumps(networks: dict[str, tuple[MlpSpec, np.ndarray]], meta: dict[str, str] | None = None) -> str:
    lines = [f"{MAGIC} {VERSION}"]
    for key, value in (meta or {}).items():
        if any(c.isspace() for c in key) or "\n" in str(value):
            raise FormatError(f"meta key/value not storable: {key!r}")
        lines.append(f"meta {key} {value}")
    for name, (spec, params) in networks.items():
        widths = ",".join(str(w) for w in spec.layer_widths)
        lines.append(f"network {name} widths={widths} activation={spec.hidden_activation} "
                     f"head={spec.output_head} n={params.size}")
        vals = [repr(float(v)) for v in params]
        for i in range(0, len(vals), 8):
            lines.append(" ".join(vals[i:i + 8]))
        lines.append("end")
    return "\n".join(lines) + "\n"


def loads(text: str):
    """Inverse of :func:`dumps`; returns (networks, meta)."""
    lines = text.splitlines()
    if not lines or lines[0].split() != [MAGIC, str(VERSION)]:
        raise FormatError("line 1: not a version-1 seairl checkpoint")
    networks, meta = {}, {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("meta "):
            _, key, value = (line.split(" ", 2) + [""])[:3]
            meta[key] = value
            i += 1
        elif line.startswith("network "):
            try:
                _, name, *fields = line.split()
                kv = dict(f.split("=", 1) for f in fields)
                spec = MlpSpec(tuple(int(w) for w in kv["widths"].split(",")),
                               kv["activation"], kv["head"])
                n = int(kv["n"])
            except (ValueError, KeyError) as exc:
                raise FormatError(f"line {i + 1}: bad network header ({exc})") from None
            values = []
            i += 1
            while i < len(lines) and lines[i] != "end":
                try:
                    values.extend(float(v) for v in lines[i].split())
                except ValueError:
                    raise FormatError(f"line {i + 1}: bad parameter value") from None
                i += 1
            if i >= len(lines):
                raise FormatError(f"network {name}: missing 'end'")
            if len(values) != n or n != spec.n_params:
                raise FormatError(f"network {name}: expected {spec.n_params} values, got {len(values)}")
            networks[name] = (spec, np.array(values))
            i += 1
        elif not line.strip():
            i += 1
        else:
            raise FormatError(f"line {i + 1}: unexpected content")
    return networks, meta


def save(path, networks, meta=None) -> None:
    Path(path).write_text(dumps(networks, meta))


def load(path):
    return loads(Path(path).read_text())
