"""
Parameter checkpoints.

A checkpoint is a text manifest followed by the raw parameter vector:

    checkpoint version=1 step=<n> size=<total floats>
    <name> <offset> <d0,d1,...>     one line per parameter block
    end
    <size little-endian float64 values>

Block names are prefixed with "actor/" or "critic/".
"""

import logging
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from errors import ParseError, ValidationError
from nn.params import Params

log = logging.getLogger(__name__)

VERSION = 1
GROUPS = ("actor", "critic")


def save_checkpoint(path, actor: Params, critic: Params, step: int = 0) -> None:
    lines = []
    chunks = []
    offset = 0
    for group, params in zip(GROUPS, (actor, critic)):
        for name in params.layout.names():
            shape = params.layout.shape(name)
            lines.append(f"{group}/{name} {offset} {','.join(str(d) for d in shape)}")
            offset += int(np.prod(shape))
        chunks.append(params.values)
    header = [f"checkpoint version={VERSION} step={step} size={offset}"] + lines + ["end"]
    flat = np.concatenate(chunks).astype("<f8")
    path = Path(path)
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(flat.tobytes())
    log.debug("wrote checkpoint %s (%d parameters)", path, offset)


def _read_manifest(raw: bytes):
    entries = []
    pos = 0
    line_number = 0
    header = None
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise ParseError("checkpoint manifest is not terminated by 'end'", line_number + 1)
        line = raw[pos:end].decode("ascii", errors="replace")
        pos = end + 1
        line_number += 1
        if line_number == 1:
            fields = dict(part.split("=", 1) for part in line.split()[1:] if "=" in part)
            if not line.startswith("checkpoint") or fields.get("version") != str(VERSION):
                raise ParseError(f"not a version {VERSION} checkpoint", 1)
            try:
                header = {"step": int(fields.get("step", 0)), "size": int(fields["size"])}
            except (KeyError, ValueError) as exc:
                raise ParseError(f"malformed checkpoint header: {exc}", 1) from exc
            continue
        if line == "end":
            return header, entries, pos
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'name offset shape', got {line!r}", line_number)
        try:
            shape = tuple(int(d) for d in parts[2].split(","))
            entries.append((parts[0], int(parts[1]), shape))
        except ValueError as exc:
            raise ParseError(f"bad offset or shape in {line!r}", line_number) from exc


def load_checkpoint(path, actor_like: Params, critic_like: Params) -> Tuple[Params, Params, int]:
    """
    Read a checkpoint into parameters laid out like the given templates.

    Raises:
        ValidationError: when the stored layout differs from the templates'
            (e.g. the checkpoint was trained on an environment of another size)
    """
    raw = Path(path).read_bytes()
    header, entries, pos = _read_manifest(raw)
    flat = np.frombuffer(raw[pos:], dtype="<f8").astype(np.float64)
    if len(flat) != header["size"]:
        raise ValidationError(f"checkpoint holds {len(flat)} values, manifest says {header['size']}")

    stored: Dict[str, Tuple[int, tuple]] = {name: (offset, shape) for name, offset, shape in entries}
    result = []
    for group, template in zip(GROUPS, (actor_like, critic_like)):
        values = np.empty(len(template))
        for name in template.layout.names():
            key = f"{group}/{name}"
            shape = template.layout.shape(name)
            if key not in stored or tuple(stored[key][1]) != tuple(shape):
                found = stored.get(key, (None, "missing"))[1]
                raise ValidationError(f"checkpoint block {key} has shape {found}, expected {shape}")
            offset = stored[key][0]
            size = int(np.prod(shape))
            values[template.layout.slice(name)] = flat[offset:offset + size]
        result.append(template.with_values(values))
    if len(entries) != len(actor_like.layout.names()) + len(critic_like.layout.names()):
        raise ValidationError("checkpoint holds parameter blocks the networks do not have")
    return result[0], result[1], header["step"]
