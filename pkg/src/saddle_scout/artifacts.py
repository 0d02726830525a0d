"""
Artifact writers for Saddle Scout runs.

Every file a run produces goes through _atomic_write: the payload is written
to a temp file in the target directory under an exclusive lock, fsynced and
renamed over the destination, so an interrupted run never leaves a partial
landscape.json behind.
"""

import fcntl
import json
import os
import tempfile
from typing import Any, Dict, Iterable

import logging

logger = logging.getLogger('SaddleScout.Artifacts')


def _atomic_write(filepath: str, payload: bytes):
    dir_path = os.path.dirname(os.path.abspath(filepath))
    os.makedirs(dir_path, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(dir=dir_path, suffix=".tmp")

    try:
        with os.fdopen(fd, 'wb') as f:
            fcntl.flock(f.fileno(), fcntl.LOCK_EX)
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(temp_path, filepath)
    except Exception:
        try:
            os.unlink(temp_path)
        except OSError:
            pass
        raise
    logger.debug("wrote %s (%d bytes)", filepath, len(payload))


def write_bytes(filepath: str, payload: bytes):
    try:
        _atomic_write(filepath, payload)
    except OSError as e:
        raise OSError(e.errno, f"cannot write {filepath}: {e.strerror}") from e


def write_text(filepath: str, text: str):
    write_bytes(filepath, text.encode("utf-8"))


def dump_json(data: Any) -> str:
    """Canonical JSON text; same data always gives the same bytes"""
    return json.dumps(data, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(filepath: str, data: Any):
    write_text(filepath, dump_json(data))


def load_json(filepath: str) -> Any:
    with open(filepath, 'r') as f:
        fcntl.flock(f.fileno(), fcntl.LOCK_SH)
        return json.load(f)


def write_key_values(filepath: str, values: Dict[str, Any]):
    """Plain key=value sidecar file, one entry per line in insertion order"""
    write_text(filepath, "".join(f"{k}={v}\n" for k, v in values.items()))


def read_key_values(filepath: str) -> Dict[str, str]:
    out = {}
    with open(filepath, 'r') as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    return out


# ----------------------------------------------------------------------
# landscape graph
# ----------------------------------------------------------------------

def _node_line(point) -> str:
    return f'  "{point.id}" [label="{point.id} idx={point.index} E={point.energy:.6f}"];\n'


def render_dot(solutions: Iterable, relations: Iterable, ascents: Iterable = ()) -> str:
    """
    DOT digraph of a landscape.

    Nodes are grouped into rank=same blocks by Morse index, higher index
    first so it is drawn on top. Downward relations are solid edges; links
    found by upward search are dashed and drawn from the higher-index end.
    """
    solutions = sorted(solutions, key=lambda p: p.id)
    by_id = {p.id: p for p in solutions}
    lines = ["digraph landscape {\n", "  rankdir=TB;\n", "  node [shape=box];\n"]
    for index in sorted({p.index for p in solutions}, reverse=True):
        members = " ".join(f'"{p.id}";' for p in solutions if p.index == index)
        lines.append(f"  {{ rank=same; {members} }}\n")
    for p in solutions:
        lines.append(_node_line(p))
    for parent, child in sorted(relations):
        lines.append(f'  "{parent}" -> "{child}";\n')
    for low, high in sorted(ascents):
        if by_id[high].index >= by_id[low].index:
            lines.append(f'  "{high}" -> "{low}" [style=dashed, dir=back];\n')
        else:
            lines.append(f'  "{low}" -> "{high}" [style=dashed];\n')
    lines.append("}\n")
    return "".join(lines)


def emit_graph(landscape, filepath: str):
    write_text(filepath, render_dot(landscape.solutions, landscape.relations, landscape.ascents))
    logger.info("graph with %d nodes written to %s", len(landscape.solutions), filepath)
