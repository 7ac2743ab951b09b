"""Column-schema validation for the primary component's CSV/JSON outputs.

The plot scripts are pure renderers: they check that an input matches the
documented schema, then draw it.  Nothing is recomputed from the model.
"""

import csv
import json
import sys

TRAJECTORY_COLUMNS = ["t", "s1", "s2", "alpha", "sr_star", "phase"]
FULL_TRAJECTORY_COLUMNS = TRAJECTORY_COLUMNS + ["s_r", "x_r", "q_over_vr"]
GRID_COLUMNS = ["s1", "s2", "value"]
GROWTH_COLUMNS = ["sigma", "mu", "setpoint", "rate", "drain_time"]

NUMERIC = {c for c in set(TRAJECTORY_COLUMNS + FULL_TRAJECTORY_COLUMNS + GRID_COLUMNS + GROWTH_COLUMNS) if c != "phase"}


class SchemaError(Exception):
    pass


def read_table(path, expected_columns, allow_extra_schema=None):
    """Read a CSV into a dict of column lists, enforcing the header schema.

    ``allow_extra_schema`` names an alternative (longer) schema that is also
    acceptable, e.g. full-model trajectories where reduced ones are expected.
    Raises SchemaError with per-column diagnostics on mismatch or empty data.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: file is empty (no header)")
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read ({exc})")

    if header != expected_columns and header != (allow_extra_schema or []):
        missing = [c for c in expected_columns if c not in header]
        extra = [c for c in header if c not in expected_columns and c not in (allow_extra_schema or [])]
        raise SchemaError(
            f"{path}: header mismatch; expected {expected_columns}, got {header}"
            f" (missing: {missing or 'none'}, unexpected: {extra or 'none'})"
        )
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    table = {c: [] for c in header}
    for i, row in enumerate(rows, 2):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
        for c, v in zip(header, row):
            if c in NUMERIC:
                try:
                    v = float(v)
                except ValueError:
                    raise SchemaError(f"{path}:{i}: column {c!r} is not numeric: {v!r}")
            table[c].append(v)
    return table


def read_json(path, required_keys=()):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: cannot parse JSON ({exc})")
    missing = [k for k in required_keys if k not in payload]
    if missing:
        raise SchemaError(f"{path}: missing keys {missing}")
    return payload


def die(exc, code=2):
    print(f"schema error: {exc}", file=sys.stderr)
    raise SystemExit(code)
