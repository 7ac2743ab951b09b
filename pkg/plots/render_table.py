#!/usr/bin/env python3
"""Render the strategy-comparison JSON as a formatted markdown table.

Reproduces the published layout: one block per threshold, rows per initial
state with the optimal time, the best constant time, and the one-pump time
for each diffusion value, plus percentage-increase sub-rows.  Cells whose
computation failed render as an em-dash placeholder and make the script exit
with code 4.
"""

import argparse
import sys

from schemas import SchemaError, die, read_json

MISSING = "—"


def fmt(value, digits=2):
    if value is None:
        return MISSING
    return f"{value:.{digits}f}"


def fmt_pct(value):
    if value is None:
        return MISSING
    return f"(+{value:.2f} %)"


def render(payload):
    cells = payload["cells"]
    if not cells:
        raise SchemaError("comparison JSON has no cells")
    any_missing = False
    lines = []
    s_bars = sorted({c["s_bar"] for c in cells}, reverse=True)
    for s_bar in s_bars:
        block = [c for c in cells if c["s_bar"] == s_bar]
        d_values = sorted({c["d"] for c in block})
        lines.append(f"### Time comparisons (hours), threshold {s_bar} g/L")
        lines.append("")
        head = ["s(0)"]
        head += [f"V_d (d={d})" for d in d_values]
        head += [f"T*_cst (d={d})" for d in d_values]
        head += [f"T*_one (d={d})" for d in d_values]
        lines.append("| " + " | ".join(head) + " |")
        lines.append("|" + "---|" * len(head))
        by_x0 = {}
        for c in block:
            by_x0.setdefault(tuple(c["x0"]), {})[c["d"]] = c
        for x0, group in by_x0.items():
            def get(key, d):
                c = group.get(d)
                if c is None or "error" in c or c.get(key) is None:
                    return None
                return c[key]

            row = [f"({x0[0]:g}, {x0[1]:g})"]
            inc = ["&nbsp;&nbsp;increase"]
            for key, inc_key in (("v_d", None), ("t_cst", "inc_cst_pct"), ("t_one", "inc_one_pct")):
                for d in d_values:
                    val = get(key, d)
                    if val is None:
                        any_missing = True
                    row.append(fmt(val))
                    inc.append("" if inc_key is None else fmt_pct(get(inc_key, d)))
            lines.append("| " + " | ".join(row) + " |")
            lines.append("| " + " | ".join(inc) + " |")
        lines.append("")
    return "\n".join(lines), any_missing


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--in", dest="input", required=True, help="comparison JSON from the primary CLI")
    ap.add_argument("--out", help="output markdown path (default: stdout)")
    args = ap.parse_args(argv)
    try:
        payload = read_json(args.input, required_keys=("cells",))
        text, any_missing = render(payload)
    except SchemaError as exc:
        die(exc)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    if any_missing:
        print("warning: some cells are missing; rendered as placeholders", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
