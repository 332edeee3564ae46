"""memfold-export: host config JSON in, .mir.json out.

Exit codes: 0 success, 1 I/O failure, 2 export failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config_export import export_config_file
from .errors import ExportError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="memfold-export",
        description="Export a published model config to a memfold model IR.",
    )
    parser.add_argument("config", help="host config JSON (HuggingFace-style keys)")
    parser.add_argument("-o", "--out", required=True, help="output .mir.json path")
    parser.add_argument("--name", help="model name to embed in the IR")
    parser.add_argument(
        "--modality", action="append", default=[], metavar="MODULE=MODALITY",
        help="override a module's modality (repeatable)",
    )
    parser.add_argument(
        "--expected-params", type=int,
        help="published parameter count; fail if the export drifts beyond --tolerance",
    )
    parser.add_argument("--tolerance", type=float, default=0.02)
    args = parser.parse_args(argv)

    modality_map = {}
    for item in args.modality:
        module_name, sep, modality = item.partition("=")
        if not sep:
            print(f"error: --modality expects MODULE=MODALITY, got {item!r}", file=sys.stderr)
            return 2
        modality_map[module_name] = modality

    try:
        result = export_config_file(
            args.config,
            args.out,
            modality_map=modality_map or None,
            name=args.name,
            expected_total_params=args.expected_params,
            tolerance=args.tolerance,
        )
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    n_layers = sum(len(m["layers"]) for m in result.ir["modules"])
    print(
        f"wrote {args.out}: {len(result.ir['modules'])} modules, {n_layers} layers, "
        f"{result.element_count:,} parameter elements"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
