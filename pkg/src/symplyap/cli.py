"""Command-line entry point ``symplyap``."""
from __future__ import annotations

import argparse
import sys

from . import config
from .errors import ConfigError
from .experiments import COMMANDS, RunManifest, resolve_spec, run, spec_from_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TASK = 3


def build_parser():
    ap = argparse.ArgumentParser(prog="symplyap",
                                 description="Lyapunov spectra and finite-box probes for "
                                             "matrix-valued random Schrodinger operators.")
    ap.add_argument("command", choices=sorted(COMMANDS) + ["replay"])
    ap.add_argument("--config", help="model/parameter file (key = value)")
    ap.add_argument("--manifest", help="manifest.json to replay (command 'replay')")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (u64)")
    ap.add_argument("--trials", type=int, help="trial/sample count override")
    ap.add_argument("--threads", type=int, default=1, help="worker processes")
    ap.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                    help="command parameter override (repeatable)")
    return ap


def _overrides(pairs):
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}", item)
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            if not args.manifest:
                raise ConfigError("replay needs --manifest", "manifest")
            spec = spec_from_manifest(RunManifest.load(args.manifest), args.out, args.threads)
        else:
            if not args.config:
                raise ConfigError("--config is required", "config")
            parsed = config.load(args.config)
            spec = resolve_spec(args.command, parsed, args.out, args.seed, args.trials,
                                args.threads, _overrides(args.param))
            spec.model_config()
    except ConfigError as exc:
        key = f" [key: {exc.key}]" if exc.key else ""
        print(f"config error: {exc}{key}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = run(spec)
    for line in getattr(manifest, "lines", []):
        print(line)
    if manifest.failed:
        for t in manifest.tasks:
            if t["status"] != "ok":
                print(f"task {t['index']} failed: {t.get('error')}", file=sys.stderr)
        return EXIT_TASK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
