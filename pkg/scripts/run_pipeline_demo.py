#!/usr/bin/env python3
"""Run the full synthetic pipeline twice and confirm the metrics report is
reproduced byte for byte from the manifest."""

import argparse
import json
import pathlib
import tempfile

from citysent.pipeline import RunConfig, rerun_from_manifest, run_pipeline


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=None, help="output directory (default: temp dir)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    base = pathlib.Path(args.out) if args.out else pathlib.Path(tempfile.mkdtemp())
    config = RunConfig(out_dir=str(base / "run"), seed=args.seed)
    config.synth.seed = args.seed
    config.encoder.seed = args.seed
    config.adapt.seed = args.seed
    first = run_pipeline(config)
    second = rerun_from_manifest(first.manifest_path, str(base / "replay"))

    a = (first.out_dir / "metrics.json").read_bytes()
    b = (second.out_dir / "metrics.json").read_bytes()
    print(json.dumps(first.metrics["models"], indent=2, sort_keys=True))
    print(f"artifacts in {first.out_dir}")
    print("replay byte-identical:", a == b)


if __name__ == "__main__":
    main()
