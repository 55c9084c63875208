#!/usr/bin/env python3
"""Run the benchmark convergence studies and write one CSV per geometry.

Runs the full study grid at desk scale: all five formulation variants on
every catalog geometry over a range of thicknesses.  Levels are kept moderate by default; push --max-level up for
finer meshes if you have the patience.

Usage:
    python scripts/reproduce_studies.py [--out-dir results] [--max-level 4]
        [--geometries undistorted,c0_single] [--thicknesses 1,0.01]
"""

import argparse
import os
import sys

from igaplate.bench import GEOMETRY_NAMES, StudyConfig, run_convergence_study


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results")
    parser.add_argument("--max-level", type=int, default=4)
    parser.add_argument("--geometries", default=",".join(GEOMETRY_NAMES))
    parser.add_argument("--thicknesses", default="1,0.1,0.01,0.001,0.0001")
    parser.add_argument("--degrees", default="2,3")
    parser.add_argument(
        "--variants", default="std,mxd,lmp,ad,ead", help="comma-separated variant list"
    )
    args = parser.parse_args(argv)

    os.makedirs(args.out_dir, exist_ok=True)
    geometries = [g.strip() for g in args.geometries.split(",") if g.strip()]
    thicknesses = tuple(float(t) for t in args.thicknesses.split(","))
    degrees = tuple(int(p) for p in args.degrees.split(","))
    variants = tuple(v.strip() for v in args.variants.split(","))
    levels = tuple(range(1, args.max_level + 1))

    failed = 0
    for geometry in geometries:
        out = os.path.join(args.out_dir, f"{geometry}.csv")
        config = StudyConfig(
            geometry=geometry,
            variants=variants,
            degrees=degrees,
            levels=levels,
            thicknesses=thicknesses,
            out=out,
        )
        records = run_convergence_study(config)
        bad = [r for r in records if r.error]
        failed += len(bad)
        print(f"{geometry}: {len(records)} cells -> {out} ({len(bad)} failed)")
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
