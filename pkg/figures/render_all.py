"""Render every figure whose input artifacts exist in one directory.

Looks for the standard artifact names (surface.csv, gradients.csv,
designs.csv, samples.csv, optimum.json, trace.csv) and writes one image
per available figure family.  Missing inputs skip their figure instead
of failing, so the driver works on partial experiment output.
"""

import argparse
from pathlib import Path

from figlib import FigureSpec, render


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("artifacts", help="directory holding the experiment CSVs")
    parser.add_argument("--output-dir", default=None, help="default: the artifact directory")
    args = parser.parse_args()
    source = Path(args.artifacts)
    target = Path(args.output_dir) if args.output_dir else source

    def have(name):
        path = source / name
        return path if path.exists() else None

    plans = []
    if have("surface.csv"):
        plans.append(
            FigureSpec(
                kind="surface",
                inputs={"surface": source / "surface.csv", "trace": have("trace.csv")},
                output=target / "surface.png",
            )
        )
    if have("gradients.csv"):
        plans.append(
            FigureSpec(
                kind="gradients",
                inputs={"gradients": source / "gradients.csv"},
                output=target / "gradients.png",
            )
        )
    if have("designs.csv"):
        plans.append(
            FigureSpec(
                kind="designs",
                inputs={
                    "designs": source / "designs.csv",
                    "samples": have("samples.csv"),
                    "optimum": have("optimum.json"),
                },
                output=target / "designs.png",
            )
        )
    if have("trace.csv"):
        plans.append(
            FigureSpec(
                kind="convergence",
                inputs={"traces": [source / "trace.csv"]},
                output=target / "convergence.png",
            )
        )
    if not plans:
        raise SystemExit(f"no renderable artifacts in {source}")
    for spec in plans:
        print(f"wrote {render(spec)}")


if __name__ == "__main__":
    main()
