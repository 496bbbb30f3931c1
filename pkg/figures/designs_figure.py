"""Brute-force design table as a scatter grouped by active-sensor count,
with the optimum starred and sampled designs overlaid when given."""

import argparse

from figlib import FigureSpec, render


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("designs", help="designs.csv from brute-force")
    parser.add_argument("--samples", default=None, help="samples.csv to overlay")
    parser.add_argument("--optimum", default=None, help="optimum.json to star")
    parser.add_argument("--title", default=None)
    parser.add_argument("--output", default="designs.png")
    args = parser.parse_args()
    spec = FigureSpec(
        kind="designs",
        inputs={
            "designs": args.designs,
            "samples": args.samples,
            "optimum": args.optimum,
        },
        output=args.output,
        options={"title": args.title},
    )
    print(f"wrote {render(spec)}")


if __name__ == "__main__":
    main()
