"""Objective estimate and new-evaluation counts per iteration, for one
or more optimization traces."""

import argparse

from figlib import FigureSpec, render


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("traces", nargs="+", help="trace.csv files to compare")
    parser.add_argument("--labels", nargs="*", default=None)
    parser.add_argument("--title", default=None)
    parser.add_argument("--output", default="convergence.png")
    args = parser.parse_args()
    spec = FigureSpec(
        kind="convergence",
        inputs={"traces": args.traces},
        output=args.output,
        options={"labels": args.labels, "title": args.title},
    )
    print(f"wrote {render(spec)}")


if __name__ == "__main__":
    main()
