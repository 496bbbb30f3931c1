"""Contour panels of the objective surface, optionally with the
optimizer trajectory drawn on top."""

import argparse

from figlib import FigureSpec, render


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("surface", help="surface.csv from the surface subcommand")
    parser.add_argument("--trace", default=None, help="trace.csv to overlay")
    parser.add_argument("--title", default=None)
    parser.add_argument("--output", default="surface.png")
    args = parser.parse_args()
    spec = FigureSpec(
        kind="surface",
        inputs={"surface": args.surface, "trace": args.trace},
        output=args.output,
        options={"title": args.title},
    )
    print(f"wrote {render(spec)}")


if __name__ == "__main__":
    main()
