"""Quiver panels: exact gradient field next to an estimator's mean field."""

import argparse

from figlib import FigureSpec, render


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("gradients", help="gradients.csv from gradient-check")
    parser.add_argument("--label", default=None, help="title for the estimator panel")
    parser.add_argument("--output", default="gradients.png")
    args = parser.parse_args()
    options = {"label": args.label} if args.label else {}
    spec = FigureSpec(
        kind="gradients",
        inputs={"gradients": args.gradients},
        output=args.output,
        options=options,
    )
    print(f"wrote {render(spec)}")


if __name__ == "__main__":
    main()
