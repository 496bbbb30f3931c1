"""Objective-vs-iteration curves for runs that differ only in their step
size or schedule."""

import argparse

from figlib import FigureSpec, render


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("traces", nargs="+", help="one trace.csv per setting")
    parser.add_argument("--labels", nargs="*", default=None)
    parser.add_argument("--title", default=None)
    parser.add_argument("--output", default="learning_rate.png")
    args = parser.parse_args()
    options = {"labels": args.labels}
    if args.title:
        options["title"] = args.title
    spec = FigureSpec(
        kind="learning_rate",
        inputs={"traces": args.traces},
        output=args.output,
        options=options,
    )
    print(f"wrote {render(spec)}")


if __name__ == "__main__":
    main()
