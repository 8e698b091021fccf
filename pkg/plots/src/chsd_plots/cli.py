"""Command-line surface: `plots energy <csv> -o fig.png`,
`plots rates <csv> -o fig.png`.  Exit 0 on success, 2 on bad input."""

import argparse
import sys

from .figures import SchemaMismatch, TooFewLevels, plot_energy, plot_rates


def _build_parser():
    p = argparse.ArgumentParser(prog="plots",
                                description="figures from chsd CSV outputs")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("energy", "rates"):
        cmd = sub.add_parser(name)
        cmd.add_argument("csv")
        cmd.add_argument("-o", "--output", required=True)
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "energy":
            report = plot_energy(args.csv, args.output)
            print(f"violations = {report.violations}")
        else:
            report = plot_rates(args.csv, args.output)
            for col, slope in report.slopes.items():
                print(f"slope[{col}] = {slope!r}")
    except (SchemaMismatch, TooFewLevels, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
