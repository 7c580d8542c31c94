"""Print the aggregate table of one or more result CSVs as aligned text.

    python3 scripts/summarize.py results/*.csv
"""

import sys
from pathlib import Path

from otfs_cf.experiments import parse_csv

KEYS = ("mean", "stderr", "median", "p5", "max")


def main(argv=None):
    for path in argv if argv is not None else sys.argv[1:]:
        _, agg = parse_csv(Path(path).read_text())
        print(f"== {path}")
        print(f"{'point':>10} {'metric':<14}" + "".join(f"{k:>12}" for k in KEYS))
        for r in agg:
            print(f"{str(r['point']):>10} {r['metric']:<14}" + "".join(f"{r[k]:>12.5g}" for k in KEYS))


if __name__ == "__main__":
    main()
