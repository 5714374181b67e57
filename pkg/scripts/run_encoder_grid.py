"""Encoder comparison grid: four encoders, with and without the GCN, on the
four benchmark datasets, averaged over seeds.

    python scripts/run_encoder_grid.py --data-root $TOWE_DATA_ROOT --word-vectors glove.840B.300d.txt

The printed ``grid.json`` path is what ``TOWE_ENCODER_REPORT`` expects.
"""

from _common import experiment, parser, write

from towe.config import ENCODER_KINDS
from towe.grid import render_table, run_grid


def main():
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--mode", choices=("G", "B"), default="G")
    p.add_argument("--encoders", nargs="+", default=list(ENCODER_KINDS))
    args = p.parse_args()
    exp = experiment(args)
    exp.grid.modes = [args.mode]
    exp.grid.encoders = args.encoders
    exp.grid.gcn = [False, True]
    exp.grid.ablations = []
    exp.validate()
    result = run_grid(exp)
    write(exp, result, render_table(result), f"encoders-{args.mode}")


if __name__ == "__main__":
    main()
