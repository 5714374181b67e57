"""Feature ablation of BiLSTM+GCN: drop the GCN, then POS tags, then position
embeddings (POS tags are never used with contextual vectors).

    python scripts/run_ablation.py --data-root $TOWE_DATA_ROOT --word-vectors glove.840B.300d.txt
    python scripts/run_ablation.py --mode B --data-root $TOWE_DATA_ROOT   # needs sidecars

The printed ``grid.json`` path is what ``TOWE_ABLATION_REPORT`` (mode G) or
``TOWE_MODEB_REPORT`` (mode B) expects.
"""

from _common import experiment, parser, write

from towe.grid import render_table, run_grid

ABLATIONS = {
    "G": [["gcn"], ["gcn", "post"], ["gcn", "post", "posn"]],
    "B": [["gcn"], ["gcn", "posn"]],
}


def main():
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--mode", choices=("G", "B"), default="G")
    args = p.parse_args()
    exp = experiment(args)
    exp.grid.modes = [args.mode]
    exp.grid.encoders = ["bilstm"]
    exp.grid.gcn = [True]
    exp.grid.ablation_encoder = "bilstm"
    exp.grid.ablations = ABLATIONS[args.mode]
    exp.validate()
    result = run_grid(exp)
    write(exp, result, render_table(result, ablation=True), f"ablation-{args.mode}")


if __name__ == "__main__":
    main()
