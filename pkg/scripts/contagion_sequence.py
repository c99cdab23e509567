"""Contagion radii c_n from c_0 = 1/6 down to the stopping tolerance."""
import numpy as np

from _common import canonical_setup, finish, parser
from infoputs.contagion import contagion_sequence
from infoputs.dominance import initial_radius


def main():
    p = parser(__doc__)
    p.add_argument("--stop", type=float, default=1e-3)
    args = p.parse_args()
    _, th, params, _ = canonical_setup()
    seq = contagion_sequence(params, initial_radius(th), args.stop)
    n = np.arange(seq.radii.size)
    finish(args.out, f"contagion-seed{args.seed}", {"radii": (n, seq.radii, "n", "c_n")},
           {"iterations": seq.iterations, "last": seq.last, "tail_slope": seq.tail_slope()})


if __name__ == "__main__":
    main()
