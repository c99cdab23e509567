"""Finite-N values opt_N and adv_N across population sizes."""
from _common import canonical_setup, finish, parser
from infoputs.game import discounted_mean
from infoputs.simulate import estimate_multiplicity_gap


def main():
    p = parser(__doc__)
    p.add_argument("--mu0", type=float, default=0.1)
    p.add_argument("--Ns", type=int, nargs="+", default=[100, 1000, 10000])
    p.add_argument("--trials", type=int, default=300)
    args = p.parse_args()
    g, _, _, policy = canonical_setup()
    rows = [estimate_multiplicity_gap(g, policy, N, args.mu0, 0.0, discounted_mean(1.0), args.trials, args.seed)
            for N in args.Ns]
    series = {"adv": (args.Ns, [r["adv"] for r in rows], "N", "adv_N"),
              "opt": (args.Ns, [r["opt"] for r in rows], "N", "opt_N")}
    finish(args.out, f"multiplicity-seed{args.seed}", series, {"rows": rows})


if __name__ == "__main__":
    main()
