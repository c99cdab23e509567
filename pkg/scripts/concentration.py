"""Sup-deviation of finite-N play from its fluid path, with the analytic tail bound."""
from _common import finish, parser
from infoputs.simulate import concentration_experiment, concentration_slope


def main():
    p = parser(__doc__)
    p.add_argument("--Ns", type=int, nargs="+", default=[1000, 10000, 100000])
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=1000)
    args = p.parse_args()
    tails = [concentration_experiment(1.0, 0.0, N, args.delta, args.trials, args.seed) for N in args.Ns]
    slope, med = concentration_slope(1.0, 0.0, args.Ns, args.trials, args.seed)
    finish(args.out, f"concentration-seed{args.seed}",
           {"median_sup": (args.Ns, med, "N", "median_sup"),
            "tail": (args.Ns, [t["empirical"] for t in tails], "N", "tail_probability")},
           {"slope": slope, "tails": tails})


if __name__ == "__main__":
    main()
