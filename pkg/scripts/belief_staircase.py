"""Belief path under the puts policy when play keeps falling short of the target."""
from _common import canonical_setup, finish, parser
from infoputs.simulate import adversarial_until, simulate_continuum, upper_region


def main():
    p = parser(__doc__)
    p.add_argument("--mu0", type=float, default=0.45)
    p.add_argument("--A0", type=float, default=0.1)
    p.add_argument("--horizon", type=float, default=6.0)
    args = p.parse_args()
    g, th, _, policy = canonical_setup()
    prof = adversarial_until(upper_region(th))
    tr = simulate_continuum(g, policy, args.mu0, args.A0, prof, args.horizon, seed=args.seed)
    t, mu = tr.belief_staircase()
    out = finish(args.out, f"staircase-seed{args.seed}",
                 {"belief": (t, mu, "t", "mu"), "play": (tr.t, tr.A, "t", "A")},
                 {"injections": tr.count("injection"), "jumps": tr.count("jump"), "final_mu": tr.mu[-1]})
    tr.to_csv(f"{out}/trajectory.csv")


if __name__ == "__main__":
    main()
