"""Lower and upper dominance boundaries of the canonical game."""
from _common import canonical_setup, finish, parser


def main():
    args = parser(__doc__).parse_args()
    _, th, _, _ = canonical_setup()
    series = {"psi_ld": (th.A_grid, th.psi_ld, "A", "psi_LD"),
              "psi_ud": (th.A_grid, th.psi_ud, "A", "psi_UD")}
    finish(args.out, f"dominance-seed{args.seed}", series,
           {"psi_ld_at_0": float(th.psi_ld[0]), "psi_ud_at_0": float(th.psi_ud[0])})


if __name__ == "__main__":
    main()
