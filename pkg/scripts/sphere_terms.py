"""Tables of the five domain-sphere terms and the three target-sphere terms
for every preset they apply to."""

import argparse

from conflab import make_preset, quadrature_grid
from conflab.presets import PRESETS
from conflab.sphere_identities import theorem1_terms, theorem2_terms


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=int, default=16)
    args = ap.parse_args()

    print(f"{'map':22s} {'Phi':>12s} {'I':>10s} {'II':>12s} {'III':>12s} {'IV':>10s} {'V':>12s} {'sum':>12s}")
    maps = [make_preset(n) for n in sorted(PRESETS)] + [make_preset("identity", dim=3)]
    for f in maps:
        if not f.domain.is_sphere or f.domain.dim < 2:
            continue
        t = theorem1_terms(f, quadrature_grid(f.domain, args.grid if f.domain.dim == 2 else 8))
        label = f"{f.name}(S^{f.domain.dim})"
        print(f"{label:22s} {t.phi_value:12.6f} {t.I:10.2e} {t.II:12.6f} {t.III:12.6f} {t.IV:10.2e} {t.V:12.6f} {t.total:12.6f}")

    print()
    print(f"{'map':22s} {'Phi':>12s} {'3 Phi':>12s} {'-n Phi':>12s} {'Phi':>12s} {'sum/Phi':>10s}")
    for f in maps:
        if not f.codomain.is_sphere:
            continue
        t = theorem2_terms(f, quadrature_grid(f.domain, args.grid if f.domain.dim == 2 else 8))
        ratio = f"{t.ratio:10.6f}" if t.phi_value > 1e-10 else f"{'-':>10s}"
        print(f"{f.name:22s} {t.phi_value:12.6f} {t.term1:12.6f} {t.term2:12.6f} {t.term3:12.6f} {ratio}")


if __name__ == "__main__":
    main()
