"""Reduced Kepler dynamics near the collision/escape points (J̃, G̃) = (±√2, 0).

Upstairs the radial fall stops at the collision guard; the reduced
Λ-contact flow carries on through ρ = 0. The script integrates a fan of
zero-energy orbits in the ρ chart, which pass pericentre and approach
(√2, 0). It records the closest approach to both fixed points and writes
the (J̃, G̃, θ) curves for plotting. It also runs the two-body blow-up
(s, y) equations for comparison.
"""

import argparse
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from contact_reduce.integrate import EventGuard, IntegratorConfig, integrate
from contact_reduce.systems import instantiate, two_body_from_kepler

SQRT2 = np.sqrt(2.0)


@dataclass
class TorusConfig:
    pbar: tuple = tuple(np.linspace(-SQRT2, SQRT2, 10)[1:-1])  # p̄ = 0 is a fixed point
    span: float = 20.0
    rho_guard: float = 1e-3
    rtol: float = 1e-13
    atol: float = 1e-15
    out: Path = field(default_factory=lambda: Path("out/collision_torus"))


def run(cfg: TorusConfig):
    b = instantiate("kepler")
    red = b.reduction("rho")
    icfg = IntegratorConfig(method="dop853-adaptive", rtol=cfg.rtol, atol=cfg.atol)
    cfg.out.mkdir(parents=True, exist_ok=True)
    summary = []
    for i, pb in enumerate(cfg.pbar):
        # start on ℋ₀ = 0 with S > 0, i.e. J̃ < 0 (falling in): S²/4 + p̄² = 2
        z0 = np.array([0.0, pb, 2.0 * np.sqrt(2.0 - pb * pb)])
        traj = integrate(red.reduced, z0, cfg.span, icfg)
        w = np.array([red.table.variables(z) for z in traj.states])
        with open(cfg.out / f"orbit_{i:02d}.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["tau", "Jt", "Gt", "theta"])
            for t, row in zip(traj.t, w):
                wr.writerow(["%.17g" % v for v in (t, *row)])
        d_plus = np.hypot(w[:, 0] - SQRT2, w[:, 1]).min()
        d_minus = np.hypot(w[:, 0] + SQRT2, w[:, 1]).min()
        summary.append({"pbar0": pb, "closest_plus": d_plus, "closest_minus": d_minus,
                        "H0_end": red.reduced.hamiltonian(traj.final)})
        print(f"pbar0 = {pb:+.3f}: closest to (+sqrt2,0) {d_plus:.2e}, to (-sqrt2,0) {d_minus:.2e}")

    # radial fall: upstairs stops at the guard, the blow-up flow does not
    x0 = np.array([1.0, 0.0, 0.0, 0.0])
    guard = EventGuard("rho", lambda x: np.hypot(x[0], x[1]) ** 0.5, cfg.rho_guard)
    up = integrate(b.system, x0, 5.0, IntegratorConfig(events=(guard,)))
    blow = instantiate("nbody_blowup", {"n": 2, "d": 2}).extras["blowup"]
    s0 = blow.from_phase(two_body_from_kepler(x0))
    down = integrate(blow.rhs, np.array(s0), 10.0, icfg)
    print(f"upstairs radial fall: {up.stop_reason} ({up.event}) at t = {up.t[-1]:.6f}")
    print(f"blow-up flow: {down.stop_reason} at tau = {down.t[-1]:.1f}, nu = {blow.nu(down.final):.6f}"
          f" (fixed point value sqrt(2 U) = {np.sqrt(2 * blow.potential(down.final[:4])):.6f})")

    with open(cfg.out / "summary.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(summary[0]))
        wr.writeheader()
        for r in summary:
            wr.writerow({k: "%.17g" % v for k, v in r.items()})
    return summary


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--span", type=float, default=TorusConfig.span)
    ap.add_argument("--out", type=Path, default=Path("out/collision_torus"))
    args = ap.parse_args(argv)
    run(TorusConfig(span=args.span, out=args.out))


if __name__ == "__main__":
    main()
