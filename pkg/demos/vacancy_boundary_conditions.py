"""
Vacancy equilibria under four boundary conditions
=================================================

Relax a vacancy in the triangular EAM crystal with clamped, periodic,
linearised-exterior and coupled atomistic/continuum boundaries, then compare
each against its own high-resolution reference.
"""

from latticebc.harness import StudyConfig, fit_rate, run_study

# a short ladder keeps this under a minute; the CLI default ladder goes to K=42
config = StudyConfig(
    defect="vacancy",
    schemes=["dir", "per", "lin", "ac"],
    k_ladder=[6, 9, 13, 19],
    k_ref=60,
    lin_outer=120,
)

records = run_study(config)
for r in records:
    print(f"{r.scheme:>4s} K={r.K:<3d} N={r.N:<5d} geometry {r.geom_error:.2e}  energy {r.energy_error:.2e}")

# fitted exponents in N
print()
for scheme in config.schemes:
    rows = [r for r in records if r.scheme == scheme]
    geo = fit_rate(rows, "geom_error").slope
    print(f"{scheme:>4s}: geometry error ~ N^{geo:+.2f}")

# clamped and periodic cells share the N^-1/2 rate; the linearised exterior
# and the coupled scheme converge faster, each towards its own limit problem
