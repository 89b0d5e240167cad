"""Real-world smoke script for mobility lab."""

from mobility_lab.dynamics import (
    simulate_dynamics,
    steady_state_variance,
    theoretical_parent_child_slope,
)
from mobility_lab.estimators import igc, spousal_correlation
from mobility_lab.model import (
    FeedbackKind,
    FeedbackSpec,
    ModelParams,
    ObservationRule,
    PopulationConfig,
)
from mobility_lab.population import generate_population, observe

# 1. Closed forms
params = ModelParams(lam=0.8, rho=0.5, sigma_eps2=1.0)
print(f"Steady-state variance: {steady_state_variance(params):.6f}")  # 25/13
print(f"Parent-child slope: {theoretical_parent_child_slope(params):.3f}")  # 0.6

# 2. Dynamics with sorting that rises with inequality
feedback = FeedbackSpec(kind=FeedbackKind.LINEAR, intercept=0.3, slope=0.2)
for m in simulate_dynamics(params, feedback, 5, initial_variance=4.0):
    print(f"t={m.t} variance={m.variance:.3f} rho={m.rho_used:.3f}")

# 3. A small synthetic population
config = PopulationConfig(
    n_per_region_cohort=5000,
    regions=("madrid",),
    cohorts=(1960,),
    model=ModelParams(lam=0.6, rho=0.6, sigma_eps2=4.0),
    seed=1,
)
population = generate_population(config)
observed = observe(population, ObservationRule(measure_age=30))
print(f"IGC: {igc(observed['edu_years'], observed['father_edu_years']).value:.3f}")
latent = spousal_correlation(population, column="edu_latent")
print(f"Spousal correlation (latent): {latent.value:.3f}")  # close to 0.6
