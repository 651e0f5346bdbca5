from .synthetic import SynthConfig, SyntheticCohort, empirical_car, generate
