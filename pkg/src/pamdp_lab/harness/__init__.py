"""Instance generation, certification, experiments and the CLI."""
from .certify import Certificate, certify_assumption
from .experiment import ExperimentConfig, fit_exponent, run_experiment, verify_regret
from .generate import InstanceSpec, PlantedSimplex, generate_instance
from .rng import stream

__all__ = ["Certificate", "certify_assumption", "ExperimentConfig", "fit_exponent", "run_experiment",
           "verify_regret", "InstanceSpec", "PlantedSimplex", "generate_instance", "stream"]
