"""Geo-indistinguishable location obfuscation and its anonymization over a grid."""
from .anonymity import (AnonymityReport, asymptotic_kappa, bayes_vulnerability,
                        dataset_k_anonymity, delete_for_k, empirical_kappa, kappa_alpha,
                        kappa_sup, min_deletion_fraction)
from .estimators import LocationDeletion, OptimalObfuscator, PlanarLaplaceObfuscator
from .experiments import ExperimentConfig, SweepRow, convergence_study, emit_heatmap, run_sweep
from .grid import (Grid, IngestError, UserLocations, build_grid, empirical_prior,
                   ingest_checkins, mixture_prior, region_distance, synth_population,
                   validate_prior)
from .linprog import LinearProgram, assemble_lp, export_lp, import_solution, parse_lp
from .mechanism import (BOTTOM, GeoIndReport, GeoIndViolation, Mechanism, ObfuscatedDataset,
                        apply_postprocess, build_planar_laplacian, identity_mechanism,
                        new_mechanism, obfuscate_dataset, output_distribution, quality_loss,
                        verify_geo_ind)
from .optimal import OptimalResult, SolverError, build_optql
from .simplex import LPSolution, simplex, solve_lp
from .spanner import SpannerGraph, build_spanner

__version__ = "0.1.0"
