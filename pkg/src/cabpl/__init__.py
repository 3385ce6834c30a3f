"""CRC-aided belief-propagation list decoding of polar codes.

Soft-in soft-out CRC decoders (trellis MAP and sum-product on the parity
check matrix) feed extrinsic information back into belief propagation on
permuted polar factor graphs, alongside the classical baselines (SC,
SC list, plain BP/BPL, ordered-statistics ML bound) and the offline
genetic search for good stage-order sets.
"""

from .bp import (LLR_MAX, DecodeResult, boxplus, bp_decode, identity_perm,
                 permute_bits, stage_bit_map)
from .channel import awgn_llrs, ebno_to_sigma, modulate
from .crc import (CrcSpec, Trellis, bcjr_decode, build_trellis, crc_check,
                  crc_encode, degree_distribution, derive_h, maxstar,
                  reduce_density, spa_decode)
from .errors import BudgetExhausted, CapabilityError, ConfigurationError
from .listdec import (ListOutcome, PermSet, bpl_decode, ca_bpl_decode,
                      ca_scl_decode, osd_bound, outer_generator, sc_decode)
from .permopt import (ConvergenceMatrix, FailureDataset, GaParams, GaResult,
                      collect_failures, evaluate_pool, genetic_select,
                      joint_failure, selected_perm_set)
from .polar import PolarCode, bhattacharyya_parameters, load_reliability, \
    polar_transform
from .sim import SimConfig, make_crc_spec, run

__version__ = "0.1.0"

__all__ = [
    "LLR_MAX", "DecodeResult", "boxplus", "bp_decode", "identity_perm",
    "permute_bits", "stage_bit_map", "awgn_llrs", "ebno_to_sigma", "modulate",
    "CrcSpec", "Trellis", "bcjr_decode", "build_trellis", "crc_check",
    "crc_encode", "degree_distribution", "derive_h", "maxstar",
    "reduce_density", "spa_decode", "BudgetExhausted", "CapabilityError",
    "ConfigurationError", "ListOutcome", "PermSet", "bpl_decode",
    "ca_bpl_decode", "ca_scl_decode", "osd_bound", "outer_generator",
    "sc_decode", "ConvergenceMatrix", "FailureDataset", "GaParams",
    "GaResult", "collect_failures", "evaluate_pool", "genetic_select",
    "joint_failure", "selected_perm_set", "PolarCode",
    "bhattacharyya_parameters", "load_reliability", "polar_transform",
    "SimConfig", "make_crc_spec", "run",
]
