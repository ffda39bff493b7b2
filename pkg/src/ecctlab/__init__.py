"""Desk-scale channel-decoding lab: a transformer decoder with parity-masked
attention, a hand-written backward pass, AWGN training, and norm-based
generalization-bound calculators with executable verification of the
provable properties.
"""

from .bounds import (
    BoundReport, Dims, GridSpec, LipschitzSet, alpha_t, eta, gen_bound,
    gen_bound_awgn, lipschitz_dense, lipschitz_qk_sparse, lipschitz_sparse,
    log_covering_number, log_covering_number_aggregate, log_lambda_t,
)
from .channel import (
    ChannelSample, NoiseModel, bpsk_modulate, preprocess, q_function,
    tail_probability, transmit,
)
from .codes import (
    CodeError, GeneratorMatrix, ParityCheckMatrix, ParseError, bch_31_16,
    derive_generator, hamming_7_4, parse_alist, parse_dense,
    random_regular_code, serialize_alist, serialize_dense, syndrome,
)
from .masking import (
    MaskMatrix, SparsityProfile, build_mask, contraction_factor, full_mask,
    sparsity,
)
from .model import (
    ECCTConfig, ECCTWeights, ForwardCache, GradientSet, NormBudget,
    attention_layer, backward, decide, embed, forward, init_weights,
    load_checkpoint, measure_norm_budget, power_iteration, save_checkpoint,
)
from .training import (
    AdamState, ExperimentRecord, TrainConfig, adam_step, bce_loss, ber_loss,
    evaluate, generalization_gap, make_dataset, train,
)
from .verification import (
    VerificationReport, check_finite_difference, check_frobenius_contraction,
    check_gradient_sparsity, check_gradient_sparsity_control,
    check_lemma_equivalence, check_lipschitz_empirical,
)

__version__ = "0.1.0"
