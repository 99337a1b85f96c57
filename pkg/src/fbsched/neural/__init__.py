from .data import (
    DegenerateRangeError,
    TrainingSet,
    gen_dataset,
    normalize,
    paper_costs,
    paper_ranges,
    read_dataset,
    write_dataset,
)
from .lm import LmConfig, TrainingReport, holdout_errors, residual_jacobian, sweep_hidden, train_lm
from .modelio import load_model, save_model
from .network import (
    MlpParams,
    OutOfEnvelopeWarning,
    counted_forward,
    flop_count,
    forward,
    forward_normalized,
    sigmoid,
)
