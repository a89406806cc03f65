"""Well-posedness, passivity and transfer functions of second-order boundary control systems."""
from .boundary import (Passivity, Verdict, decompose_boundary, decompose_sv, dual_system, extended_spec,
                       passivity_check, trace_transform, wellposedness_verdict)
from .model import (CoefficientFunction, GridFunction, SystemSpec, emit_spec, energy_norm, load_spec,
                    parse_spec, validate)
from .simulate import (InputSignal, discretize, energy_balance_residual, feedback_experiment,
                       wellposedness_ratio)
from .transfer import (assemble_bvp, evaluate_transfer, extended_transfer, feedthrough_limit,
                       passivity_inequality_residual, transfer_sweep)

__version__ = "0.1.0"
