"""Model extraction from counterfactual explanations.

Trains surrogate networks and halfspace polytopes from an oracle that returns
predictions together with closest counterfactuals, and provides numerical
checks of the accompanying convergence, coverage and clamping guarantees.
"""

from cfx.errors import (BudgetError, CfxError, ConfigError, FormatError, InputError, NumericError,
                        PreconditionError, ResourceError)

__version__ = "0.1.0"

__all__ = ["BudgetError", "CfxError", "ConfigError", "FormatError", "InputError", "NumericError",
           "PreconditionError", "ResourceError", "__version__"]
