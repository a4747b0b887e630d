"""In-process stand-in for a prediction service that explains rejections.

Every query returns the thresholded class; rejected queries (class 0) also
carry a counterfactual when the generator converges.  A query and its
counterfactual together consume one unit of budget, and a query is charged
even if its counterfactual fails to generate.  The counter is the only
mutable state, so callers sharing an oracle across threads must serialise
access.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from cfx.counterfactuals import AnalyticGenerator, CfConfig, MccfGenerator
from cfx.errors import BudgetError, InputError
from cfx.targets import LinearTarget, SphereTarget


@dataclass(frozen=True, eq=False)
class OracleResponse:
    label: int
    counterfactual: Optional[np.ndarray] = None
    cf_converged: bool = False


def default_generator(target, cf_config=None):
    """Analytic projection for analytic targets, MCCF for networks."""
    if isinstance(target, (LinearTarget, SphereTarget)) and cf_config is None:
        return AnalyticGenerator()
    return MccfGenerator(cf_config or CfConfig())


class TargetOracle:
    def __init__(self, target, cf_generator=None, budget=None):
        if budget is not None and budget < 0:
            raise InputError("budget must be nonnegative")
        self.target = target
        self.cf_generator = cf_generator or default_generator(target)
        self.budget = budget
        self.queries_used = 0

    @property
    def input_dim(self):
        return self.target.input_dim

    @property
    def remaining(self):
        return None if self.budget is None else self.budget - self.queries_used

    def query(self, x):
        if self.budget is not None and self.queries_used >= self.budget:
            raise BudgetError(f"query budget of {self.budget} exhausted")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_dim,):
            raise InputError(f"expected a point of dimension {self.input_dim}")
        self.queries_used += 1
        label = int(self.target.predict_class(x))
        if label == 1:
            return OracleResponse(1)
        result = self.cf_generator(self.target, x)
        # never hand out a counterfactual the target itself would reject
        if result.converged and int(self.target.predict_class(result.w)) == 1:
            return OracleResponse(0, np.array(result.w, dtype=float), True)
        return OracleResponse(0, None, False)

    def batch_query(self, xs):
        """Query in order; on budget exhaustion raise :class:`BudgetError` with ``partial`` set."""
        out = []
        for x in xs:
            try:
                out.append(self.query(x))
            except BudgetError as exc:
                raise BudgetError(str(exc), partial=out) from None
        return out
