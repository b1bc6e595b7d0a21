"""Named synthetic models used by the CLI, the tests and the acceptance suite."""
from .choice_model import (HeterogeneitySpec, Offset, QuasilinearModel, UtilitySpec,
                           logit_model, make_synthetic, probit_model)


def quasilinear_logit():
    return logit_model(0.0, 1.0)


def quasilinear_probit():
    return probit_model(0.0, 1.0)


def income_effect():
    """Normal good: concave money utility with mildly dispersed money weights."""
    # 16 Hermite nodes already reproduce the 48-node probabilities to 1e-15
    return make_synthetic(UtilitySpec((0.0, 0.5), (1.0, 1.0), ("log1p", "log1p")),
                          HeterogeneitySpec("logit", 0.3, 0.5, 0.1, nodes=16))


def multinomial():
    """Three alternatives (J = 2) with heterogeneous money weights."""
    return make_synthetic(UtilitySpec((0.0, 0.3, 0.8), (1.0, 1.0, 1.0), ("linear",) * 3),
                          HeterogeneitySpec("logit", 1.0, 0.0, 0.5))


def ordered():
    """Two inside options of increasing quality; prices are ``(p, 2p)`` in use."""
    return make_synthetic(UtilitySpec((0.0, 1.0, 1.8), (1.0, 1.0, 1.0), ("linear",) * 3),
                          HeterogeneitySpec("logit", 0.7, 0.0, 0.3))


def strong_income_effect():
    """Money matters far more inside than outside: a subsidy is worth more than it costs."""
    return make_synthetic(UtilitySpec((0.0, 0.0), (0.2, 1.0), ("linear", "linear")),
                          HeterogeneitySpec("logit", 1.0, 0.0, 0.0))


def targeting_shape():
    """``q_1 = Lambda(-1 + 0.5 y - p)``: price sensitivity falls with income, rises with price."""
    return make_synthetic(UtilitySpec((0.0, -1.0), (0.5, 1.0), ("linear", "linear")),
                          HeterogeneitySpec("logit", 1.0, 0.0, 0.0))


def degenerate(delta=5.0):
    return QuasilinearModel([Offset("degenerate", delta)])


FIXTURES = {
    "quasilinear-logit": quasilinear_logit,
    "quasilinear-probit": quasilinear_probit,
    "income-effect": income_effect,
    "multinomial": multinomial,
    "ordered": ordered,
    "strong-income-effect": strong_income_effect,
    "targeting-shape": targeting_shape,
    "degenerate": degenerate,
}


def get_fixture(name):
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
