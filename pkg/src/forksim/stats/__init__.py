"""Statistics for replicated experiments: RCBD ANOVA, Duncan's test, OLS."""

from .anova import AnovaError, AnovaRow, AnovaTable, anova_from_ss, anova_rcbd, f_pvalue, format_p
from .dmrt import DmrtError, DmrtGrouping, dmrt, duncan_range
from .regression import DegenerateFit, RegressionFit, linear_regression

__all__ = [
    "AnovaError", "AnovaRow", "AnovaTable", "anova_from_ss", "anova_rcbd", "f_pvalue", "format_p",
    "DmrtError", "DmrtGrouping", "dmrt", "duncan_range",
    "DegenerateFit", "RegressionFit", "linear_regression",
]
