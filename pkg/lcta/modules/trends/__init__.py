from ._trends import (
    AbilityTrend,
    AbilityTrendEstimation,
    ItemSource,
    TrendKind,
    group_mean_trend,
)
