from .metrics import (
    ImprovementStats,
    MetricPair,
    improvement_stats,
    kl_metric,
    mean_pair,
    mean_std,
    metric_pair,
    tv_metric,
)

__all__ = [
    'ImprovementStats',
    'MetricPair',
    'improvement_stats',
    'kl_metric',
    'mean_pair',
    'mean_std',
    'metric_pair',
    'tv_metric',
]
