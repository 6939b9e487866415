from .base import BaseStage, Pipeline, PipelineResult, PipelineStep, StageCollection, StageResult
from .context import RunContext
from .stages import default_stages, full_pipeline

__all__ = [
    'BaseStage',
    'Pipeline',
    'PipelineResult',
    'PipelineStep',
    'StageCollection',
    'StageResult',
    'RunContext',
    'default_stages',
    'full_pipeline',
]
