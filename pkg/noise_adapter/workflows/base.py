from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
import logging
import time

from ..errors import NoiseAdapterError
from .context import RunContext

logger = logging.getLogger(__name__)


@dataclass
class StageResult:
    '''Result from stage execution'''
    success: bool = True
    output: Any = None
    errors: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    duration: float = 0.0
    exception: Optional[BaseException] = None


class BaseStage(ABC):
    '''Base class for pipeline stages'''

    name: str
    description: str

    @abstractmethod
    def run(self, context: RunContext, **params) -> StageResult:
        '''Execute the stage against a run directory'''

    def __call__(self, context: RunContext, **params) -> StageResult:
        logger.info(f"Stage {self.name}: {self.description}")
        start = time.perf_counter()
        try:
            result = self.run(context, **params)
        except NoiseAdapterError as e:
            logger.error(f"Stage {self.name} failed: {e}")
            result = StageResult(success=False, errors=[str(e)], exception=e)
        result.duration = time.perf_counter() - start
        context.record_duration(self.name, result.duration, result.success)
        if result.success:
            logger.info(f"Stage {self.name} completed in {result.duration:.2f}s")
        return result


class StageCollection:
    '''Registry of stages by name'''

    def __init__(self, *stages: BaseStage):
        self.stages = {stage.name: stage for stage in stages}

    def get_stage(self, name: str) -> Optional[BaseStage]:
        return self.stages.get(name)

    def names(self) -> List[str]:
        return list(self.stages)

    def execute(self, stage_name: str, context: RunContext, **params) -> StageResult:
        stage = self.get_stage(stage_name)
        if not stage:
            return StageResult(success=False, errors=[f"Stage {stage_name} not found"])
        return stage(context, **params)


@dataclass
class PipelineStep:
    '''Individual step in a pipeline'''
    name: str
    stage: str
    params: Dict[str, Any] = field(default_factory=dict)
    depends_on: List[str] = field(default_factory=list)


@dataclass
class PipelineResult:
    '''Result from pipeline execution'''
    success: bool
    results: Dict[str, StageResult] = field(default_factory=dict)
    errors: List[str] = field(default_factory=list)
    duration: float = 0.0

    @property
    def failed_result(self) -> Optional[StageResult]:
        return next((r for r in self.results.values() if not r.success), None)


class Pipeline:
    '''Ordered steps over a stage collection'''

    def __init__(self, stages: StageCollection, steps: List[PipelineStep]):
        self.stages = stages
        self.steps = steps

    def _check_dependencies(self, step: PipelineStep, results: Dict[str, StageResult]) -> bool:
        return all(dep in results and results[dep].success for dep in step.depends_on)

    def execute(self, context: RunContext) -> PipelineResult:
        '''Run steps in order; stop after the first failure'''
        start = time.perf_counter()
        results: Dict[str, StageResult] = {}
        errors: List[str] = []
        for step in self.steps:
            if not self._check_dependencies(step, results):
                errors.append(f"Step {step.name} skipped: unmet dependencies {step.depends_on}")
                continue
            result = self.stages.execute(step.stage, context, **step.params)
            results[step.name] = result
            if not result.success:
                errors.extend(f"Step {step.name} failed: {e}" for e in result.errors)
                break
        context.write_metrics()
        return PipelineResult(
            success=not errors,
            results=results,
            errors=errors,
            duration=time.perf_counter() - start,
        )
