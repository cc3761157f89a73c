import functools
import time
from typing import Callable, Dict, Optional

from .logging_config import get_logger

RESULT_FIELDS = ("steps", "path", "best_path", "trials", "rate")


def _run_context(args, kwargs) -> Dict:
    """run_name и seed первого аргумента, похожего на ExperimentConfig"""
    for arg in (*args, *kwargs.values()):
        if hasattr(arg, 'run_name') and isinstance(getattr(arg, 'seed', None), int):
            return {'run_name': arg.run_name, 'seed': arg.seed}
    return {'run_name': 'unknown', 'seed': 'unknown'}


def _result_summary(result) -> Dict:
    if isinstance(result, dict):
        return {k: result[k] for k in RESULT_FIELDS if k in result}
    return {k: getattr(result, k) for k in RESULT_FIELDS if hasattr(result, k)}


def log_action(action_name: Optional[str] = None, verbose: bool = False):
    """
    Декоратор сценариев (обучение, оценка, экспорт, воспроизведение).

    Args:
        action_name: Имя в журнале (TRAIN_TEACHER/EVAL/REPLAY/...)
        verbose: Писать также аргументы вызова
    """

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            logger = get_logger('actions')
            action = action_name or func.__name__.upper()
            log_data = {'action': action, 'function': func.__name__,
                        **_run_context(args, kwargs)}
            if verbose:
                log_data['args'] = str(args)[:500]
                log_data['kwargs'] = str(kwargs)[:500]

            started = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                log_data.update(result='ERROR', error_type=type(e).__name__,
                                error_message=str(e),
                                elapsed_s=round(time.perf_counter() - started, 3))
                logger.error(f"{action} - ERROR: {log_data}")
                raise

            log_data.update(result='OK', elapsed_s=round(time.perf_counter() - started, 3),
                            **_result_summary(result))
            logger.info(f"{action} - OK: {log_data}")
            return result

        return wrapper

    return decorator
