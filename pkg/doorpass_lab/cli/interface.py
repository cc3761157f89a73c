import argparse
import dataclasses
import os
import sys
from typing import List, Optional

from ..core.config import (ExperimentConfig, apply_overrides, freeze_randomization, load_config,
                           validate_config)
from ..core.exceptions import ConfigError, DoorpassError
from ..core.usecases import EvaluationUseCases, ReplayUseCases, TrainingUseCases
from ..infra.settings import SettingsLoader


def resolve_config_path(name: str) -> str:
    """Путь как есть, иначе имя в каталоге конфигураций (с .json или без)"""
    if os.path.isfile(name):
        return name
    config_dir = SettingsLoader().get("CONFIG_DIR", "configs")
    for candidate in (os.path.join(config_dir, name), os.path.join(config_dir, f"{name}.json")):
        if os.path.isfile(candidate):
            return candidate
    return name


def build_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(resolve_config_path(args.config))
    else:
        cfg = ExperimentConfig(out_dir=SettingsLoader().get("OUT_DIR", "out"))
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    if args.freeze:
        cfg = dataclasses.replace(cfg, randomization=freeze_randomization(
            cfg.randomization, args.freeze.split(',')))
    values = {}
    if args.seed is not None:
        values["seed"] = args.seed
    if args.out:
        values["out_dir"] = args.out
    if args.run_name:
        values["run_name"] = args.run_name
    cfg = dataclasses.replace(cfg, **values)
    validate_config(cfg)
    return cfg


def parse_levels(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise ConfigError("--resistances", f"ожидался список чисел через запятую: {text}")


def main(argv: Optional[List[str]] = None):
    parser = argparse.ArgumentParser(
        description="Doorpass Lab - обучение открыванию и проходу дверей (учитель и ученик)")
    subparsers = parser.add_subparsers(dest='command', help='Доступные команды')

    # общие флаги запуска
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='JSON-конфигурация (путь или имя в configs/)')
    common.add_argument('--seed', type=int, help='Сид эксперимента')
    common.add_argument('--out', type=str, help='Корневой каталог артефактов')
    common.add_argument('--run-name', type=str, dest='run_name', help='Имя запуска')
    common.add_argument('--set', action='append', dest='overrides', default=[],
                        metavar='SECTION.KEY=VALUE', help='Переопределить ключ конфигурации')
    common.add_argument('--freeze', type=str,
                        help='Зафиксировать параметры рандомизации в середине диапазона')

    # train-teacher
    subparsers.add_parser('train-teacher', parents=[common], help='Обучить учителя (PPO)')

    # train-student
    student_parser = subparsers.add_parser('train-student', parents=[common],
                                           help='Дистиллировать ученика из учителя')
    student_parser.add_argument('--teacher', type=str, required=True, help='Чекпоинт учителя')
    student_parser.add_argument('--ablate', choices=['no-estimation', 'mlp'],
                                help='Абляция: без потерь оценки или MLP без рекуррентности')

    # eval
    eval_parser = subparsers.add_parser('eval', parents=[common],
                                        help='Успехи по типам дверей')
    eval_parser.add_argument('--ckpt', type=str, required=True, help='Чекпоинт политики')
    eval_parser.add_argument('--protocol', type=str, help='JSON-протокол оценки')

    # sweep
    sweep_parser = subparsers.add_parser('sweep', parents=[common],
                                         help='Развёртка сопротивления петли')
    sweep_parser.add_argument('--ckpt', type=str, required=True, help='Чекпоинт политики')
    sweep_parser.add_argument('--resistances', type=str,
                              help='Уровни в Н·м через запятую (по умолчанию из конфигурации)')

    # export-type-probs / export-hidden
    for name, help_text in (('export-type-probs', 'Вероятности типа двери по шагам'),
                            ('export-hidden', 'Скрытые состояния ученика с метками')):
        export_parser = subparsers.add_parser(name, parents=[common], help=help_text)
        export_parser.add_argument('--ckpt', type=str, required=True, help='Чекпоинт ученика')
        export_parser.add_argument('--episodes', type=int, help='Число эпизодов')

    # repeat
    repeat_parser = subparsers.add_parser('repeat', parents=[common],
                                          help='Повторяемость на одной двери с двух сторон')
    repeat_parser.add_argument('--ckpt', type=str, required=True, help='Чекпоинт политики')
    repeat_parser.add_argument('--trials', type=int, help='Испытаний на каждую сторону')
    repeat_parser.add_argument('--door', type=str, help='JSON-описание двери')

    # replay
    replay_parser = subparsers.add_parser('replay', parents=[common],
                                          help='Прогнать записанные действия через среду')
    replay_parser.add_argument('--actions', type=str, required=True,
                               help='Файл действий (JSON или CSV, 9 чисел на шаг)')
    replay_parser.add_argument('--env-index', type=int, default=0, dest='env_index',
                               help='Индекс среды (определяет рандомизацию эпизода)')
    replay_parser.add_argument('--record', type=str, help='Сохранить трассу в файл')
    replay_parser.add_argument('--expect', type=str,
                               help='Сравнить трассу с ранее записанной')

    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    try:
        cfg = build_config(args)
        if args.command == 'train-teacher':
            return handle_train_teacher(cfg)
        elif args.command == 'train-student':
            return handle_train_student(cfg, args.teacher, args.ablate)
        elif args.command == 'eval':
            return handle_eval(cfg, args.ckpt, args.protocol)
        elif args.command == 'sweep':
            return handle_sweep(cfg, args.ckpt, args.resistances)
        elif args.command == 'export-type-probs':
            return handle_export_type_probs(cfg, args.ckpt, args.episodes)
        elif args.command == 'export-hidden':
            return handle_export_hidden(cfg, args.ckpt, args.episodes)
        elif args.command == 'repeat':
            return handle_repeat(cfg, args.ckpt, args.trials, args.door)
        elif args.command == 'replay':
            return handle_replay(cfg, args.actions, args.env_index, args.record, args.expect)
    except DoorpassError as e:
        print(f"Ошибка [{e.kind}]: {e}")
        return 1
    except Exception as e:
        print(f"Ошибка: {str(e)}")
        return 1

    return 0


def handle_train_teacher(cfg: ExperimentConfig) -> int:
    result = TrainingUseCases.train_teacher(cfg)
    rates = result.final_eval
    print(f"Учитель обучен: {result.steps} шагов, набор наблюдений '{cfg.ppo.observation_set}'")
    print(f"Открытие ≥ {cfg.reward.theta_enough_deg:g}°: {rates.get('opened_enough', 0.0):.3f}, "
          f"проход: {rates.get('passed_through', 0.0):.3f}")
    print(f"Лучший чекпоинт: {result.best_path}")
    return 0


def handle_train_student(cfg: ExperimentConfig, teacher: str, ablate: Optional[str]) -> int:
    if ablate == 'no-estimation':
        cfg = dataclasses.replace(cfg, distill=dataclasses.replace(cfg.distill,
                                                                   no_estimation_loss=True))
    elif ablate == 'mlp':
        cfg = dataclasses.replace(cfg, distill=dataclasses.replace(cfg.distill,
                                                                   mlp_student=True))
    result = TrainingUseCases.train_student(cfg, teacher)
    last = result.curve[-1]
    print(f"Ученик обучен: {result.steps} шагов, имитация {last['imitation']:.4f}, "
          f"точность типа двери {last['door_type_accuracy']:.3f}")
    print(f"Чекпоинт: {result.path}")
    return 0


def handle_eval(cfg: ExperimentConfig, ckpt: str, protocol: Optional[str]) -> int:
    _, table = EvaluationUseCases.evaluate(cfg, ckpt, protocol)
    print(table)
    return 0


def handle_sweep(cfg: ExperimentConfig, ckpt: str, resistances: Optional[str]) -> int:
    levels = parse_levels(resistances) if resistances else list(cfg.eval.resistances)
    _, checks, table = EvaluationUseCases.sweep(cfg, ckpt, levels)
    print(table)
    for check in checks:
        mark = "OK" if check["passed"] else "FAIL"
        print(f"- [{mark}] {check['name']}: {check['detail']}")
    return 0


def handle_export_type_probs(cfg: ExperimentConfig, ckpt: str, episodes: Optional[int]) -> int:
    trace = EvaluationUseCases.export_type_probs(cfg, ckpt, episodes)
    summary = trace.summary()
    print(f"Экспортировано {len(trace.rows)} строк ({summary['episodes']} эпизодов)")
    print(f"Тип двери угадан в конце эпизода: {summary['final_accuracy']:.3f}; энтропия "
          f"до контакта {summary['entropy_pre_contact']:.3f}, в конце {summary['entropy_end']:.3f}")
    return 0


def handle_export_hidden(cfg: ExperimentConfig, ckpt: str, episodes: Optional[int]) -> int:
    export = EvaluationUseCases.export_hidden(cfg, ckpt, episodes)
    print(f"Экспортировано {export.hidden.shape[0]} скрытых состояний "
          f"размерности {export.hidden.shape[1]}")
    if export.late_accuracy is not None:
        print(f"Линейная разделимость push/pull в конце эпизода: {export.late_accuracy:.3f}")
    return 0


def handle_repeat(cfg: ExperimentConfig, ckpt: str, trials: Optional[int],
                  door: Optional[str]) -> int:
    result = EvaluationUseCases.repeatability(cfg, ckpt, trials, door)
    for side in result["sides"]:
        print(f"- {side['door_type']}: {side['passed']}/{side['trials']} проходов, "
              f"{side['opened']} открытий")
    print(f"Итого: {result['passed']}/{result['trials']} ({result['rate']:.1%})")
    return 0


def handle_replay(cfg: ExperimentConfig, actions: str, env_index: int, record: Optional[str],
                  expect: Optional[str]) -> int:
    result = ReplayUseCases.replay(cfg, actions, env_index, record, expect)
    print(f"Воспроизведено {result['steps']} шагов, θ в конце {result['final_theta']:.4f} рад")
    print(f"Трасса: {result['trace']}")
    if expect:
        print("Трасса совпадает с записью")
    return 0


if __name__ == "__main__":
    sys.exit(main())
