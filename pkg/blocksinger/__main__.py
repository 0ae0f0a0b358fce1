"""
blocksinger のコマンドラインインターフェース

使い方:
    python -m blocksinger <subcommand> [options]

実行ディレクトリ（run_dir）の構成:
    config.json           有効な設定
    dataset.json          学習に使ったデータセットの場所
    log.jsonl             学習ログ
    checkpoints/          epoch_XXXX.gsc と latest.gsc
    reports/              MCD レポートと合成音声
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .config.loader import dump_config, load_config, read_config_json
from .config.models import AppConfig, LoggingConfig
from .core.evaluation import McdReport, compare_reports, evaluate_mcd
from .core.inference import song_conditions, synthesize_song, voice_change
from .core.listening import DEFAULT_SONGS_PER_GENDER, export_listening_test
from .core.model import ModelParams
from .core.selfcheck import run_gradcheck_suite
from .core.trainer import LATEST_CHECKPOINT, Trainer, load_checkpoint
from .core.w1_probe import run_w1_sweep
from .audio.wav_io import write_wav
from .data.dataset import SPLIT_HELD_OUT, SPLIT_TRAIN, FeatureDataset, prepare_corpus, write_synthetic_dataset
from .data.synthetic import generate_synthetic_dataset
from .utils.errors import (
    EXIT_OK, EXIT_USAGE, AppError, ResourceError, SelfCheckError, ValidationError, exit_code_for,
    get_detailed_error_message
)
from .utils.logging_setup import initialize_logging

logger = logging.getLogger("blocksinger.cli")

CONFIG_NAME = "config.json"
DATASET_POINTER = "dataset.json"
CHECKPOINT_DIR = "checkpoints"
REPORT_DIR = "reports"


# ---------------------------------------------------------------------------
# 実行ディレクトリ
# ---------------------------------------------------------------------------

def _run_config(run_dir: Path) -> AppConfig:
    path = run_dir / CONFIG_NAME
    if not path.exists():
        raise ResourceError("実行ディレクトリに設定がありません", resource_type="run_dir", resource_path=str(path))
    return read_config_json(path)


def _run_dataset(run_dir: Path, data_dir: Optional[Path] = None) -> FeatureDataset:
    if data_dir is None:
        pointer = run_dir / DATASET_POINTER
        if not pointer.exists():
            raise ResourceError("データセットの場所が記録されていません", resource_type="run_dir",
                                resource_path=str(pointer))
        data_dir = Path(json.loads(pointer.read_text(encoding='utf-8'))["data_dir"])
    return FeatureDataset(data_dir)


def _run_params(run_dir: Path) -> ModelParams:
    path = run_dir / CHECKPOINT_DIR / LATEST_CHECKPOINT
    if not path.exists():
        raise ResourceError("チェックポイントが見つかりません", resource_type="checkpoint", resource_path=str(path))
    return load_checkpoint(path).params


def _model_labels(run_dirs: Sequence[Path]) -> List[str]:
    labels: List[str] = []
    for run_dir in run_dirs:
        label = run_dir.resolve().name
        while label in labels:
            label += "_"
        labels.append(label)
    return labels


# ---------------------------------------------------------------------------
# サブコマンド
# ---------------------------------------------------------------------------

def cmd_prepare(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    dataset = prepare_corpus(args.corpus_dir, args.out_dir, config.analysis, config.data, max_workers=args.workers)
    print(f"{args.out_dir}: {len(dataset.song_ids())}曲 (学習 {len(dataset.song_ids(SPLIT_TRAIN))}曲)")
    return EXIT_OK


def cmd_synthdata(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    synthetic = generate_synthetic_dataset(
        seed=args.seed, n_singers=args.singers, n_phonemes=args.phonemes, n_songs=args.songs,
        frames_per_song=args.frames, n_mcep=config.analysis.n_mcep, n_bap=config.analysis.n_bap,
        hop_s=config.analysis.frame_hop, noise_std=config.data.noise_std, silence_label=config.data.silence_label,
    )
    dataset = write_synthetic_dataset(args.out_dir, synthetic, config.data)
    print(f"{args.out_dir}: {len(dataset.song_ids())}曲, 歌手 {dataset.singers.size}人, 音素 {dataset.vocab.size}種")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    overrides: Dict[str, Any] = {"train": {"mode": args.mode, "epochs": args.epochs, "seed": args.seed}}
    config = load_config(args.config, overrides)
    dataset = FeatureDataset(args.data_dir)

    latest = run_dir / CHECKPOINT_DIR / LATEST_CHECKPOINT
    if args.resume and latest.exists():
        trainer = Trainer.from_checkpoint(dataset, config, latest, run_dir=run_dir)
    else:
        trainer = Trainer(dataset, config, run_dir=run_dir)

    dump_config(config, run_dir / CONFIG_NAME)
    (run_dir / DATASET_POINTER).write_text(
        json.dumps({"data_dir": str(Path(args.data_dir).resolve())}, ensure_ascii=False, indent=2),
        encoding='utf-8')

    _, log = trainer.train(progress=not args.no_progress)
    curve = log.mcd_curve()
    final = f", 学習MCD {curve[-1][1]:.4f} dB" if curve else ""
    print(f"{run_dir}: {trainer.epoch}エポック, {trainer.step}ステップ{final}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    config = _run_config(run_dir)
    dataset = _run_dataset(run_dir, args.data_dir)
    params = _run_params(run_dir)

    song = dataset.song_data(args.song_id)
    conditions = song_conditions(song)
    target = args.singer or dataset.singers.ids[song.singer_index]
    if args.singer:
        try:
            index = dataset.singers.index_of(args.singer)
        except ValueError:
            raise ValidationError(f"歌手が見つかりません: {args.singer}", field="singer", value=args.singer,
                                  module="inference")
        conditions = voice_change(conditions, index, dataset.singers.size)

    seed = config.inference.seed if args.seed is None else args.seed
    waveform = synthesize_song(params, conditions, dataset.norm_stats, config.analysis,
                               block_len=config.data.block_len, hop=config.data.block_hop, seed=seed,
                               zero_noise=config.inference.zero_noise,
                               vuv_threshold=config.inference.vuv_threshold, silence_id=dataset.vocab.silence_id)
    out = Path(args.out) if args.out else run_dir / REPORT_DIR / f"{args.song_id}_{target}.wav"
    write_wav(waveform, out)
    print(out)
    return EXIT_OK


def cmd_eval_mcd(args: argparse.Namespace) -> int:
    run_dirs = [Path(p) for p in args.run_dirs]
    dataset = FeatureDataset(args.data_dir)
    reports: List[McdReport] = []
    for run_dir, label in zip(run_dirs, _model_labels(run_dirs)):
        config = _run_config(run_dir)
        report = evaluate_mcd(_run_params(run_dir), dataset, config.analysis, config.data, config.inference,
                              split=args.split, model_label=label, source=args.source, max_songs=args.max_songs)
        report.to_json(run_dir / REPORT_DIR / f"mcd_{args.split}_{args.source}.json")
        reports.append(report)

    with pd.option_context("display.float_format", "{:.4f}".format):
        print(compare_reports(reports).to_string())
    return EXIT_OK


def cmd_export_listening(args: argparse.Namespace) -> int:
    run_dirs = [Path(p) for p in args.run_dirs]
    config = _run_config(run_dirs[0])
    dataset = _run_dataset(run_dirs[0], args.data_dir)
    models: List[Tuple[str, ModelParams]] = [(label, _run_params(run_dir))
                                            for run_dir, label in zip(run_dirs, _model_labels(run_dirs))]
    manifest = export_listening_test(models, dataset, args.out_dir, config.analysis, config.data,
                                     config.inference, split=args.split, seed=args.seed,
                                     songs_per_gender=args.songs_per_gender)
    print(f"{args.out_dir}: {len(manifest)}ファイル")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    config = load_config(args.config, {"probe": {"seed": args.seed}})
    table = run_gradcheck_suite(config.probe)
    with pd.option_context("display.float_format", "{:.3e}".format):
        print(table.to_string(index=False))
    if not table["passed"].all():
        failed = ", ".join(table.loc[~table["passed"], "check"])
        raise SelfCheckError(f"勾配チェックに失敗しました: {failed}")
    return EXIT_OK


def cmd_w1probe(args: argparse.Namespace) -> int:
    config = load_config(args.config, {"probe": {"seed": args.seed}})
    sweep = run_w1_sweep(config.probe)
    with pd.option_context("display.float_format", "{:.6f}".format):
        print(sweep.table.to_string(index=False))
    print(f"spearman={sweep.spearman:.4f} identical_gap={sweep.identical_gap:.3e}")
    if not sweep.passed:
        raise SelfCheckError(f"W1プローブに失敗しました (spearman={sweep.spearman:.4f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# 引数解析
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    """全サブコマンドの引数パーサーを作る"""
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=None, help="ログレベル（設定ファイルより優先）")
    common.add_argument("--log-file", type=Path, default=None, help="ログファイルのパス")

    parser = argparse.ArgumentParser(prog="blocksinger", description="ブロック単位 ConvLSTM WGAN による歌声合成",
                                     formatter_class=fmt)
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("prepare", parents=[common], formatter_class=fmt,
                              help="歌唱コーパスを分析してデータセットに変換する")
    p.add_argument("corpus_dir", type=Path, help="<歌手>/sing, <歌手>/read を含むコーパス")
    p.add_argument("out_dir", type=Path, help="出力データセットディレクトリ")
    p.add_argument("--config", type=Path, default=None, help="設定ファイル（YAML/JSON/TOML）")
    p.add_argument("--workers", type=int, default=None, help="並列ワーカー数（未指定時は自動）")
    p.set_defaults(func=cmd_prepare)

    p = subparsers.add_parser("synthdata", parents=[common], formatter_class=fmt,
                              help="決定的な合成データセットを生成する")
    p.add_argument("out_dir", type=Path, help="出力データセットディレクトリ")
    p.add_argument("--seed", type=int, default=0, help="乱数シード")
    p.add_argument("--singers", type=int, default=4, help="歌手数")
    p.add_argument("--phonemes", type=int, default=6, help="無音を含む音素数")
    p.add_argument("--songs", type=int, default=8, help="曲数")
    p.add_argument("--frames", type=int, default=512, help="1曲あたりのフレーム数")
    p.add_argument("--config", type=Path, default=None, help="設定ファイル（YAML/JSON/TOML）")
    p.set_defaults(func=cmd_synthdata)

    p = subparsers.add_parser("train", parents=[common], formatter_class=fmt, help="モデルを学習する")
    p.add_argument("data_dir", type=Path, help="データセットディレクトリ")
    p.add_argument("run_dir", type=Path, help="実行ディレクトリ")
    p.add_argument("--config", type=Path, default=None, help="設定ファイル（TOML/JSON/YAML）")
    p.add_argument("--mode", choices=["wgan", "gan"], default=None, help="学習モード（設定ファイルより優先）")
    p.add_argument("--epochs", type=int, default=None, help="エポック数（設定ファイルより優先）")
    p.add_argument("--seed", type=int, default=None, help="乱数シード（設定ファイルより優先）")
    p.add_argument("--resume", action="store_true", help="latest.gsc があれば学習を再開する")
    p.add_argument("--no-progress", action="store_true", help="進捗バーを表示しない")
    p.set_defaults(func=cmd_train)

    p = subparsers.add_parser("synth", parents=[common], formatter_class=fmt, help="1曲を合成する")
    p.add_argument("run_dir", type=Path, help="実行ディレクトリ")
    p.add_argument("song_id", help="曲ID")
    p.add_argument("--singer", default=None, help="声質変換先の歌手ID（未指定時は元の歌手）")
    p.add_argument("--out", type=Path, default=None, help="出力WAV（未指定時は run_dir/reports/）")
    p.add_argument("--data-dir", type=Path, default=None, help="データセット（未指定時は学習時のもの）")
    p.add_argument("--seed", type=int, default=None, help="ノイズの乱数シード（未指定時は設定値）")
    p.set_defaults(func=cmd_synth)

    p = subparsers.add_parser("eval-mcd", parents=[common], formatter_class=fmt,
                              help="MCD を計算してモデルを比較する")
    p.add_argument("run_dirs", nargs="+", type=Path, help="実行ディレクトリ（複数可）")
    p.add_argument("data_dir", type=Path, help="データセットディレクトリ")
    p.add_argument("--split", choices=[SPLIT_TRAIN, SPLIT_HELD_OUT], default=SPLIT_HELD_OUT, help="評価する分割")
    p.add_argument("--source", choices=["features", "audio"], default="features",
                   help="特徴量を直接比較するか、合成音声を再分析するか")
    p.add_argument("--max-songs", type=int, default=None, help="評価する曲数の上限")
    p.set_defaults(func=cmd_eval_mcd)

    p = subparsers.add_parser("export-listening", parents=[common], formatter_class=fmt,
                              help="聴取試験の刺激を書き出す")
    p.add_argument("run_dirs", nargs="+", type=Path, help="実行ディレクトリ（複数可）")
    p.add_argument("out_dir", type=Path, help="出力ディレクトリ")
    p.add_argument("--data-dir", type=Path, default=None, help="データセット（未指定時は最初のモデルのもの）")
    p.add_argument("--split", default=SPLIT_HELD_OUT, help="刺激の曲を選ぶ分割")
    p.add_argument("--seed", type=int, default=0, help="曲と変換先の選択の乱数シード")
    p.add_argument("--songs-per-gender", type=int, default=DEFAULT_SONGS_PER_GENDER, help="性別ごとに選ぶ曲数")
    p.set_defaults(func=cmd_export_listening)

    p = subparsers.add_parser("gradcheck", parents=[common], formatter_class=fmt,
                              help="勾配を中心差分と比較する")
    p.add_argument("--config", type=Path, default=None, help="設定ファイル（probe セクション）")
    p.add_argument("--seed", type=int, default=0, help="乱数シード")
    p.set_defaults(func=cmd_gradcheck)

    p = subparsers.add_parser("w1probe", parents=[common], formatter_class=fmt,
                              help="クリティックの推定ギャップを厳密な W1 距離と比較する")
    p.add_argument("--config", type=Path, default=None, help="設定ファイル（probe セクション）")
    p.add_argument("--seed", type=int, default=0, help="乱数シード")
    p.set_defaults(func=cmd_w1probe)

    return parser


def _logging_config(args: argparse.Namespace) -> LoggingConfig:
    """ログ設定（コマンドラインの指定 > 設定ファイルの logging セクション > 既定値）"""
    config = LoggingConfig()
    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            config = load_config(config_path).logging
        except AppError:
            # 設定ファイルの誤りはサブコマンド側で報告する
            pass
    updates = {}
    if args.log_file is not None:
        updates["log_file"] = args.log_file
    if args.log_level is not None:
        updates["log_level"] = args.log_level
    return config.model_copy(update=updates)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    コマンドラインを実行する

    Args:
        argv: 引数（None は sys.argv[1:]）

    Returns:
        終了コード（0 成功, 1 使い方・設定, 2 データ, 3 数値・セルフチェック）
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    initialize_logging(_logging_config(args))

    try:
        return args.func(args)
    except AppError as e:
        message = get_detailed_error_message(e)
        logger.error(message)
        print(message, file=sys.stderr)
        return exit_code_for(e)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
