"""
ロギングユーティリティのユニットテスト
"""

import logging
import logging.handlers

import pytest

from blocksinger.config.models import LoggingConfig
from blocksinger.utils.logging_setup import initialize_logging
from blocksinger.utils.logging_utils import JsonlWriter, format_duration, log_execution_time


@pytest.fixture
def restore_root_logger():
    """テスト中に追加されたハンドラを閉じて取り除き、レベルを元に戻す"""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield root
    for handler in root.handlers[:]:
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)


class TestInitializeLogging:
    """initialize_logging のテスト"""

    def test_console_only(self, restore_root_logger, monkeypatch):
        """ログファイルを指定しない場合はコンソールハンドラのみになることを確認"""
        monkeypatch.delenv("BLOCKSINGER_LOG_LEVEL", raising=False)
        root = initialize_logging(LoggingConfig(log_level="WARNING"))
        assert root.level == logging.WARNING
        assert len(root.handlers) == 1
        assert isinstance(root.handlers[0], logging.StreamHandler)

    def test_log_file(self, restore_root_logger, tmp_path, monkeypatch):
        """ログファイルにメッセージが書き込まれることを確認"""
        monkeypatch.delenv("BLOCKSINGER_LOG_LEVEL", raising=False)
        monkeypatch.delenv("LOGS_DIR", raising=False)
        log_file = tmp_path / "logs" / "app.log"
        root = initialize_logging(LoggingConfig(log_level="INFO", log_file=log_file))
        assert any(isinstance(h, logging.handlers.RotatingFileHandler) for h in root.handlers)
        logging.getLogger("blocksinger.test").info("学習を開始します")
        for handler in root.handlers:
            handler.flush()
        assert "学習を開始します" in log_file.read_text(encoding="utf-8")

    def test_env_overrides_level(self, restore_root_logger, monkeypatch):
        """環境変数でログレベルが上書きされることを確認"""
        monkeypatch.setenv("BLOCKSINGER_LOG_LEVEL", "debug")
        assert initialize_logging(LoggingConfig(log_level="ERROR")).level == logging.DEBUG

    def test_logs_dir(self, restore_root_logger, tmp_path, monkeypatch):
        """LOGS_DIR が指定されている場合はそのディレクトリにログを置くことを確認"""
        monkeypatch.setenv("LOGS_DIR", str(tmp_path / "elsewhere"))
        initialize_logging(LoggingConfig(log_file="run.log"))
        assert (tmp_path / "elsewhere" / "run.log").exists()


@pytest.mark.parametrize("seconds,expected", [(1.5, "1.500秒"), (90, "1.5分"), (5400, "1.5時間")])
def test_format_duration(seconds, expected):
    assert format_duration(seconds) == expected


def test_log_execution_time(caplog):
    """実行時間がログに記録され、戻り値がそのまま返ることを確認"""
    logger = logging.getLogger("blocksinger.test.timing")

    @log_execution_time(logger, level=logging.INFO)
    def work(x):
        return x + 1

    with caplog.at_level(logging.INFO, logger="blocksinger.test.timing"):
        assert work(1) == 2
    assert "work の実行時間" in caplog.text


class TestJsonlWriter:
    """JsonlWriter のテスト"""

    def test_append_and_read(self, tmp_path):
        """レコードが1行ずつ追記されることを確認"""
        writer = JsonlWriter(tmp_path / "log.jsonl")
        writer.write({"step": 1, "critic_loss": -0.5})
        writer.write({"step": 2, "critic_loss": -0.25})
        assert writer.read_all() == [{"step": 1, "critic_loss": -0.5}, {"step": 2, "critic_loss": -0.25}]
        assert len((tmp_path / "log.jsonl").read_text(encoding="utf-8").splitlines()) == 2

    def test_truncate(self, tmp_path):
        """append=False で既存のログが消去されることを確認"""
        JsonlWriter(tmp_path / "log.jsonl").write({"step": 1})
        assert JsonlWriter(tmp_path / "log.jsonl", append=False).read_all() == []
        assert JsonlWriter(tmp_path / "log.jsonl").read_all() == []

    def test_rejects_nan(self, tmp_path):
        """NaN を含むレコードは書き込めないことを確認"""
        with pytest.raises(ValueError):
            JsonlWriter(tmp_path / "log.jsonl").write({"loss": float("nan")})
