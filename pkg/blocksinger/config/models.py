"""
設定モデルを定義するモジュール

このモジュールでは、特徴量分析・データセット・モデル・学習・推論・セルフチェックに関する
設定をPydanticを使用して定義しています。
"""

from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class AnalysisConfig(BaseModel):
    """
    ボコーダー分析の設定モデル

    波形からフレーム単位の特徴量を計算する際のパラメータを含みます。
    """
    sample_rate: int = Field(16000, description="サンプリング周波数（Hz）")
    frame_hop: float = Field(0.005, description="フレームシフト（秒）")
    window_length: int = Field(1024, description="分析窓長（サンプル）")
    fft_size: int = Field(1024, description="FFT点数")
    n_mels: int = Field(40, description="メルバンド数")
    n_mcep: int = Field(25, description="メルケプストラム次数（係数0を含む）")
    n_bap: int = Field(4, description="帯域非周期性成分の帯域数")
    f0_min: float = Field(50.0, description="f0探索範囲の下限（Hz）")
    f0_max: float = Field(600.0, description="f0探索範囲の上限（Hz）")
    voicing_threshold: float = Field(0.3, description="有声判定に用いる自己相関ピークの閾値")
    silence_db: float = Field(-60.0, description="無音とみなすフレームパワー（dBFS）")
    bap_min_hz: float = Field(125.0, description="非周期性帯域の最低境界周波数（Hz）")
    log_floor: float = Field(1e-8, description="対数メルエネルギーの下限値")

    @field_validator('sample_rate', 'window_length', 'fft_size', 'n_mels', 'n_mcep', 'n_bap')
    @classmethod
    def validate_positive_int(cls, v, info):
        if v <= 0:
            raise ValueError(f"{info.field_name}は正の数でなければなりません")
        return v

    @field_validator('frame_hop')
    @classmethod
    def validate_frame_hop(cls, v):
        if v <= 0:
            raise ValueError("frame_hopは正の数でなければなりません")
        return v

    @model_validator(mode='after')
    def validate_geometry(self):
        hop = self.frame_hop * self.sample_rate
        if abs(hop - round(hop)) > 1e-6:
            raise ValueError(f"frame_hop × sample_rate が整数になりません: {hop}")
        if self.window_length < self.hop_samples:
            raise ValueError("window_lengthはフレームシフト以上でなければなりません")
        if self.fft_size < self.window_length:
            raise ValueError("fft_sizeはwindow_length以上でなければなりません")
        if self.n_mcep > self.n_mels:
            raise ValueError("n_mcepはn_mels以下でなければなりません")
        if not 0 < self.f0_min < self.f0_max < self.sample_rate / 2:
            raise ValueError("f0探索範囲が不正です")
        return self

    @property
    def hop_samples(self) -> int:
        return int(round(self.frame_hop * self.sample_rate))

    @property
    def feature_dim(self) -> int:
        """出力特徴量の次元数（メルケプストラム + 非周期性 + 有声フラグ）"""
        return self.n_mcep + self.n_bap + 1

    def dim_labels(self) -> List[str]:
        return ([f"mcep_{i}" for i in range(self.n_mcep)]
                + [f"bap_{i}" for i in range(self.n_bap)]
                + ["vuv"])


class DataConfig(BaseModel):
    """
    データセットに関する設定モデル
    """
    block_len: int = Field(128, description="ブロック長（フレーム）")
    block_hop: int = Field(64, description="ブロックシフト（フレーム）")
    held_out_fraction: float = Field(0.2, description="評価用に取り分ける曲の割合")
    split_seed: int = Field(0, description="学習・評価分割の乱数シード")
    silence_label: str = Field("sil", description="無音を表す音素ラベル")
    singer_genders: Dict[str, str] = Field(default_factory=dict, description="歌手フォルダ名と性別（M/F）の対応")
    noise_std: float = Field(0.02, description="合成データの観測ノイズ標準偏差（正規化前）")

    @field_validator('block_len', 'block_hop')
    @classmethod
    def validate_positive(cls, v, info):
        if v <= 0:
            raise ValueError(f"{info.field_name}は正の数でなければなりません")
        return v

    @field_validator('held_out_fraction')
    @classmethod
    def validate_fraction(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError("held_out_fractionは0以上1未満でなければなりません")
        return v

    @field_validator('singer_genders')
    @classmethod
    def validate_genders(cls, v):
        for name, gender in v.items():
            if gender not in ("M", "F", "U"):
                raise ValueError(f"歌手 {name} の性別タグが不正です: {gender}")
        return v

    @model_validator(mode='after')
    def validate_hop(self):
        if self.block_hop > self.block_len:
            raise ValueError("block_hopはblock_len以下でなければなりません")
        return self


class GeneratorConfig(BaseModel):
    """
    生成器（ConvLSTM エンコーダ・デコーダ）の設定モデル
    """
    encoder_channels: List[int] = Field([32, 64, 128, 256, 512], description="エンコーダ各層の出力チャネル数")
    decoder_channels: List[int] = Field([256, 128, 64, 32, 32], description="デコーダ各層の出力チャネル数")
    kernel_size: int = Field(3, description="入力→状態畳み込みのカーネル幅")
    state_kernel_size: int = Field(3, description="状態→状態畳み込みのカーネル幅")
    stride: int = Field(2, description="各層の時間方向ストライド")
    n_noise: int = Field(4, description="ノイズ条件チャネル数")
    carry_state: bool = Field(True, description="ブロック間でConvLSTM状態を引き継ぐかどうか")
    f0_ref: float = Field(220.0, description="対数f0正規化の基準周波数（Hz）")
    f0_octaves: float = Field(2.0, description="対数f0のクランプ範囲（オクターブ）")

    @field_validator('kernel_size', 'state_kernel_size')
    @classmethod
    def validate_odd_kernel(cls, v, info):
        if v < 1 or v % 2 == 0:
            raise ValueError(f"{info.field_name}は正の奇数でなければなりません")
        return v

    @field_validator('encoder_channels', 'decoder_channels')
    @classmethod
    def validate_channels(cls, v, info):
        if not v or any(c <= 0 for c in v):
            raise ValueError(f"{info.field_name}は正の整数の空でないリストでなければなりません")
        return v

    @model_validator(mode='after')
    def validate_depth(self):
        if len(self.encoder_channels) != len(self.decoder_channels):
            raise ValueError("エンコーダとデコーダの層数が一致しません")
        if self.stride < 1:
            raise ValueError("strideは1以上でなければなりません")
        return self

    @property
    def n_layers(self) -> int:
        return len(self.encoder_channels)


class CriticConfig(BaseModel):
    """
    クリティック（エンコーダ + スカラー出力）の設定モデル
    """
    encoder_channels: List[int] = Field([32, 64, 128, 256, 512], description="エンコーダ各層の出力チャネル数")
    kernel_size: int = Field(3, description="畳み込みカーネル幅")
    stride: int = Field(2, description="各層の時間方向ストライド")

    @field_validator('kernel_size')
    @classmethod
    def validate_odd_kernel(cls, v):
        if v < 1 or v % 2 == 0:
            raise ValueError("kernel_sizeは正の奇数でなければなりません")
        return v

    @field_validator('encoder_channels')
    @classmethod
    def validate_channels(cls, v):
        if not v or any(c <= 0 for c in v):
            raise ValueError("encoder_channelsは正の整数の空でないリストでなければなりません")
        return v


class TrainConfig(BaseModel):
    """
    敵対的学習の設定モデル
    """
    mode: Literal["wgan", "gan"] = Field("wgan", description="学習モード")
    n_critic: int = Field(5, description="生成器1ステップあたりのクリティック更新回数")
    clip: float = Field(0.01, description="クリティック重みのクリップ値")
    learning_rate: float = Field(5e-5, description="RMSPropの学習率")
    rho: float = Field(0.9, description="RMSPropの減衰率")
    epsilon: float = Field(1e-8, description="RMSPropの数値安定化項")
    batch_size: int = Field(8, description="1ステップあたりの曲セグメント数")
    blocks_per_segment: int = Field(4, description="打ち切りBPTTのブロック数")
    epochs: int = Field(750, description="エポック数")
    seed: int = Field(0, description="乱数シード")
    recon_weight: float = Field(1.0, description="生成器損失に加えるL1再構成項の重み（0で純粋な敵対的損失）")
    dtype: Literal["float32", "float64"] = Field("float32", description="学習時の浮動小数点型")
    mcd_every: int = Field(1, description="学習データMCDを計算するエポック間隔（0で無効）")
    mcd_max_songs: int = Field(4, description="エポックごとのMCD計算に使う曲数の上限")
    checkpoint_every: int = Field(1, description="チェックポイントを書き出すエポック間隔")
    keep_checkpoints: int = Field(3, description="保持するエポック別チェックポイント数（0で全保持）")

    @field_validator('n_critic', 'batch_size', 'blocks_per_segment', 'checkpoint_every')
    @classmethod
    def validate_at_least_one(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name}は1以上でなければなりません")
        return v

    @field_validator('epochs', 'mcd_every', 'mcd_max_songs', 'keep_checkpoints')
    @classmethod
    def validate_non_negative(cls, v, info):
        if v < 0:
            raise ValueError(f"{info.field_name}は0以上でなければなりません")
        return v

    @field_validator('clip', 'learning_rate', 'epsilon')
    @classmethod
    def validate_positive(cls, v, info):
        if v <= 0:
            raise ValueError(f"{info.field_name}は正の数でなければなりません")
        return v

    @field_validator('rho')
    @classmethod
    def validate_rho(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError("rhoは0以上1未満でなければなりません")
        return v

    @field_validator('recon_weight')
    @classmethod
    def validate_recon(cls, v):
        if v < 0:
            raise ValueError("recon_weightは0以上でなければなりません")
        return v


class InferenceConfig(BaseModel):
    """
    推論（全曲合成）の設定モデル
    """
    seed: int = Field(0, description="ノイズチャネルの乱数シード")
    zero_noise: bool = Field(False, description="ノイズチャネルを0にするかどうか")
    vuv_threshold: float = Field(0.5, description="有声フラグの二値化閾値")


class ProbeConfig(BaseModel):
    """
    セルフチェック（勾配チェック・W1プローブ）の設定モデル
    """
    shifts: List[float] = Field([0.5, 1.0, 2.0, 4.0], description="W1プローブのシフト量")
    n_samples: int = Field(64, description="各分布のサンプル数")
    spread: float = Field(0.0, description="サンプルの標準偏差（0で点質量）")
    hidden: int = Field(16, description="1次元クリティックの隠れ層ユニット数")
    clip: float = Field(0.05, description="1次元クリティックの重みクリップ値")
    learning_rate: float = Field(1e-3, description="1次元クリティックの学習率")
    steps: int = Field(300, description="1次元クリティックの更新回数")
    min_spearman: float = Field(0.9, description="推定ギャップとW1の順位相関の合格下限")
    seed: int = Field(0, description="乱数シード")
    fd_epsilon: float = Field(1e-5, description="中心差分の刻み幅")
    fd_tolerance: float = Field(1e-4, description="勾配チェックの許容相対誤差")
    generator_tolerance: float = Field(1e-3, description="生成器全体の勾配チェックの許容相対誤差")
    generator_coords: int = Field(50, description="生成器全体で抽出する座標数")

    @model_validator(mode='after')
    def validate_probe(self):
        if not self.shifts or any(s <= 0 for s in self.shifts):
            raise ValueError("shiftsは正の値の空でないリストでなければなりません")
        if self.n_samples < 1 or self.hidden < 1 or self.steps < 1:
            raise ValueError("n_samples, hidden, stepsは1以上でなければなりません")
        if self.clip <= 0:
            raise ValueError("clipは正の数でなければなりません")
        return self


class LoggingConfig(BaseModel):
    """
    ロギングに関する設定モデル
    """
    log_file: Optional[Path] = Field(None, description="ログファイルのパス")
    log_level: str = Field("INFO", description="ログレベル")


class AppConfig(BaseModel):
    """
    アプリケーション全体の設定モデル
    """
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    critic: CriticConfig = Field(default_factory=CriticConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    inference: InferenceConfig = Field(default_factory=InferenceConfig)
    probe: ProbeConfig = Field(default_factory=ProbeConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @model_validator(mode='after')
    def validate_block_geometry(self):
        factor = self.generator.stride ** self.generator.n_layers
        if self.data.block_len % factor != 0:
            raise ValueError(
                f"block_len ({self.data.block_len}) はストライドの層数乗 ({factor}) で割り切れなければなりません"
            )
        return self
