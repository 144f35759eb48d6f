from pydantic_settings import BaseSettings
from pathlib import Path


class Settings(BaseSettings):
    """全局配置"""

    # 项目基础路径
    BASE_DIR: Path = Path(__file__).resolve().parent.parent.parent

    # 访存延迟（纳秒）
    SRAM_ACCESS_NS: float = 0.45
    DRAM_ACCESS_NS: float = 55.0

    # 内存表项与分块
    MSS_BYTES: int = 1500
    LRU_ENTRY_BYTES: int = 40
    OPC_ENTRY_BYTES: int = 42  # 比LRU多2字节存放分块计数

    # 拓扑与传输
    LINK_DELAY_MS: float = 5.0
    RECEIVERS_PER_ACCESS: int = 25
    BA_ATTACHMENT: int = 2

    # 流量缩放（相对原始统计的缩小倍数）
    DESK_SCALE: int = 1000

    # 参数扫描
    SWEEP_PARALLEL: int = 1
    OUTPUT_DIR: str = "./data/results"

    # 日志配置
    LOG_LEVEL: str = "INFO"
    LOG_PATH: str = "./logs"

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True


settings = Settings()
