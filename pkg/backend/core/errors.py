class CacheValidationError(ValueError):
    """分块标识、分块或内存配置不合法"""


class NoVictimError(LookupError):
    """没有可以驱逐的对象"""


class TopologyError(ValueError):
    """拓扑不连通、角色不合法或路径为空"""


class WorkloadError(ValueError):
    """流量参数不可行"""


class SimConfigError(ValueError):
    """仿真配置不一致（如源站不可达）"""


class SweepRunError(RuntimeError):
    """参数扫描中某次运行失败"""

    def __init__(self, key: str, cause: BaseException):
        super().__init__(f"扫描运行失败 [{key}]: {cause}")
        self.key = key
        self.cause = cause
