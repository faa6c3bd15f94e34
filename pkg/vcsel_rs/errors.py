class VcselRsError(Exception):
    pass


class ValidationError(VcselRsError, ValueError):
    pass


class ConfigError(ValidationError):
    def __init__(self, key, message):
        self.key = key
        super().__init__("{}: {}".format(key, message))


class DegenerateGeometryError(ValidationError):
    pass


class PrecodingError(VcselRsError, RuntimeError):
    pass


class InfeasibleError(PrecodingError):
    pass


class RankError(PrecodingError):
    def __init__(self, users, message=None):
        self.users = tuple(int(u) for u in users)
        if message is None:
            message = "channel rows are linearly dependent, offending users: {}".format(list(self.users))
        super().__init__(message)


class AggregationError(VcselRsError, RuntimeError):
    pass


class ConsistencyError(VcselRsError, AssertionError):
    pass
