class ForecastError(Exception):
    """Base class for data and model errors (CLI exit code 1)."""


class SourceError(ForecastError):
    pass


class UnknownTickerError(SourceError):
    def __init__(self, ticker):
        super().__init__(f"unknown ticker: {ticker!r}")
        self.ticker = ticker


class DatasetError(ForecastError):
    pass


class UndefinedCoefficientError(ForecastError):
    pass


class ConfigError(ForecastError):
    def __init__(self, field, message):
        super().__init__(f"config field {field!r}: {message}")
        self.field = field


class ModelFormatError(ForecastError):
    pass
